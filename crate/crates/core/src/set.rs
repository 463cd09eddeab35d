//! Uncertainty-set descriptions and their conic representations.
//!
//! A [`SetExpr`] is an intersection of primitive constraints on `x in R^d`.
//! [`canonicalize`] lowers it to `{x | exists u: F x + G u + h in K}`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::error::{RermError, Result};
use crate::sparse::CscMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "wire::Primitive", into = "wire::Primitive")]
pub enum Primitive {
    /// `M x = m`, `M` given by rows.
    AffineEq { mat: Vec<Vec<f64>>, rhs: Vec<f64> },
    /// `M x <= m`.
    AffineIneq { mat: Vec<Vec<f64>>, rhs: Vec<f64> },
    /// `l <= x <= u`; infinite entries are unconstrained.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `|x_J - center| <= radius` over `J = range` (all coordinates if `None`).
    NormBall {
        norm: Norm,
        center: Vec<f64>,
        radius: f64,
        range: Option<Range<usize>>,
    },
    /// `|x_J - center|_2^2 <= radius` over an arbitrary index list.
    SumSquaresBall {
        indices: Vec<usize>,
        center: Vec<f64>,
        radius: f64,
    },
    /// `x_J = values`.
    FixCoords { indices: Vec<usize>, values: Vec<f64> },
}

impl Primitive {
    pub fn ball(norm: Norm, center: Vec<f64>, radius: f64) -> Self {
        Primitive::NormBall {
            norm,
            center,
            radius,
            range: None,
        }
    }

    pub fn ball_on(norm: Norm, range: Range<usize>, center: Vec<f64>, radius: f64) -> Self {
        Primitive::NormBall {
            norm,
            center,
            radius,
            range: Some(range),
        }
    }

    pub fn fix(indices: Vec<usize>, values: Vec<f64>) -> Self {
        Primitive::FixCoords { indices, values }
    }

    fn ball_coords(range: &Option<Range<usize>>, d: usize) -> Range<usize> {
        range.clone().unwrap_or(0..d)
    }

    fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(RermError::InvalidSet(msg));
        let in_range = |j: usize| j < d;
        match self {
            Primitive::AffineEq { mat, rhs } | Primitive::AffineIneq { mat, rhs } => {
                if mat.len() != rhs.len() {
                    return Err(RermError::dim("affine constraint rows", mat.len(), rhs.len()));
                }
                if let Some(r) = mat.iter().find(|r| r.len() != d) {
                    return Err(RermError::dim("affine constraint columns", d, r.len()));
                }
                if !mat.iter().flatten().chain(rhs).all(|v| v.is_finite()) {
                    return bad("affine constraint has non-finite data".into());
                }
            }
            Primitive::Box { lower, upper } => {
                if lower.len() != d || upper.len() != d {
                    return Err(RermError::dim("box bounds", d, lower.len().min(upper.len())));
                }
                for (j, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return bad(format!("box bound {j} is invalid"));
                    }
                    if l > u {
                        return bad(format!("box bound {j}: lower {l} exceeds upper {u}"));
                    }
                }
            }
            Primitive::NormBall {
                center, radius, range, ..
            } => {
                let r = Self::ball_coords(range, d);
                if r.is_empty() || r.end > d {
                    return bad(format!("ball range {r:?} outside [0, {d})"));
                }
                if center.len() != r.len() {
                    return Err(RermError::dim("ball center", r.len(), center.len()));
                }
                if !(*radius >= 0.0 && radius.is_finite()) || !center.iter().all(|v| v.is_finite()) {
                    return bad(format!("ball radius {radius} or center is invalid"));
                }
            }
            Primitive::SumSquaresBall {
                indices,
                center,
                radius,
            } => {
                if indices.is_empty() || !indices.iter().all(|&j| in_range(j)) {
                    return bad(format!("sum-of-squares indices {indices:?} outside [0, {d})"));
                }
                if center.len() != indices.len() {
                    return Err(RermError::dim("sum-of-squares center", indices.len(), center.len()));
                }
                if !(*radius >= 0.0 && radius.is_finite()) || !center.iter().all(|v| v.is_finite()) {
                    return bad(format!("sum-of-squares radius {radius} or center is invalid"));
                }
            }
            Primitive::FixCoords { indices, values } => {
                if !indices.iter().all(|&j| in_range(j)) {
                    return bad(format!("fixed indices {indices:?} outside [0, {d})"));
                }
                if indices.len() != values.len() {
                    return Err(RermError::dim("fixed values", indices.len(), values.len()));
                }
                if !values.iter().all(|v| v.is_finite()) {
                    return bad("fixed value is not finite".into());
                }
            }
        }
        Ok(())
    }

    /// Direct membership test with absolute tolerance `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let d = x.len();
        match self {
            Primitive::AffineEq { mat, rhs } => mat
                .iter()
                .zip(rhs)
                .all(|(r, m)| (dot(r, x) - m).abs() <= tol),
            Primitive::AffineIneq { mat, rhs } => mat.iter().zip(rhs).all(|(r, m)| dot(r, x) <= m + tol),
            Primitive::Box { lower, upper } => (0..d).all(|j| x[j] >= lower[j] - tol && x[j] <= upper[j] + tol),
            Primitive::NormBall {
                norm,
                center,
                radius,
                range,
            } => {
                let r = Self::ball_coords(range, d);
                let diff = x[r].iter().zip(center).map(|(a, c)| a - c);
                let n = match norm {
                    Norm::L1 => diff.map(f64::abs).sum(),
                    Norm::L2 => diff.map(|v| v * v).sum::<f64>().sqrt(),
                    Norm::Inf => diff.map(f64::abs).fold(0.0, f64::max),
                };
                n <= radius + tol
            }
            Primitive::SumSquaresBall {
                indices,
                center,
                radius,
            } => {
                let s: f64 = indices.iter().zip(center).map(|(&j, c)| (x[j] - c).powi(2)).sum();
                s <= radius + tol
            }
            Primitive::FixCoords { indices, values } => {
                indices.iter().zip(values).all(|(&j, v)| (x[j] - v).abs() <= tol)
            }
        }
    }

    fn bounded_coords(&self, d: usize, out: &mut [bool]) {
        match self {
            Primitive::AffineEq { mat, .. } | Primitive::AffineIneq { mat, .. } => {
                for r in mat {
                    for (j, v) in r.iter().enumerate() {
                        out[j] |= *v != 0.0;
                    }
                }
            }
            Primitive::Box { lower, upper } => {
                for j in 0..d {
                    out[j] |= lower[j].is_finite() && upper[j].is_finite();
                }
            }
            Primitive::NormBall { range, .. } => {
                for j in Self::ball_coords(range, d) {
                    out[j] = true;
                }
            }
            Primitive::SumSquaresBall { indices, .. } | Primitive::FixCoords { indices, .. } => {
                for &j in indices {
                    out[j] = true;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetExpr {
    pub dim: usize,
    pub constraints: Vec<Primitive>,
}

impl SetExpr {
    /// All of `R^d`.
    pub fn whole(dim: usize) -> Self {
        SetExpr {
            dim,
            constraints: Vec::new(),
        }
    }

    pub fn with(mut self, p: Primitive) -> Self {
        self.constraints.push(p);
        self
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        SetExpr::whole(lower.len()).with(Primitive::Box { lower, upper })
    }

    pub fn ball(norm: Norm, center: Vec<f64>, radius: f64) -> Self {
        SetExpr::whole(center.len()).with(Primitive::ball(norm, center, radius))
    }

    /// The singleton `{x}`.
    pub fn point(x: &[f64]) -> Self {
        SetExpr::whole(x.len()).with(Primitive::fix((0..x.len()).collect(), x.to_vec()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(RermError::InvalidSet("dimension must be at least 1".into()));
        }
        self.constraints.iter().try_for_each(|p| p.validate(self.dim))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim && self.constraints.iter().all(|p| p.contains(x, tol))
    }

    /// `{-x : x in self}`.
    pub fn negated(&self) -> SetExpr {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let constraints = self
            .constraints
            .iter()
            .map(|p| match p {
                Primitive::AffineEq { mat, rhs } => Primitive::AffineEq {
                    mat: mat.iter().map(|r| neg(r)).collect(),
                    rhs: rhs.clone(),
                },
                Primitive::AffineIneq { mat, rhs } => Primitive::AffineIneq {
                    mat: mat.iter().map(|r| neg(r)).collect(),
                    rhs: rhs.clone(),
                },
                Primitive::Box { lower, upper } => Primitive::Box {
                    lower: neg(upper),
                    upper: neg(lower),
                },
                Primitive::NormBall {
                    norm,
                    center,
                    radius,
                    range,
                } => Primitive::NormBall {
                    norm: *norm,
                    center: neg(center),
                    radius: *radius,
                    range: range.clone(),
                },
                Primitive::SumSquaresBall {
                    indices,
                    center,
                    radius,
                } => Primitive::SumSquaresBall {
                    indices: indices.clone(),
                    center: neg(center),
                    radius: *radius,
                },
                Primitive::FixCoords { indices, values } => Primitive::FixCoords {
                    indices: indices.clone(),
                    values: neg(values),
                },
            })
            .collect();
        SetExpr {
            dim: self.dim,
            constraints,
        }
    }

    /// Plain Euclidean ball over all coordinates, if that is the whole set.
    pub fn as_full_ball(&self) -> Option<(&[f64], f64)> {
        match self.constraints.as_slice() {
            [Primitive::NormBall {
                norm: Norm::L2,
                center,
                radius,
                range,
            }] if range.as_ref().is_none_or(|r| *r == (0..self.dim)) => Some((center, *radius)),
            _ => None,
        }
    }
}

pub fn intersect(a: &SetExpr, b: &SetExpr) -> Result<SetExpr> {
    if a.dim != b.dim {
        return Err(RermError::dim("set intersection", a.dim, b.dim));
    }
    let mut constraints = a.constraints.clone();
    constraints.extend(b.constraints.iter().cloned());
    Ok(SetExpr { dim: a.dim, constraints })
}

/// Warnings for coordinates that no primitive bounds. Only a necessary
/// condition for compactness; a set with no warnings may still be unbounded.
pub fn validate_compactness_hint(s: &SetExpr) -> Vec<String> {
    let mut bounded = vec![false; s.dim];
    for p in &s.constraints {
        if p.validate(s.dim).is_ok() {
            p.bounded_coords(s.dim, &mut bounded);
        }
    }
    bounded
        .iter()
        .enumerate()
        .filter(|(_, b)| !**b)
        .map(|(j, _)| format!("coordinate {j} is not bounded by any constraint"))
        .collect()
}

/// `{x | exists u: F x + G u + h in K}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicRep {
    pub f: CscMatrix,
    pub g: CscMatrix,
    pub h: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicRep {
    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_aux(&self) -> usize {
        self.g.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.h.len()
    }
}

#[derive(Default)]
struct RepBuilder {
    f: Vec<(usize, usize, f64)>,
    g: Vec<(usize, usize, f64)>,
    h: Vec<f64>,
    cones: Vec<Cone>,
    aux: usize,
    block: usize,
}

impl RepBuilder {
    fn row(&mut self, x: &[(usize, f64)], u: &[(usize, f64)], h: f64) {
        let i = self.h.len();
        self.f.extend(x.iter().map(|&(j, v)| (i, j, v)));
        self.g.extend(u.iter().map(|&(j, v)| (i, j, v)));
        self.h.push(h);
        self.block += 1;
    }

    fn close(&mut self, cone: impl Fn(usize) -> Cone) {
        if self.block > 0 {
            self.cones.push(cone(self.block));
        }
        self.block = 0;
    }
}

pub fn canonicalize(s: &SetExpr) -> Result<ConicRep> {
    s.validate()?;
    let d = s.dim;
    let mut rb = RepBuilder::default();
    for p in &s.constraints {
        match p {
            Primitive::AffineEq { mat, rhs } | Primitive::AffineIneq { mat, rhs } => {
                for (r, m) in mat.iter().zip(rhs) {
                    let x: Vec<_> = r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, -v)).collect();
                    rb.row(&x, &[], *m);
                }
                if matches!(p, Primitive::AffineEq { .. }) {
                    rb.close(Cone::zero);
                } else {
                    rb.close(Cone::nonneg);
                }
            }
            Primitive::Box { lower, upper } => {
                box_rows(&mut rb, (0..d).map(|j| (j, lower[j], upper[j])));
            }
            Primitive::NormBall {
                norm,
                center,
                radius,
                range,
            } => {
                let r = Primitive::ball_coords(range, d);
                match norm {
                    Norm::L2 => soc_rows(&mut rb, r.zip(center.iter().copied()), *radius),
                    Norm::Inf => box_rows(&mut rb, r.zip(center).map(|(j, c)| (j, c - radius, c + radius))),
                    Norm::L1 => {
                        // |x_j - c_j| <= u_k, sum(u) <= radius
                        let base = rb.aux;
                        rb.aux += r.len();
                        for (k, (j, c)) in r.clone().zip(center).enumerate() {
                            rb.row(&[(j, -1.0)], &[(base + k, 1.0)], *c);
                            rb.row(&[(j, 1.0)], &[(base + k, 1.0)], -c);
                        }
                        rb.close(Cone::nonneg);
                        let u: Vec<_> = (0..r.len()).map(|k| (base + k, -1.0)).collect();
                        rb.row(&[], &u, *radius);
                        rb.close(Cone::nonneg);
                    }
                }
            }
            Primitive::SumSquaresBall {
                indices,
                center,
                radius,
            } => soc_rows(&mut rb, indices.iter().copied().zip(center.iter().copied()), radius.sqrt()),
            Primitive::FixCoords { indices, values } => {
                for (&j, v) in indices.iter().zip(values) {
                    rb.row(&[(j, -1.0)], &[], *v);
                }
                rb.close(Cone::zero);
            }
        }
    }
    let m = rb.h.len();
    Ok(ConicRep {
        f: CscMatrix::from_triplets(m, d, &rb.f),
        g: CscMatrix::from_triplets(m, rb.aux, &rb.g),
        h: rb.h,
        cones: rb.cones,
    })
}

/// Lower-bound rows first, then upper-bound rows; infinite bounds skipped.
fn box_rows(rb: &mut RepBuilder, bounds: impl Iterator<Item = (usize, f64, f64)> + Clone) {
    for (j, l, _) in bounds.clone() {
        if l.is_finite() {
            rb.row(&[(j, 1.0)], &[], -l);
        }
    }
    for (j, _, u) in bounds {
        if u.is_finite() {
            rb.row(&[(j, -1.0)], &[], u);
        }
    }
    rb.close(Cone::nonneg);
}

/// `(radius, c_J - x_J) in SOC`.
fn soc_rows(rb: &mut RepBuilder, coords: impl Iterator<Item = (usize, f64)>, radius: f64) {
    rb.row(&[], &[], radius);
    for (j, c) in coords {
        rb.row(&[(j, -1.0)], &[], c);
    }
    rb.close(Cone::soc);
}

mod wire {
    //! JSON layout of primitives. Box bounds use `null` for infinity.

    use serde::{Deserialize, Serialize};

    use super::Norm;

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
    pub enum Primitive {
        AffineEq {
            #[serde(rename = "M")]
            mat: Vec<Vec<f64>>,
            m: Vec<f64>,
        },
        AffineIneq {
            #[serde(rename = "M")]
            mat: Vec<Vec<f64>>,
            m: Vec<f64>,
        },
        Box {
            l: Vec<Option<f64>>,
            u: Vec<Option<f64>>,
        },
        Ball1 {
            #[serde(default, skip_serializing_if = "Option::is_none")]
            range: Option<[usize; 2]>,
            center: Vec<f64>,
            radius: f64,
        },
        Ball2 {
            #[serde(default, skip_serializing_if = "Option::is_none")]
            range: Option<[usize; 2]>,
            center: Vec<f64>,
            radius: f64,
        },
        BallInf {
            #[serde(default, skip_serializing_if = "Option::is_none")]
            range: Option<[usize; 2]>,
            center: Vec<f64>,
            radius: f64,
        },
        SumSquares {
            indices: Vec<usize>,
            center: Vec<f64>,
            radius: f64,
        },
        Fix {
            indices: Vec<usize>,
            values: Vec<f64>,
        },
    }

    impl TryFrom<Primitive> for super::Primitive {
        type Error = String;

        fn try_from(w: Primitive) -> Result<Self, String> {
            let range = |r: Option<[usize; 2]>| -> Result<_, String> {
                match r {
                    Some([a, b]) if a >= b => Err(format!("empty range [{a}, {b})")),
                    Some([a, b]) => Ok(Some(a..b)),
                    None => Ok(None),
                }
            };
            let ball = |norm, r, center, radius| -> Result<_, String> {
                Ok(super::Primitive::NormBall {
                    norm,
                    center,
                    radius,
                    range: range(r)?,
                })
            };
            let lo = |v: Vec<Option<f64>>| v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect();
            let hi = |v: Vec<Option<f64>>| v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
            Ok(match w {
                Primitive::AffineEq { mat, m } => super::Primitive::AffineEq { mat, rhs: m },
                Primitive::AffineIneq { mat, m } => super::Primitive::AffineIneq { mat, rhs: m },
                Primitive::Box { l, u } => super::Primitive::Box {
                    lower: lo(l),
                    upper: hi(u),
                },
                Primitive::Ball1 { range, center, radius } => ball(Norm::L1, range, center, radius)?,
                Primitive::Ball2 { range, center, radius } => ball(Norm::L2, range, center, radius)?,
                Primitive::BallInf { range, center, radius } => ball(Norm::Inf, range, center, radius)?,
                Primitive::SumSquares {
                    indices,
                    center,
                    radius,
                } => super::Primitive::SumSquaresBall {
                    indices,
                    center,
                    radius,
                },
                Primitive::Fix { indices, values } => super::Primitive::FixCoords { indices, values },
            })
        }
    }

    impl From<super::Primitive> for Primitive {
        fn from(p: super::Primitive) -> Self {
            let fin = |v: Vec<f64>| v.into_iter().map(|x| x.is_finite().then_some(x)).collect();
            match p {
                super::Primitive::AffineEq { mat, rhs } => Primitive::AffineEq { mat, m: rhs },
                super::Primitive::AffineIneq { mat, rhs } => Primitive::AffineIneq { mat, m: rhs },
                super::Primitive::Box { lower, upper } => Primitive::Box {
                    l: fin(lower),
                    u: fin(upper),
                },
                super::Primitive::NormBall {
                    norm,
                    center,
                    radius,
                    range,
                } => {
                    let range = range.map(|r| [r.start, r.end]);
                    match norm {
                        Norm::L1 => Primitive::Ball1 { range, center, radius },
                        Norm::L2 => Primitive::Ball2 { range, center, radius },
                        Norm::Inf => Primitive::BallInf { range, center, radius },
                    }
                }
                super::Primitive::SumSquaresBall {
                    indices,
                    center,
                    radius,
                } => Primitive::SumSquares {
                    indices,
                    center,
                    radius,
                },
                super::Primitive::FixCoords { indices, values } => Primitive::Fix { indices, values },
            }
        }
    }
}

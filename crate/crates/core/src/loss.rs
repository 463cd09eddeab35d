//! Scalar loss atoms and their conic epigraphs.

use serde::{Deserialize, Serialize};

use crate::cone::{check_membership, Cone};
use crate::error::{RermError, Result};
use crate::program::{Affine, ConeRows};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// `|z|^p` for `p` in {1, 2}.
    Pnorm { p: u32 },
    Huber { delta: f64 },
    Hinge,
    Logistic,
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonotonicityClass {
    NonIncreasing,
    EvenNondecreasing,
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Pnorm { p } if p != 1 && p != 2 => Err(RermError::InvalidLoss(format!("p = {p}, only 1 and 2 are supported"))),
            LossSpec::Huber { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(RermError::InvalidLoss(format!("huber delta {delta} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn class(&self) -> MonotonicityClass {
        match self {
            LossSpec::Pnorm { .. } | LossSpec::Huber { .. } => MonotonicityClass::EvenNondecreasing,
            LossSpec::Hinge | LossSpec::Logistic | LossSpec::Exponential => MonotonicityClass::NonIncreasing,
        }
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        match *self {
            LossSpec::Pnorm { p: 1 } => z.abs(),
            LossSpec::Pnorm { .. } => z * z,
            LossSpec::Huber { delta } => {
                if z.abs() <= delta {
                    0.5 * z * z
                } else {
                    delta * z.abs() - 0.5 * delta * delta
                }
            }
            LossSpec::Hinge => (1.0 - z).max(0.0),
            LossSpec::Logistic => {
                if z < 0.0 {
                    -z + z.exp().ln_1p()
                } else {
                    (-z).exp().ln_1p()
                }
            }
            LossSpec::Exponential => (-z).exp(),
        }
    }

    /// Auxiliary scalars used by [`emit_epigraph`].
    pub fn num_aux(&self) -> usize {
        match self {
            LossSpec::Huber { .. } => 3,
            LossSpec::Logistic => 2,
            _ => 0,
        }
    }
}

/// Rows that hold exactly when `f(z) <= c`, for some value of the
/// auxiliaries in columns `aux .. aux + spec.num_aux()`.
pub fn emit_epigraph(spec: &LossSpec, z: &Affine, c: &Affine, aux: usize) -> Vec<ConeRows> {
    emit_epigraph_scaled(spec, z, c, aux, 1.0)
}

/// [`emit_epigraph`] with the quadratic cones balanced for residuals of
/// magnitude around `scale`. The feasible set is the same for every
/// `scale > 0`; only the conditioning changes.
pub fn emit_epigraph_scaled(spec: &LossSpec, z: &Affine, c: &Affine, aux: usize, scale: f64) -> Vec<ConeRows> {
    let k = scale;
    let nonneg = |rows: Vec<Affine>| ConeRows {
        cone: Cone::nonneg(rows.len()),
        rows,
    };
    let neg_z = z.clone().scaled(-1.0);
    match *spec {
        LossSpec::Pnorm { p: 1 } => vec![nonneg(vec![c.clone().add(&neg_z), c.clone().add(z)])],
        LossSpec::Pnorm { .. } => {
            // z^2 <= c  <=>  |(c/k - k, 2z)| <= c/k + k
            vec![ConeRows {
                cone: Cone::soc(3),
                rows: vec![c.clone().scaled(1.0 / k).plus(k), c.clone().scaled(1.0 / k).plus(-k), z.clone().scaled(2.0)],
            }]
        }
        LossSpec::Huber { delta } => {
            // min { u^2 / 2 + delta v : u + v >= |z|, v >= 0 }
            let (u, v, s) = (Affine::var(aux), Affine::var(aux + 1), Affine::var(aux + 2));
            let uv = u.clone().add(&v);
            vec![
                nonneg(vec![
                    uv.clone().add(&neg_z),
                    uv.add(z),
                    v.clone(),
                    c.clone().add(&s.clone().scaled(-1.0)).add(&v.scaled(-delta)),
                ]),
                // u^2 <= 2 s  <=>  |(s/k - k/2, u)| <= s/k + k/2
                ConeRows {
                    cone: Cone::soc(3),
                    rows: vec![s.clone().scaled(1.0 / k).plus(0.5 * k), s.scaled(1.0 / k).plus(-0.5 * k), u],
                },
            ]
        }
        LossSpec::Hinge => vec![nonneg(vec![c.clone(), c.clone().add(z).plus(-1.0)])],
        LossSpec::Logistic => {
            // exp(-c) <= a, exp(-z - c) <= b, a + b <= 1
            let (a, b) = (Affine::var(aux), Affine::var(aux + 1));
            let neg_c = c.clone().scaled(-1.0);
            vec![
                ConeRows {
                    cone: Cone::Exponential,
                    rows: vec![neg_c.clone(), Affine::constant(1.0), a.clone()],
                },
                ConeRows {
                    cone: Cone::Exponential,
                    rows: vec![neg_c.add(&neg_z), Affine::constant(1.0), b.clone()],
                },
                nonneg(vec![Affine::constant(1.0).add(&a.scaled(-1.0)).add(&b.scaled(-1.0))]),
            ]
        }
        LossSpec::Exponential => vec![ConeRows {
            cone: Cone::Exponential,
            rows: vec![neg_z, Affine::constant(1.0), c.clone()],
        }],
    }
}

/// Check `f(z) <= c` through the epigraph rows alone: the rows are
/// evaluated at `(z, c)` with the smallest admissible auxiliaries and each
/// block is tested for cone membership with tolerance `tol`.
pub fn epigraph_holds(spec: &LossSpec, z: f64, c: f64, tol: f64) -> bool {
    let aux: Vec<f64> = match *spec {
        LossSpec::Huber { delta } => {
            let u = z.abs().min(delta);
            vec![u, z.abs() - u, 0.5 * u * u]
        }
        LossSpec::Logistic => vec![(-c).exp(), (-z - c).exp()],
        _ => vec![],
    };
    let point: Vec<f64> = [z, c].into_iter().chain(aux).collect();
    emit_epigraph(spec, &Affine::var(0), &Affine::var(1), 2)
        .iter()
        .all(|blk| {
            let v: Vec<f64> = blk.rows.iter().map(|r| r.eval(&point)).collect();
            check_membership(blk.cone, &v, tol).unwrap_or(false)
        })
}

/// Rows `y_i x_i` with all-zero targets, for classification losses.
pub fn classification_transform(x: &[Vec<f64>], labels: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if x.len() != labels.len() {
        return Err(RermError::dim("labels", x.len(), labels.len()));
    }
    let mut out = Vec::with_capacity(x.len());
    for (i, (row, &y)) in x.iter().zip(labels).enumerate() {
        if y != 1.0 && y != -1.0 {
            return Err(RermError::InvalidLabel { index: i, value: y });
        }
        out.push(row.iter().map(|v| y * v).collect());
    }
    Ok((out, vec![0.0; x.len()]))
}

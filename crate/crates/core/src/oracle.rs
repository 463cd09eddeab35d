//! Brute-force reference computations for testing the dualized support
//! functions: grid suprema, polytope vertex enumeration and the closed-form
//! worst case over Euclidean balls. Membership is always checked with
//! [`Primitive::contains`], never through a conic representation.

use crate::error::{RermError, Result};
use crate::loss::{LossSpec, MonotonicityClass};
use crate::par::{max_range, Exec};
use crate::set::{Norm, Primitive, SetExpr};

pub const DEFAULT_GRID_CAP: u128 = 20_000_000;
const MAX_GRID_COORDS: usize = 3;
const MAX_SUBSETS: u128 = 100_000;
const MAX_VERTEX_DIM: usize = 6;
const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    /// One `(lo, hi)` pair per coordinate of the set. Ranges of coordinates
    /// fixed by the set are ignored.
    pub ranges: Vec<(f64, f64)>,
    pub step: f64,
    pub cap: u128,
}

impl GridSpec {
    pub fn new(ranges: Vec<(f64, f64)>, step: f64) -> Self {
        GridSpec {
            ranges,
            step,
            cap: DEFAULT_GRID_CAP,
        }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64, step: f64) -> Self {
        GridSpec::new(vec![(lo, hi); dim], step)
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    fn axis_len(&self, j: usize) -> usize {
        let (lo, hi) = self.ranges[j];
        ((hi - lo) / self.step - 1e-9).ceil().max(0.0) as usize + 1
    }

    fn axis_point(&self, j: usize, k: usize) -> f64 {
        let (lo, hi) = self.ranges[j];
        (lo + k as f64 * self.step).min(hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridEstimate {
    /// Largest `theta^T x` over grid points in the set (`-inf` if none).
    pub value: f64,
    /// `|theta|_2 * step * sqrt(k)` with `k` gridded coordinates.
    pub error_bound: f64,
    pub points: u128,
}

/// Lower bound on the support function by enumerating a regular grid.
///
/// The last gridded axis is scanned from its favorable end, stopping at the
/// first member, which gives the same maximum as a full scan for any set
/// whose slices along that axis are intervals.
pub fn grid_sup_linear(set: &SetExpr, theta: &[f64], grid: &GridSpec) -> Result<GridEstimate> {
    grid_sup_linear_with(Exec::Parallel, set, theta, grid)
}

pub fn grid_sup_linear_with(exec: Exec, set: &SetExpr, theta: &[f64], grid: &GridSpec) -> Result<GridEstimate> {
    set.validate()?;
    let d = set.dim;
    if theta.len() != d {
        return Err(RermError::dim("direction", d, theta.len()));
    }
    if grid.ranges.len() != d {
        return Err(RermError::dim("grid ranges", d, grid.ranges.len()));
    }
    if !(grid.step > 0.0 && grid.step.is_finite()) {
        return Err(RermError::InvalidSet(format!("grid step {} must be positive", grid.step)));
    }

    let mut base = vec![0.0; d];
    let mut fixed = vec![false; d];
    for p in &set.constraints {
        if let Primitive::FixCoords { indices, values } = p {
            for (&j, &v) in indices.iter().zip(values) {
                base[j] = v;
                fixed[j] = true;
            }
        }
    }
    let free: Vec<usize> = (0..d).filter(|&j| !fixed[j]).collect();
    if free.len() > MAX_GRID_COORDS {
        return Err(RermError::InvalidSet(format!(
            "grid oracle supports at most {MAX_GRID_COORDS} free coordinates, got {}",
            free.len()
        )));
    }
    for &j in &free {
        let (lo, hi) = grid.ranges[j];
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(RermError::InvalidSet(format!("grid range {j} = ({lo}, {hi}) is invalid")));
        }
    }

    let lens: Vec<usize> = free.iter().map(|&j| grid.axis_len(j)).collect();
    let points: u128 = lens.iter().map(|&n| n as u128).product();
    if points > grid.cap {
        return Err(RermError::GridCapExceeded { points, cap: grid.cap });
    }
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let error_bound = norm * grid.step * (free.len() as f64).sqrt();

    if free.is_empty() {
        let value = if set.contains(&base, MEMBERSHIP_TOL) {
            dot(theta, &base)
        } else {
            f64::NEG_INFINITY
        };
        return Ok(GridEstimate {
            value,
            error_bound,
            points,
        });
    }

    let (outer, last) = free.split_at(free.len() - 1);
    let last = last[0];
    let last_len = *lens.last().unwrap();
    let outer_lens = &lens[..lens.len() - 1];
    let outer_count: usize = outer_lens.iter().product();
    let descending = theta[last] >= 0.0;

    let value = max_range(exec, outer_count, |mut idx| {
        let mut x = base.clone();
        for (&j, &n) in outer.iter().zip(outer_lens) {
            x[j] = grid.axis_point(j, idx % n);
            idx /= n;
        }
        for k in 0..last_len {
            let k = if descending { last_len - 1 - k } else { k };
            x[last] = grid.axis_point(last, k);
            if set.contains(&x, MEMBERSHIP_TOL) {
                return dot(theta, &x);
            }
        }
        f64::NEG_INFINITY
    });
    Ok(GridEstimate {
        value,
        error_bound,
        points,
    })
}

/// Vertices of a bounded polyhedron described by linear primitives, by
/// solving every `d`-subset of constraints as equalities.
pub fn polytope_vertices(set: &SetExpr) -> Result<Vec<Vec<f64>>> {
    set.validate()?;
    let d = set.dim;
    if d > MAX_VERTEX_DIM {
        return Err(RermError::Polytope(format!("dimension {d} exceeds {MAX_VERTEX_DIM}")));
    }
    let (a, b) = halfspaces(set)?;
    let m = a.len();
    if binomial(m, d) > MAX_SUBSETS {
        return Err(RermError::Polytope(format!("{m} constraints in dimension {d} is too many subsets")));
    }
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let feasible = |x: &[f64]| a.iter().zip(&b).all(|(r, bi)| dot(r, x) <= bi + 1e-9 * scale);

    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for subset in Combinations::new(m, d) {
        let mut mat: Vec<Vec<f64>> = subset.iter().map(|&k| a[k].clone()).collect();
        let mut rhs: Vec<f64> = subset.iter().map(|&k| b[k]).collect();
        let Some(x) = solve_square(&mut mat, &mut rhs) else {
            continue;
        };
        if feasible(&x) && !vertices.iter().any(|v| max_diff(v, &x) <= 1e-9 * scale) {
            vertices.push(x);
        }
    }
    if vertices.is_empty() {
        return Err(RermError::Polytope("no vertices: the set is empty or has no extreme points".into()));
    }
    if let Some(ray) = recession_ray(&a, d) {
        return Err(RermError::Polytope(format!("unbounded along {ray:?}")));
    }
    vertices.sort_by(|u, v| u.partial_cmp(v).unwrap());
    Ok(vertices)
}

/// `max_v theta^T v` over vertices.
pub fn vertex_sup(vertices: &[Vec<f64>], theta: &[f64]) -> f64 {
    vertices.iter().map(|v| dot(v, theta)).fold(f64::NEG_INFINITY, f64::max)
}

/// Rows `a_k^T x <= b_k` equivalent to the set.
fn halfspaces(set: &SetExpr) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let d = set.dim;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut push = |row: Vec<f64>, rhs: f64| {
        a.push(row);
        b.push(rhs);
    };
    let unit = |j: usize, s: f64| {
        let mut e = vec![0.0; d];
        e[j] = s;
        e
    };
    for p in &set.constraints {
        match p {
            Primitive::AffineIneq { mat, rhs } => mat.iter().zip(rhs).for_each(|(r, &m)| push(r.clone(), m)),
            Primitive::AffineEq { mat, rhs } => {
                for (r, &m) in mat.iter().zip(rhs) {
                    push(r.clone(), m);
                    push(r.iter().map(|v| -v).collect(), -m);
                }
            }
            Primitive::Box { lower, upper } => {
                for j in 0..d {
                    if upper[j].is_finite() {
                        push(unit(j, 1.0), upper[j]);
                    }
                    if lower[j].is_finite() {
                        push(unit(j, -1.0), -lower[j]);
                    }
                }
            }
            Primitive::FixCoords { indices, values } => {
                for (&j, &v) in indices.iter().zip(values) {
                    push(unit(j, 1.0), v);
                    push(unit(j, -1.0), -v);
                }
            }
            Primitive::NormBall {
                norm: Norm::Inf,
                center,
                radius,
                range,
            } => {
                for (k, j) in range.clone().unwrap_or(0..d).enumerate() {
                    push(unit(j, 1.0), center[k] + radius);
                    push(unit(j, -1.0), radius - center[k]);
                }
            }
            other => return Err(RermError::Polytope(format!("not a linear primitive: {other:?}"))),
        }
    }
    Ok((a, b))
}

/// A nonzero `v` with `A v <= 0`, if the cone has an extreme ray. Assumes the
/// cone is pointed, which holds once the polyhedron has a vertex.
fn recession_ray(a: &[Vec<f64>], d: usize) -> Option<Vec<f64>> {
    if d == 1 {
        return [1.0, -1.0]
            .into_iter()
            .map(|s| vec![s])
            .find(|v| a.iter().all(|r| dot(r, v) <= 1e-12));
    }
    for subset in Combinations::new(a.len(), d - 1) {
        let rows: Vec<Vec<f64>> = subset.iter().map(|&k| a[k].clone()).collect();
        let Some(v) = null_vector(rows, d) else {
            continue;
        };
        for s in [1.0, -1.0] {
            let w: Vec<f64> = v.iter().map(|x| s * x).collect();
            if a.iter().all(|r| dot(r, &w) <= 1e-10 * norm_inf(r)) {
                return Some(w);
            }
        }
    }
    None
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square(mat: &mut [Vec<f64>], rhs: &mut [f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = mat.iter().map(|r| norm_inf(r)).fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| mat[i][col].abs().total_cmp(&mat[j][col].abs()))?;
        if mat[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        mat.swap(col, piv);
        rhs.swap(col, piv);
        for i in col + 1..n {
            let f = mat[i][col] / mat[col][col];
            if f != 0.0 {
                for k in col..n {
                    mat[i][k] -= f * mat[col][k];
                }
                rhs[i] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| mat[i][k] * x[k]).sum();
        x[i] = (rhs[i] - s) / mat[i][i];
    }
    Some(x)
}

/// Unit null vector of a `(d-1) x d` matrix of rank `d - 1`.
fn null_vector(mut rows: Vec<Vec<f64>>, d: usize) -> Option<Vec<f64>> {
    let scale = rows.iter().map(|r| norm_inf(r)).fold(0.0, f64::max);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..d {
        if row == rows.len() {
            break;
        }
        let piv = (row..rows.len()).max_by(|&i, &j| rows[i][col].abs().total_cmp(&rows[j][col].abs()))?;
        if rows[piv][col].abs() <= 1e-10 * scale {
            continue;
        }
        rows.swap(row, piv);
        let p = rows[row][col];
        rows[row].iter_mut().for_each(|v| *v /= p);
        for i in 0..rows.len() {
            if i != row {
                let f = rows[i][col];
                if f != 0.0 {
                    for k in 0..d {
                        rows[i][k] -= f * rows[row][k];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if pivots.len() != d - 1 {
        return None;
    }
    let free = (0..d).find(|c| !pivots.contains(c))?;
    let mut v = vec![0.0; d];
    v[free] = 1.0;
    for (r, &c) in pivots.iter().enumerate() {
        v[c] = -rows[r][free];
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Some(v.into_iter().map(|x| x / n).collect())
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        match (0..k).rev().find(|&i| self.idx[i] < self.n - k + i) {
            Some(i) => {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(out)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Convex polygon `{x : a_k^T x <= b_k}` inside the box `[-bound, bound]^2`,
/// by clipping the box against each half-plane in turn. Vertices are in
/// counter-clockwise order; an empty result means the region is empty.
pub fn clip_polygon(halfplanes: &[([f64; 2], f64)], bound: f64) -> Vec<[f64; 2]> {
    let mut poly = vec![[-bound, -bound], [bound, -bound], [bound, bound], [-bound, bound]];
    for &(a, b) in halfplanes {
        let side = |p: &[f64; 2]| a[0] * p[0] + a[1] * p[1] - b;
        let mut next = Vec::with_capacity(poly.len() + 1);
        for k in 0..poly.len() {
            let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
            let (sp, sq) = (side(&p), side(&q));
            if sp <= 0.0 {
                next.push(p);
            }
            if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
                let t = sp / (sp - sq);
                next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        poly = next;
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Closed-form worst-case loss over the ball `|x - center|_2 <= rho`.
pub fn analytical_ball_worst_case(center: &[f64], y: f64, rho: f64, theta: &[f64], loss: &LossSpec) -> f64 {
    let r = dot(center, theta) - y;
    let spread = rho * theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    match loss.class() {
        MonotonicityClass::NonIncreasing => loss.evaluate(r - spread),
        MonotonicityClass::EvenNondecreasing => loss.evaluate(r.abs() + spread),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

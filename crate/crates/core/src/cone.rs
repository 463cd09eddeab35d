//! Cone calculus: dimensions, duals, Euclidean projections and membership.
//!
//! Conventions:
//! - `SecondOrder { dim }` is `{(t, x) : ||x||_2 <= t}` with the scalar first.
//! - `Exponential` is `cl{(r, s, t) : s > 0, s exp(r/s) <= t}`.
//! - `DualExponential` is `cl{(u, v, w) : u < 0, -u exp(v/u) <= e w}`.
//! - `Free` is all of R^n, the dual of `Zero`.

use serde::{Deserialize, Serialize};

use crate::error::{RermError, Result};
use crate::sparse::norm2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Cone {
    Zero { dim: usize },
    Free { dim: usize },
    Nonneg { dim: usize },
    #[serde(rename = "soc")]
    SecondOrder { dim: usize },
    #[serde(rename = "exp")]
    Exponential,
    #[serde(rename = "exp_dual")]
    DualExponential,
}

/// Points this close to the exponential cone (in the defining inequality)
/// are treated as members.
const EXP_THRESH: f64 = 1e-13;
const EXP_TOL: f64 = 1e-12;
const EXP_MAX_ITERS: usize = 100;

impl Cone {
    pub fn zero(dim: usize) -> Self {
        Cone::Zero { dim }
    }

    pub fn nonneg(dim: usize) -> Self {
        Cone::Nonneg { dim }
    }

    pub fn soc(dim: usize) -> Self {
        Cone::SecondOrder { dim }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero { dim } | Cone::Free { dim } | Cone::Nonneg { dim } | Cone::SecondOrder { dim } => dim,
            Cone::Exponential | Cone::DualExponential => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Cone::Zero { dim } | Cone::Free { dim } | Cone::Nonneg { dim } if dim == 0 => {
                Err(RermError::InvalidCone(format!("{self:?} must have dimension >= 1")))
            }
            Cone::SecondOrder { dim } if dim < 2 => {
                Err(RermError::InvalidCone(format!("second-order cone needs dimension >= 2, got {dim}")))
            }
            _ => Ok(()),
        }
    }

    pub fn dual(&self) -> Cone {
        match *self {
            Cone::Zero { dim } => Cone::Free { dim },
            Cone::Free { dim } => Cone::Zero { dim },
            Cone::Nonneg { .. } | Cone::SecondOrder { .. } => *self,
            Cone::Exponential => Cone::DualExponential,
            Cone::DualExponential => Cone::Exponential,
        }
    }

    /// Project `v` onto the cone in place.
    pub fn project_in_place(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        match *self {
            Cone::Zero { .. } => v.iter_mut().for_each(|x| *x = 0.0),
            Cone::Free { .. } => {}
            Cone::Nonneg { .. } => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::SecondOrder { .. } => project_soc(v),
            Cone::Exponential => project_exp(v),
            Cone::DualExponential => {
                // Moreau: P_{K*}(v) = v + P_K(-v)
                let mut w = [-v[0], -v[1], -v[2]];
                project_exp(&mut w);
                for k in 0..3 {
                    v[k] += w[k];
                }
            }
        }
    }
}

/// `K*` for any cone in scope. `dual_cone(dual_cone(k)) == k`.
pub fn dual_cone(k: Cone) -> Cone {
    k.dual()
}

/// Euclidean projection of `v` onto `k`.
pub fn project(k: Cone, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != k.dim() {
        return Err(RermError::dim("cone projection", k.dim(), v.len()));
    }
    let mut out = v.to_vec();
    k.project_in_place(&mut out);
    Ok(out)
}

/// `dist(v, k) <= tol`, with the distance computed through the projection.
pub fn check_membership(k: Cone, v: &[f64], tol: f64) -> Result<bool> {
    let p = project(k, v)?;
    let d: f64 = v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(d <= tol)
}

/// Euclidean distance from `v` to `k`.
pub fn distance(k: Cone, v: &[f64]) -> f64 {
    let mut p = v.to_vec();
    k.project_in_place(&mut p);
    v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn project_soc(v: &mut [f64]) {
    let t = v[0];
    let nx = norm2(&v[1..]);
    if nx <= t {
        return;
    }
    if nx <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let a = 0.5 * (nx + t);
    v[0] = a;
    let s = a / nx;
    v[1..].iter_mut().for_each(|x| *x *= s);
}

fn in_exp(r: f64, s: f64, t: f64) -> bool {
    (s > 0.0 && s * (r / s).exp() - t <= EXP_THRESH * (1.0 + t.abs()))
        || (r <= 0.0 && s == 0.0 && t >= 0.0)
}

fn in_polar_exp(r: f64, s: f64, t: f64) -> bool {
    // -v in K_exp^*
    (r > 0.0 && r * (s / r).exp() + std::f64::consts::E * t <= EXP_THRESH * (1.0 + t.abs()))
        || (r == 0.0 && s <= 0.0 && t <= 0.0)
}

/// Projection onto the exponential cone.
///
/// Outside the closed-form cases the projection solves
/// `min 1/2||x - v||^2  s.t.  x_r <= x_s log(x_t / x_s)` through its scalar
/// Lagrange multiplier `mu`. For fixed `mu` the minimizer is
/// `x_r = r - mu`, `x_s = (x_t - t) x_t / mu`, with `x_t` the root of an
/// increasing scalar function (solved by safeguarded Newton). The dual
/// derivative `x_r - x_s log(x_t/x_s)` is decreasing in `mu`; `mu` is found
/// by bisection on its sign.
fn project_exp(v: &mut [f64]) {
    let (r, s, t) = (v[0], v[1], v[2]);
    if in_exp(r, s, t) {
        return;
    }
    if in_polar_exp(r, s, t) {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    if r < 0.0 && s < 0.0 {
        v[1] = 0.0;
        v[2] = t.max(0.0);
        return;
    }

    if let Some(x) = project_exp_ray(r, s, t) {
        let face = [r.min(0.0), 0.0, t.max(0.0)];
        let best = if dist3(v, &face) < dist3(v, &x) { face } else { x };
        v.copy_from_slice(&best);
        return;
    }

    // bracket the multiplier geometrically, then bisect to relative precision
    let mut x = [0.0; 3];
    let (mut lo, mut hi) = (0.125, 0.125);
    if exp_dual_grad(v, &mut x, hi) > 0.0 {
        while exp_dual_grad(v, &mut x, hi) > 0.0 && hi < 1e300 {
            lo = hi;
            hi *= 2.0;
        }
    } else {
        while exp_dual_grad(v, &mut x, lo) <= 0.0 && lo > 1e-300 {
            hi = lo;
            lo *= 0.5;
        }
    }
    for _ in 0..EXP_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if exp_dual_grad(v, &mut x, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= EXP_TOL * 1e-3 * hi {
            break;
        }
    }
    exp_primal_at(v, &mut x, 0.5 * (lo + hi));
    // snap onto the cone so that re-projection is the identity
    if x[1] > 0.0 && x[2] > 0.0 {
        x[0] = x[0].min(x[1] * (x[2] / x[1]).ln());
    } else {
        x[1] = 0.0;
        x[0] = x[0].min(0.0);
        x[2] = x[2].max(0.0);
    }

    // The face {(r<=0, 0, t>=0)} is part of the closure; keep the closer point.
    let face = [r.min(0.0), 0.0, t.max(0.0)];
    let d_face = dist3(v, &face);
    let d_x = dist3(v, &x);
    let best = if d_face < d_x { face } else { x };
    v.copy_from_slice(&best);
}

/// Fast path. The projection lies on the ray `a (rho, 1, e^rho)` and the
/// remainder on the orthogonal polar ray `b (1, 1 - rho, -e^-rho)`, so `v`
/// lies in their span. That gives a scalar root problem in `rho` on the
/// interval where `a, b > 0`. Returns `None` when the root is not bracketed
/// within a safe range or the decomposition does not reproduce `v`.
fn project_exp_ray(r: f64, s: f64, t: f64) -> Option<[f64; 3]> {
    const LIMIT: f64 = 200.0;
    let (mut lo, mut hi) = (-LIMIT, LIMIT);
    // a > 0  <=>  (rho - 1) r + s > 0
    if r > 0.0 {
        lo = lo.max(1.0 - s / r);
    } else if r < 0.0 {
        hi = hi.min(1.0 - s / r);
    } else if s <= 0.0 {
        return None;
    }
    // b > 0  <=>  r - rho s > 0
    if s > 0.0 {
        hi = hi.min(r / s);
    } else if s < 0.0 {
        lo = lo.max(r / s);
    } else if r <= 0.0 {
        return None;
    }
    if lo >= hi {
        return None;
    }
    let h = |x: f64| ((x - 1.0) * r + s) * x.exp() - (r - x * s) * (-x).exp() - (x * (x - 1.0) + 1.0) * t;
    let dh = |x: f64| (x * r + s) * x.exp() + (r - x * s + s) * (-x).exp() - (2.0 * x - 1.0) * t;
    let (hl, hh) = (h(lo), h(hi));
    if !(hl < 0.0 && hh > 0.0) {
        return None;
    }
    let mut x = 0.5 * (lo + hi);
    let mut width = hi - lo;
    for _ in 0..2 * EXP_MAX_ITERS {
        let hx = h(x);
        if hx == 0.0 {
            break;
        }
        if hx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - hx / dh(x);
        // bisect when Newton leaves the bracket or stalls far from the root
        if !(next > lo && next < hi) || hi - lo > 0.5 * width {
            next = 0.5 * (lo + hi);
        }
        width = hi - lo;
        let done = (next - x).abs() <= 1e-15 * (1.0 + x.abs());
        x = next;
        if done || hi - lo <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    let q = x * (x - 1.0) + 1.0;
    let a = ((x - 1.0) * r + s) / q;
    let b = (r - x * s) / q;
    if !(a >= 0.0 && b >= 0.0) {
        return None;
    }
    let (ex, emx) = (x.exp(), (-x).exp());
    let p = [a * x, a, a * ex];
    let d = [b, b * (1.0 - x), -b * emx];
    let err = ((p[0] + d[0] - r).powi(2) + (p[1] + d[1] - s).powi(2) + (p[2] + d[2] - t).powi(2)).sqrt();
    let scale = (r * r + s * s + t * t).sqrt();
    (err <= 1e-13 * scale).then_some(p)
}

fn dist3(a: &[f64], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn exp_primal_at(v: &[f64], x: &mut [f64; 3], mu: f64) {
    let (p, z) = exp_newton_t(mu, v[1], v[2]);
    x[2] = z;
    x[1] = p * z / mu;
    x[0] = v[0] - mu;
}

fn exp_dual_grad(v: &[f64], x: &mut [f64; 3], mu: f64) -> f64 {
    exp_primal_at(v, x, mu);
    if x[1] <= 1e-300 {
        return x[0];
    }
    x[0] - x[1] * (x[2] / x[1]).ln()
}

/// Solve for `x_t` at fixed multiplier `mu`. With `p = x_t - t > 0` the
/// stationarity condition is
/// `p x_t / mu^2 - s / mu + ln(p / mu) + 1 = 0`,
/// increasing in `x_t` on `x_t > max(t, 0)`. Returns `(p, x_t)`. The
/// unknown is `p` when `t >= 0` and `x_t` otherwise, so that neither is
/// recovered by cancellation.
fn exp_newton_t(mu: f64, s: f64, t: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    // (p, z) from the unknown u
    let split = |u: f64| if t >= 0.0 { (u, u + t) } else { (u - t, u) };
    let g = |u: f64| {
        let (p, z) = split(u);
        p * z / mu2 - s / mu + (p / mu).ln() + 1.0
    };
    let dg = |u: f64| {
        let (p, z) = split(u);
        (p + z) / mu2 + 1.0 / p
    };

    let mut lo = 0.0;
    let mut hi = 1.0;
    while g(hi) < 0.0 && hi < 1e300 {
        lo = hi;
        hi *= 2.0;
    }
    if lo == 0.0 {
        if g(f64::MIN_POSITIVE) >= 0.0 {
            return split(f64::MIN_POSITIVE);
        }
        lo = f64::MIN_POSITIVE;
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..EXP_MAX_ITERS {
        let gu = g(u);
        if gu == 0.0 {
            break;
        }
        if gu < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = u - gu / dg(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 1e-16 * u || hi - lo <= 1e-16 * hi {
            u = next;
            break;
        }
        u = next;
    }
    split(u)
}

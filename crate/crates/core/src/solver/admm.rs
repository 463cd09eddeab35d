//! Douglas-Rachford iteration on the homogeneous self-dual embedding.
//!
//! Internally the program is written as `A_s z + s = b`, `s in K` with
//! `A_s = -A`. With `u = (z, y, tau)`, `v = (r, s, kappa)` and the skew
//! operator
//!
//! ```text
//!     [  0    A_s^T  q ]
//! Q = [ -A_s  0      b ]
//!     [ -q^T -b^T    0 ]
//! ```
//!
//! the embedding asks for `v = Q u`, `u in C = R^n x K* x R+`,
//! `v in C*`. For a diagonal metric `R` the iteration is
//!
//! ```text
//! u~  = (R + Q)^{-1} R w
//! u   = P_C(2 u~ - w)
//! w  <- w + alpha (u - u~)
//! ```
//!
//! and `v = R (u - (2 u~ - w))` is complementary to `u` at every step.

use std::ops::Range;
use std::time::Instant;

use super::ldl::LdlFactor;
use super::refine::refine;
use super::scaling::Equilibration;
use super::{Scaling, SolverSettings};
use crate::cone::Cone;
use crate::program::{Certificate, CertificateKind, ConicProgram, Residuals, Solution, SolveStatus};
use crate::sparse::{dot, norm_inf, CscMatrix};

const RHO_X: f64 = 1e-6;
const INITIAL_SCALE: f64 = 0.1;
const ZERO_CONE_BOOST: f64 = 1000.0;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 100;
const ADAPT_RATIO: f64 = 3.0;
const MAX_REFACTOR: usize = 40;
const KKT_REG: f64 = 1e-13;
const MIN_DATA_NORM: f64 = 1e-6;
/// Iterations without a 1% gain in the best residual before polishing.
const STALL_ITERS: usize = 2000;
const STALL_GAIN: f64 = 0.99;
const POLISH_WITHIN: f64 = 100.0;

pub(super) struct Admm<'a> {
    prog: &'a ConicProgram,
    settings: &'a SolverSettings,
    n: usize,
    m: usize,
    a: CscMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    eq: Equilibration,
    /// `b` and `q` are divided by these after equilibration.
    b_norm: f64,
    c_norm: f64,
    blocks: Vec<(Cone, Range<usize>)>,
    scale: f64,
    r: Vec<f64>,
    kkt: Option<LdlFactor>,
    g: Vec<f64>,
    hg: f64,
    work: Vec<f64>,
}

struct Best {
    score: f64,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> Admm<'a> {
    pub(super) fn new(prog: &'a ConicProgram, settings: &'a SolverSettings) -> Self {
        let n = prog.num_vars();
        let m = prog.num_rows();
        let mut a = prog.a().clone();
        a.nzval_mut().iter_mut().for_each(|v| *v = -*v);
        let eq = match settings.scaling {
            Scaling::None => Equilibration::identity(m, n),
            Scaling::Ruiz { iters } => Equilibration::ruiz(&mut a, prog.cones(), iters),
        };
        let mut b: Vec<f64> = prog.b().iter().zip(&eq.row).map(|(v, d)| v * d).collect();
        let mut c: Vec<f64> = prog.q().iter().zip(&eq.col).map(|(v, e)| v * e).collect();
        let b_norm = norm_inf(&b).max(MIN_DATA_NORM);
        let c_norm = norm_inf(&c).max(MIN_DATA_NORM);
        b.iter_mut().for_each(|v| *v /= b_norm);
        c.iter_mut().for_each(|v| *v /= c_norm);
        let blocks = prog.cone_ranges();
        let mut s = Admm {
            prog,
            settings,
            n,
            m,
            a,
            b,
            c,
            eq,
            b_norm,
            c_norm,
            blocks,
            scale: INITIAL_SCALE,
            r: vec![1.0; n + m + 1],
            kkt: None,
            g: vec![0.0; n + m],
            hg: 0.0,
            work: vec![0.0; n + m],
        };
        s.set_metric();
        s
    }

    fn set_metric(&mut self) {
        let n = self.n;
        self.r[..n].iter_mut().for_each(|v| *v = RHO_X);
        for (cone, range) in &self.blocks {
            let ry = match cone {
                Cone::Zero { .. } => 1.0 / (ZERO_CONE_BOOST * self.scale),
                _ => 1.0 / self.scale,
            };
            for i in range.clone() {
                self.r[n + i] = ry;
            }
        }
        self.r[n + self.m] = 1.0;
    }

    /// Factor the quasidefinite system `[[R_x, A^T], [A, -R_y]]` and
    /// precompute `g = M^{-1} h`.
    fn factor(&mut self) -> bool {
        let (n, m) = (self.n, self.m);
        let mut t = Vec::with_capacity(self.a.nnz() + n + m);
        for j in 0..n {
            t.push((j, j, self.r[j]));
        }
        for i in 0..m {
            t.push((n + i, n + i, -self.r[n + i]));
        }
        for (i, j, v) in self.a.iter() {
            t.push((j, n + i, v));
        }
        let upper = CscMatrix::from_triplets(n + m, n + m, &t);
        let signs: Vec<f64> = (0..n + m).map(|k| if k < n { 1.0 } else { -1.0 }).collect();
        match LdlFactor::new(&upper, &signs, KKT_REG) {
            Ok(f) => self.kkt = Some(f),
            Err(_) => return false,
        }
        let mut g: Vec<f64> = self.c.iter().chain(&self.b).copied().collect();
        self.solve_m(&mut g);
        self.hg = dot(&self.c, &g[..n]) + dot(&self.b, &g[n..]);
        self.g = g;
        true
    }

    /// In place: `rhs <- M^{-1} rhs` with `M = [[R_x, A^T], [-A, R_y]]`.
    fn solve_m(&mut self, rhs: &mut [f64]) {
        let n = self.n;
        rhs[n..].iter_mut().for_each(|v| *v = -*v);
        self.kkt.as_ref().expect("factored").solve(rhs, &mut self.work);
    }

    pub(super) fn run(mut self) -> Solution {
        let start = Instant::now();
        let (n, m) = (self.n, self.m);
        let dim = n + m + 1;
        if !self.factor() {
            return self.finish(SolveStatus::NumericalError, vec![0.0; n], vec![0.0; m], None, 0);
        }

        let mut w = vec![0.0; dim];
        w[dim - 1] = 1.0;
        let mut ut = vec![0.0; dim];
        let mut u = vec![0.0; dim];
        let mut v = vec![0.0; dim];
        let mut best: Option<Best> = None;
        let mut refactors = 0;
        let mut last_adapt = 0;
        let mut log_ratio = 0.0;
        let mut samples = 0usize;
        let mut last_gain = 0;
        let alpha = self.settings.alpha;

        for k in 0..self.settings.max_iter {
            // u~ = (R + Q)^{-1} R w
            for i in 0..n + m {
                ut[i] = self.r[i] * w[i];
            }
            let mut p0 = ut[..n + m].to_vec();
            self.solve_m(&mut p0);
            let hp0 = dot(&self.c, &p0[..n]) + dot(&self.b, &p0[n..]);
            let tau_t = (self.r[dim - 1] * w[dim - 1] + hp0) / (self.r[dim - 1] + self.hg);
            for i in 0..n + m {
                ut[i] = p0[i] - tau_t * self.g[i];
            }
            ut[dim - 1] = tau_t;

            // u = P_C(2 u~ - w)
            for i in 0..dim {
                u[i] = 2.0 * ut[i] - w[i];
            }
            for (cone, range) in &self.blocks {
                let rr = n + range.start..n + range.end;
                cone.dual().project_in_place(&mut u[rr]);
            }
            u[dim - 1] = u[dim - 1].max(0.0);
            for i in 0..dim {
                v[i] = self.r[i] * (u[i] - (2.0 * ut[i] - w[i]));
            }
            for i in 0..dim {
                w[i] += alpha * (u[i] - ut[i]);
            }

            if !w.iter().all(|x| x.is_finite()) {
                let (z, y) = best.map(|b| (b.z, b.y)).unwrap_or((vec![0.0; n], vec![0.0; m]));
                return self.finish(SolveStatus::NumericalError, z, y, None, k + 1);
            }

            let last = k + 1 == self.settings.max_iter;
            if k % CHECK_EVERY != 0 && !last {
                continue;
            }

            let tau = u[dim - 1];
            if tau > 0.0 {
                let z: Vec<f64> = (0..n).map(|j| self.eq.col[j] * u[j] * self.b_norm / tau).collect();
                let y: Vec<f64> = (0..m).map(|i| self.eq.row[i] * u[n + i] * self.c_norm / tau).collect();
                let (res, _) = self.prog.residuals(&z, &y);
                if res.within(self.settings.eps_abs, self.settings.eps_rel) {
                    return self.finish(SolveStatus::Optimal, z, y, None, k + 1);
                }
                let score = res.max_relative();
                if best.as_ref().is_none_or(|b| score < STALL_GAIN * b.score) {
                    last_gain = k;
                }
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(Best { score, z, y });
                }
                // slow tails on degenerate problems: try polishing the best
                // iterate once progress stalls near the target
                if k >= last_gain + STALL_ITERS {
                    last_gain = k;
                    let b = best.as_ref().expect("set above");
                    if b.score <= POLISH_WITHIN * self.settings.eps_abs.max(self.settings.eps_rel) {
                        let sol = self.finish(SolveStatus::IterLimit, b.z.clone(), b.y.clone(), None, k + 1);
                        let sol = refine(self.prog, &sol);
                        if sol.residuals.within(self.settings.eps_abs, self.settings.eps_rel) {
                            return Solution {
                                status: SolveStatus::Optimal,
                                ..sol
                            };
                        }
                    }
                }

                let pr = res.primal / (1.0 + res.primal_scale);
                let dr = res.dual / (1.0 + res.dual_scale);
                if pr > 0.0 && dr > 0.0 {
                    log_ratio += (pr / dr).ln();
                    samples += 1;
                }
                // geometric mean of the residual ratio since the last change,
                // with a waiting period that grows with every refactorization
                if samples > 0 && k >= last_adapt + ADAPT_EVERY * (1 + refactors) && refactors < MAX_REFACTOR {
                    let ratio = (0.5 * log_ratio / samples as f64).exp();
                    if !(1.0 / ADAPT_RATIO..=ADAPT_RATIO).contains(&ratio) {
                        // keep (u, v) and re-express w in the new metric
                        let old_r = self.r.clone();
                        self.scale = (self.scale * ratio).clamp(1e-6, 1e6);
                        self.set_metric();
                        if !self.factor() {
                            self.r = old_r;
                            let (z, y) = best.map(|b| (b.z, b.y)).unwrap_or((vec![0.0; n], vec![0.0; m]));
                            return self.finish(SolveStatus::NumericalError, z, y, None, k + 1);
                        }
                        for i in 0..dim {
                            w[i] = u[i] + v[i] / self.r[i];
                        }
                        refactors += 1;
                        last_adapt = k;
                        log_ratio = 0.0;
                        samples = 0;
                    }
                }
            }

            if let Some(cert) = self.primal_infeasibility(&u) {
                return self.finish(SolveStatus::PrimalInfeasible, vec![f64::NAN; n], vec![f64::NAN; m], Some(cert), k + 1);
            }
            if let Some(cert) = self.dual_infeasibility(&u) {
                return self.finish(SolveStatus::DualInfeasible, vec![f64::NAN; n], vec![f64::NAN; m], Some(cert), k + 1);
            }

            if let Some(limit) = self.settings.time_limit {
                if start.elapsed().as_secs_f64() > limit {
                    break;
                }
            }
        }
        let (z, y) = best.map(|b| (b.z, b.y)).unwrap_or((vec![0.0; n], vec![0.0; m]));
        let sol = refine(self.prog, &self.finish(SolveStatus::IterLimit, z, y, None, self.settings.max_iter));
        if sol.residuals.within(self.settings.eps_abs, self.settings.eps_rel) {
            return Solution {
                status: SolveStatus::Optimal,
                ..sol
            };
        }
        sol
    }

    fn cert_tol(&self, witness: &[f64]) -> f64 {
        self.settings.eps_infeas * (1.0 + norm_inf(witness))
    }

    fn primal_infeasibility(&self, u: &[f64]) -> Option<Certificate> {
        let n = self.n;
        let y: Vec<f64> = (0..self.m).map(|i| self.eq.row[i] * u[n + i]).collect();
        let by = dot(self.prog.b(), &y);
        if by >= 0.0 || self.m == 0 {
            return None;
        }
        let y: Vec<f64> = y.iter().map(|v| v / -by).collect();
        let cert = Certificate {
            kind: CertificateKind::PrimalInfeasible,
            witness: y,
            residual: 0.0,
        };
        let residual = cert.check(self.prog);
        (residual <= self.cert_tol(&cert.witness)).then_some(Certificate { residual, ..cert })
    }

    fn dual_infeasibility(&self, u: &[f64]) -> Option<Certificate> {
        let z: Vec<f64> = (0..self.n).map(|j| self.eq.col[j] * u[j]).collect();
        let qz = dot(self.prog.q(), &z);
        if qz >= 0.0 || self.n == 0 {
            return None;
        }
        let z: Vec<f64> = z.iter().map(|v| v / -qz).collect();
        let cert = Certificate {
            kind: CertificateKind::DualInfeasible,
            witness: z,
            residual: 0.0,
        };
        let residual = cert.check(self.prog);
        (residual <= self.cert_tol(&cert.witness)).then_some(Certificate { residual, ..cert })
    }

    fn finish(
        &self,
        status: SolveStatus,
        z: Vec<f64>,
        y: Vec<f64>,
        certificate: Option<Certificate>,
        iterations: usize,
    ) -> Solution {
        finalize(self.prog, self.settings, status, z, y, certificate, iterations)
    }
}

/// Build a [`Solution`] with residuals recomputed from the program data.
/// An `Optimal` claim that fails the tolerance test is downgraded.
pub(super) fn finalize(
    prog: &ConicProgram,
    settings: &SolverSettings,
    mut status: SolveStatus,
    z: Vec<f64>,
    mut y: Vec<f64>,
    certificate: Option<Certificate>,
    iterations: usize,
) -> Solution {
    if certificate.is_some() {
        return Solution {
            status,
            objective: f64::NAN,
            primal: z,
            dual: y,
            slack: vec![f64::NAN; prog.num_rows()],
            residuals: Residuals::default(),
            certificate,
            iterations,
        };
    }
    for (c, r) in prog.cone_ranges() {
        c.dual().project_in_place(&mut y[r]);
    }
    let (residuals, slack) = prog.residuals(&z, &y);
    if status == SolveStatus::Optimal && !residuals.within(settings.eps_abs, settings.eps_rel) {
        status = SolveStatus::IterLimit;
    }
    Solution {
        status,
        objective: dot(prog.q(), &z),
        primal: z,
        dual: y,
        slack,
        residuals,
        certificate: None,
        iterations,
    }
}

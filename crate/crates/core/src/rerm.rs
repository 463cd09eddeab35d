//! Robust empirical risk minimization: problem type and program assembly.
//!
//! The problem is
//!
//! ```text
//! minimize  sum_i  sup_{x in X_i} f(x^T theta - y_i)   over theta in Theta
//! ```
//!
//! For a non-increasing loss the inner supremum is `f(z_i)` with
//! `S_i(-theta) + y_i <= -z_i`. For an even loss that is non-decreasing on
//! the nonnegative reals it is `f(z_i)` with `S_i(theta) - y_i <= z_i` and
//! `S_i(-theta) + y_i <= z_i`. Each `S_i` is replaced by its dual system and
//! each `f(z_i)` by an epigraph variable `c_i`; the objective is `sum c_i`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::error::{RermError, Result};
use crate::loss::{classification_transform, emit_epigraph_scaled, LossSpec, MonotonicityClass};
use crate::par::{map_range, try_map_range, Exec};
use crate::program::{Affine, ConeRows, ConicProgram, ProgramBuilder, Residuals, SolveStatus};
use crate::set::{canonicalize, validate_compactness_hint, ConicRep, SetExpr};
use crate::solver::{self, SolverSettings};
use crate::support::{emit_support_constraint, support_value, support_value_with};

#[derive(Clone, Debug, PartialEq)]
pub struct RermProblem {
    /// Nominal features, one row per datapoint.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Uncertainty set of each row.
    pub sets: Vec<SetExpr>,
    pub loss: LossSpec,
    /// Parameter constraints; `SetExpr::whole(d)` for none.
    pub theta: SetExpr,
}

impl RermProblem {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, sets: Vec<SetExpr>, loss: LossSpec, theta: SetExpr) -> Result<Self> {
        let p = RermProblem { x, y, sets, loss, theta };
        p.validate()?;
        Ok(p)
    }

    /// Classification data with labels in {-1, +1}: rows become `y_i x_i`,
    /// targets zero, and each set is mirrored when `y_i = -1`.
    pub fn classification(
        x: Vec<Vec<f64>>,
        labels: &[f64],
        sets: Vec<SetExpr>,
        loss: LossSpec,
        theta: SetExpr,
    ) -> Result<Self> {
        let (xt, y) = classification_transform(&x, labels)?;
        if sets.len() != labels.len() {
            return Err(RermError::dim("uncertainty sets", labels.len(), sets.len()));
        }
        let sets = sets
            .into_iter()
            .zip(labels)
            .map(|(s, &l)| if l < 0.0 { s.negated() } else { s })
            .collect();
        RermProblem::new(xt, y, sets, loss, theta)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.theta.dim
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.n(), self.d());
        self.loss.validate()?;
        self.theta.validate()?;
        if self.x.len() != n {
            return Err(RermError::dim("feature rows", n, self.x.len()));
        }
        if self.sets.len() != n {
            return Err(RermError::dim("uncertainty sets", n, self.sets.len()));
        }
        if let Some(r) = self.x.iter().find(|r| r.len() != d) {
            return Err(RermError::dim("feature columns", d, r.len()));
        }
        for (i, s) in self.sets.iter().enumerate() {
            if s.dim != d {
                return Err(RermError::dim(format!("uncertainty set {i}"), d, s.dim));
            }
            s.validate().map_err(|e| match e {
                RermError::InvalidSet(m) => RermError::InvalidSet(format!("datapoint {i}: {m}")),
                e => e,
            })?;
        }
        if !self.y.iter().all(|v| v.is_finite()) {
            return Err(RermError::InvalidSet("targets must be finite".into()));
        }
        Ok(())
    }

    /// Compactness warnings for every set, prefixed with the datapoint.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, s) in self.sets.iter().enumerate() {
            out.extend(validate_compactness_hint(s).into_iter().map(|w| format!("datapoint {i}: {w}")));
        }
        out
    }
}

/// Columns of the shared variables in a built program.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub theta: Range<usize>,
    pub z: Range<usize>,
    pub c: Range<usize>,
}

impl Layout {
    pub fn of(prog: &ConicProgram) -> Option<Layout> {
        Some(Layout {
            theta: prog.var("theta")?,
            z: prog.var("z")?,
            c: prog.var("c")?,
        })
    }
}

struct Shared {
    b: ProgramBuilder,
    theta: Range<usize>,
    z: Range<usize>,
    c: Range<usize>,
}

fn shared_vars(p: &RermProblem, extra: &[(&str, usize)]) -> Result<Shared> {
    let (n, d) = (p.n(), p.d());
    let mut b = ProgramBuilder::new();
    let theta = b.add_var("theta", d);
    for &(name, len) in extra {
        b.add_var(name, len);
    }
    let z = b.add_var("z", n);
    let c = b.add_var("c", n);
    for j in c.clone() {
        b.set_cost(j, 1.0);
    }
    let rep = canonicalize(&p.theta)?;
    let aux = b.add_var("theta_aux", rep.num_aux());
    b.push_all(membership_rows(&rep, theta.start, aux.start));
    Ok(Shared { b, theta, z, c })
}

/// Rows of `F x + G u + h in K` with `x`, `u` at the given columns.
fn membership_rows(rep: &ConicRep, x: usize, u: usize) -> Vec<ConeRows> {
    let mut rows: Vec<Affine> = rep.h.iter().map(|&h| Affine::constant(h)).collect();
    for (i, j, v) in rep.f.iter() {
        rows[i].terms.push((x + j, v));
    }
    for (i, k, v) in rep.g.iter() {
        rows[i].terms.push((u + k, v));
    }
    let mut out = Vec::with_capacity(rep.cones.len());
    let mut rows = rows.into_iter();
    for &cone in &rep.cones {
        out.push(ConeRows {
            cone,
            rows: rows.by_ref().take(cone.dim()).collect(),
        });
    }
    out
}

/// The general program, dualizing each support function.
pub fn build(p: &RermProblem) -> Result<ConicProgram> {
    build_with(p, Exec::default())
}

pub fn build_with(p: &RermProblem, exec: Exec) -> Result<ConicProgram> {
    p.validate()?;
    let (n, d) = (p.n(), p.d());
    let reps = try_map_range(exec, n, |i| canonicalize(&p.sets[i]))?;
    let Shared {
        mut b,
        theta,
        z,
        c,
    } = shared_vars(p, &[])?;
    let even = p.loss.class() == MonotonicityClass::EvenNondecreasing;

    // reserve per-datapoint columns in index order
    let mut offsets = Vec::with_capacity(n);
    for (i, rep) in reps.iter().enumerate() {
        let aux = b.add_var(format!("loss_aux[{i}]"), p.loss.num_aux()).start;
        let lo = b.add_var(format!("nu_minus[{i}]"), rep.num_rows()).start;
        let hi = if even {
            b.add_var(format!("nu_plus[{i}]"), rep.num_rows()).start
        } else {
            0
        };
        offsets.push((aux, lo, hi));
    }

    let k = residual_scale(p);
    let pos: Vec<Affine> = theta.clone().map(Affine::var).collect();
    let neg: Vec<Affine> = pos.iter().map(|a| a.clone().scaled(-1.0)).collect();
    debug_assert_eq!(pos.len(), d);
    let blocks = map_range(exec, n, |i| {
        let (aux, lo, hi) = offsets[i];
        let zi = Affine::var(z.start + i);
        let yi = p.y[i];
        let mut rows = emit_epigraph_scaled(&p.loss, &zi, &Affine::var(c.start + i), aux, k);
        if even {
            // S(theta) <= z_i + y_i,  S(-theta) <= z_i - y_i
            rows.extend(emit_support_constraint(&reps[i], &pos, &zi.clone().plus(yi), hi).rows);
            rows.extend(emit_support_constraint(&reps[i], &neg, &zi.plus(-yi), lo).rows);
        } else {
            // S(-theta) <= -z_i - y_i
            rows.extend(emit_support_constraint(&reps[i], &neg, &zi.scaled(-1.0).plus(-yi), lo).rows);
        }
        rows
    });
    for rows in blocks {
        b.push_all(rows);
    }
    b.build()
}

/// Closed-form worst case for plain Euclidean balls `X_i = B(x_i, rho_i)`:
/// `f(|x_i^T theta - y_i| + rho_i |theta|)` for even losses and
/// `f(x_i^T theta - y_i - rho_i |theta|)` for non-increasing ones, with a
/// single shared `t >= |theta|`.
pub fn build_analytical_ball(p: &RermProblem) -> Result<ConicProgram> {
    p.validate()?;
    let balls: Vec<(&[f64], f64)> = p
        .sets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.as_full_ball().ok_or_else(|| {
                RermError::InvalidSet(format!("datapoint {i}: analytical path needs a full-range Euclidean ball"))
            })
        })
        .collect::<Result<_>>()?;
    let k = residual_scale(p);
    let Shared {
        mut b,
        theta,
        z,
        c,
    } = shared_vars(p, &[("t", 1)])?;
    // reserved directly after theta
    let t = theta.end;
    let mut soc = vec![Affine::var(t)];
    soc.extend(theta.clone().map(Affine::var));
    b.push(ConeRows {
        cone: Cone::soc(soc.len()),
        rows: soc,
    });
    let even = p.loss.class() == MonotonicityClass::EvenNondecreasing;
    for (i, (center, rho)) in balls.into_iter().enumerate() {
        let aux = b.add_var(format!("loss_aux[{i}]"), p.loss.num_aux()).start;
        let zi = Affine::var(z.start + i);
        let mut r = Affine::constant(-p.y[i]);
        for (j, &x) in center.iter().enumerate() {
            if x != 0.0 {
                r = r.term(theta.start + j, x);
            }
        }
        let rt = Affine::var(t).scaled(rho);
        let rows = if even {
            // z_i >= +-r + rho t
            vec![
                zi.clone().add(&r.clone().scaled(-1.0)).add(&rt.clone().scaled(-1.0)),
                zi.clone().add(&r).add(&rt.scaled(-1.0)),
            ]
        } else {
            // z_i <= r - rho t
            vec![r.add(&rt.scaled(-1.0)).add(&zi.clone().scaled(-1.0))]
        };
        b.push(ConeRows {
            cone: Cone::nonneg(rows.len()),
            rows,
        });
        b.push_all(emit_epigraph_scaled(&p.loss, &zi, &Affine::var(c.start + i), aux, k));
    }
    b.build()
}

/// Typical residual magnitude at `theta = 0`, used to balance the loss
/// cones.
fn residual_scale(p: &RermProblem) -> f64 {
    let n = p.n().max(1) as f64;
    (p.y.iter().map(|v| v * v).sum::<f64>() / n).sqrt().max(1.0)
}

/// `sup_{x in set} f(x^T theta - y)` at a fixed `theta`.
pub fn worst_case_loss(theta: &[f64], set: &SetExpr, y: f64, loss: &LossSpec) -> Result<f64> {
    worst_case_loss_rep(theta, &canonicalize(set)?, y, loss, &SolverSettings::default())
}

fn worst_case_loss_rep(theta: &[f64], rep: &ConicRep, y: f64, loss: &LossSpec, settings: &SolverSettings) -> Result<f64> {
    let neg: Vec<f64> = theta.iter().map(|v| -v).collect();
    let lo = -support_value_with(rep, &neg, settings)?;
    match loss.class() {
        MonotonicityClass::NonIncreasing => Ok(loss.evaluate(lo - y)),
        MonotonicityClass::EvenNondecreasing => {
            let hi = support_value_with(rep, theta, settings)?;
            Ok(loss.evaluate((hi - y).max(y - lo)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RermSolution {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    /// `sup_{x in X_i} f(x^T theta - y_i)`, recomputed per datapoint.
    pub worst_case_losses: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub warnings: Vec<String>,
}

/// Build, solve and post-process with default settings.
pub fn solve(p: &RermProblem) -> Result<RermSolution> {
    solve_with(p, &SolverSettings::default(), Exec::default())
}

pub fn solve_with(p: &RermProblem, settings: &SolverSettings, exec: Exec) -> Result<RermSolution> {
    let prog = build_with(p, exec)?;
    solve_program(p, &prog, settings, exec)
}

/// Solve an already built program (from [`build`] or
/// [`build_analytical_ball`]) for `p`.
pub fn solve_program(p: &RermProblem, prog: &ConicProgram, settings: &SolverSettings, exec: Exec) -> Result<RermSolution> {
    let layout = Layout::of(prog).ok_or_else(|| RermError::InvalidSet("program has no theta/z/c variables".into()))?;
    let mut sol = solver::solve(prog, settings);
    if sol.status == SolveStatus::IterLimit {
        sol = solver::refine(prog, &sol);
    }
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => return Err(diagnose(p, sol.status, exec)),
        status => {
            return Err(RermError::Solver {
                status,
                message: format!(
                    "stopped after {} iterations with relative residual {:.3e}",
                    sol.iterations,
                    sol.residuals.max_relative()
                ),
            })
        }
    }
    let theta = sol.primal[layout.theta.clone()].to_vec();
    let reps = try_map_range(exec, p.n(), |i| canonicalize(&p.sets[i]))?;
    let worst_case_losses = try_map_range(exec, p.n(), |i| {
        worst_case_loss_rep(&theta, &reps[i], p.y[i], &p.loss, settings).map_err(|e| e.at_datapoint(i))
    })?;
    Ok(RermSolution {
        z: sol.primal[layout.z].to_vec(),
        theta,
        objective: sol.objective,
        worst_case_losses,
        status: sol.status,
        iterations: sol.iterations,
        residuals: sol.residuals,
        warnings: p.warnings(),
    })
}

/// Name the first datapoint whose set is empty or unbounded, if any.
fn diagnose(p: &RermProblem, status: SolveStatus, exec: Exec) -> RermError {
    let d = p.d();
    let found = map_range(exec, p.n(), |i| {
        let rep = match canonicalize(&p.sets[i]) {
            Ok(r) => r,
            Err(e) => return Some(e),
        };
        if let Err(e @ RermError::EmptySet { .. }) = support_value(&rep, &vec![0.0; d]) {
            return Some(e.at_datapoint(i));
        }
        for j in 0..2 * d {
            let mut e = vec![0.0; d];
            e[j / 2] = if j % 2 == 0 { 1.0 } else { -1.0 };
            if let Err(err @ RermError::Unbounded { .. }) = support_value(&rep, &e) {
                return Some(err.at_datapoint(i));
            }
        }
        None
    });
    found.into_iter().flatten().next().unwrap_or(RermError::Solver {
        status,
        message: "no uncertainty set is empty or unbounded; the parameter constraints may be infeasible".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::set::{Norm, Primitive};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        // normal equations by Gaussian elimination with partial pivoting
        let d = x[0].len();
        let mut a = vec![vec![0.0; d + 1]; d];
        for (row, &t) in x.iter().zip(y) {
            for j in 0..d {
                for k in 0..d {
                    a[j][k] += row[j] * row[k];
                }
                a[j][d] += row[j] * t;
            }
        }
        for col in 0..d {
            let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..d {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..=d {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..d).map(|j| a[j][d] / a[j][j]).collect()
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y = x
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| (j as f64 - 1.0) * v).sum::<f64>() + rng.random_range(-0.3..0.3))
            .collect();
        (x, y)
    }

    #[test]
    fn singletons_reduce_to_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = random_data(&mut rng, 30, 4);
        let sets = x.iter().map(|r| SetExpr::point(r)).collect();
        let p = RermProblem::new(x.clone(), y.clone(), sets, LossSpec::Pnorm { p: 2 }, SetExpr::whole(4)).unwrap();
        let s = solve(&p).unwrap();
        let t = ols(&x, &y);
        for (a, b) in s.theta.iter().zip(&t) {
            assert!((a - b).abs() < 1e-4, "{:?} vs {t:?}", s.theta);
        }
        let total: f64 = s.z.iter().map(|&z| p.loss.evaluate(z)).sum();
        assert!((total - s.objective).abs() < 1e-6 * (1.0 + total));
    }

    #[test]
    fn ball_l1_objective_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = random_data(&mut rng, 8, 3);
        let sets = x.iter().map(|r| SetExpr::ball(Norm::L2, r.clone(), 0.2)).collect();
        let p = RermProblem::new(x.clone(), y.clone(), sets, LossSpec::Pnorm { p: 1 }, SetExpr::whole(3)).unwrap();
        let s = solve(&p).unwrap();
        let nt = s.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expect: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, &t)| (r.iter().zip(&s.theta).map(|(a, b)| a * b).sum::<f64>() - t).abs() + 0.2 * nt)
            .sum();
        assert!((s.objective - expect).abs() < 1e-6 * (1.0 + expect));
    }

    #[test]
    fn hinge_ball_margin_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, _) = random_data(&mut rng, 10, 2);
        let labels: Vec<f64> = x.iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
        let sets = x.iter().map(|r| SetExpr::ball(Norm::L2, r.clone(), 0.1)).collect();
        let p = RermProblem::classification(x.clone(), &labels, sets, LossSpec::Hinge, SetExpr::whole(2)).unwrap();
        let s = solve(&p).unwrap();
        let nt = s.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..p.n() {
            let margin: f64 = p.x[i].iter().zip(&s.theta).map(|(a, b)| a * b).sum::<f64>() - 0.1 * nt;
            assert!((s.worst_case_losses[i] - LossSpec::Hinge.evaluate(margin)).abs() < 1e-6);
        }
        let total: f64 = s.worst_case_losses.iter().sum();
        assert!((total - s.objective).abs() < 1e-5 * (1.0 + total));
    }

    #[test]
    fn analytical_examples() {
        // single point at the origin, theta_0 = 1: objective is rho |theta|
        let p = RermProblem::new(
            vec![vec![0.0]],
            vec![0.0],
            vec![SetExpr::ball(Norm::L2, vec![0.0], 1.0)],
            LossSpec::Pnorm { p: 1 },
            SetExpr::whole(1).with(Primitive::fix(vec![0], vec![1.0])),
        )
        .unwrap();
        let prog = build_analytical_ball(&p).unwrap();
        let s = solve_program(&p, &prog, &SolverSettings::default(), Exec::Sequential).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-6);
        assert!(build_analytical_ball(&RermProblem { sets: vec![SetExpr::boxed(vec![0.0], vec![1.0])], ..p }).is_err());
    }

    #[test]
    fn analytical_matches_general_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for loss in [LossSpec::Huber { delta: 0.5 }, LossSpec::Logistic] {
            let (x, y) = random_data(&mut rng, 6, 2);
            let sets: Vec<SetExpr> = x.iter().map(|r| SetExpr::ball(Norm::L2, r.clone(), rng.random_range(0.0..0.5))).collect();
            let p = if loss.class() == MonotonicityClass::NonIncreasing {
                // a repeated point with both labels keeps the data non-separable
                let mut labels: Vec<f64> = y.iter().map(|v| v.signum()).collect();
                let (mut x, mut sets) = (x, sets);
                x[1] = x[0].clone();
                sets[1] = sets[0].clone();
                labels[1] = -labels[0];
                RermProblem::classification(x, &labels, sets, loss, SetExpr::whole(2)).unwrap()
            } else {
                RermProblem::new(x, y, sets, loss, SetExpr::whole(2)).unwrap()
            };
            let a = solve(&p).unwrap().objective;
            let prog = build_analytical_ball(&p).unwrap();
            let b = solve_program(&p, &prog, &SolverSettings::default(), Exec::Parallel).unwrap().objective;
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-3), "{loss:?}: {a} vs {b}");
        }
    }

    #[test]
    fn worst_case_loss_examples() {
        let theta = [0.5, -2.0];
        let x = [1.0, 0.25];
        let v = worst_case_loss(&theta, &SetExpr::point(&x), 0.3, &LossSpec::Huber { delta: 1.0 }).unwrap();
        assert!((v - LossSpec::Huber { delta: 1.0 }.evaluate(0.0 - 0.3)).abs() < 1e-7);
        let v = worst_case_loss(&theta, &SetExpr::ball(Norm::L2, x.to_vec(), 0.5), 0.3, &LossSpec::Pnorm { p: 2 }).unwrap();
        let expect = ((0.0f64 - 0.3).abs() + 0.5 * 4.25f64.sqrt()).powi(2);
        assert!((v - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn build_is_deterministic_across_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (x, y) = random_data(&mut rng, 12, 3);
        let sets = x
            .iter()
            .map(|r| SetExpr::ball(Norm::L1, r.clone(), 0.3).with(Primitive::fix(vec![2], vec![r[2]])))
            .collect();
        let p = RermProblem::new(x, y, sets, LossSpec::Huber { delta: 1.0 }, SetExpr::whole(3)).unwrap();
        let a = build_with(&p, Exec::Sequential).unwrap();
        let b = build_with(&p, Exec::Parallel).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn empty_set_names_datapoint() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let mut sets: Vec<SetExpr> = x.iter().map(|r| SetExpr::point(r)).collect();
        sets[1] = SetExpr::boxed(vec![0.0], vec![1.0]).with(Primitive::fix(vec![0], vec![3.0]));
        let p = RermProblem::new(x, vec![0.0, 1.0, 2.0], sets, LossSpec::Pnorm { p: 2 }, SetExpr::whole(1)).unwrap();
        match solve(&p) {
            Err(RermError::EmptySet { index: Some(1) }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_errors() {
        let r = RermProblem::new(vec![vec![0.0, 1.0]], vec![0.0], vec![SetExpr::whole(1)], LossSpec::Hinge, SetExpr::whole(2));
        assert!(matches!(r, Err(RermError::DimensionMismatch { .. })));
    }
}

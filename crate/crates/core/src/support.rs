//! Dualized support-function constraints.
//!
//! For `C = {x | exists u: F x + G u + h in K}` and a multiplier `nu in K*`,
//! the Lagrangian of `sup { theta^T x : x in C }` is
//!
//! ```text
//! L(x, u, nu) = theta^T x + nu^T (F x + G u + h)
//! ```
//!
//! which is bounded above in `(x, u)` only when `F^T nu = -theta` and
//! `G^T nu = 0`, leaving `h^T nu`. Hence
//!
//! ```text
//! S_C(theta) = inf { h^T nu : F^T nu = -theta, G^T nu = 0, nu in K* }
//! ```
//!
//! under strong duality, and `S_C(theta) <= t` holds exactly when some
//! `nu in K*` satisfies the two equalities and `h^T nu <= t`.

use std::ops::Range;

use crate::cone::Cone;
use crate::error::{RermError, Result};
use crate::par::{map_range, Exec};
use crate::program::{Affine, ConeRows, ProgramBuilder, SolveStatus};
use crate::set::ConicRep;
use crate::solver::{self, SolverSettings};

/// Rows certifying `S_C(direction) <= bound` with fresh multipliers `nu`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportConstraintBlock {
    pub nu: Range<usize>,
    pub rows: Vec<ConeRows>,
}

/// Emit the dual system for `S_C(direction) <= bound`. The multipliers
/// occupy columns `nu_offset .. nu_offset + rep.num_rows()`, which the
/// caller must reserve and must not use anywhere else.
pub fn emit_support_constraint(
    rep: &ConicRep,
    direction: &[Affine],
    bound: &Affine,
    nu_offset: usize,
) -> SupportConstraintBlock {
    let (eq, cones) = dual_system(rep, direction, nu_offset);
    // bound - h^T nu >= 0
    let mut slack = bound.clone();
    for (i, &h) in rep.h.iter().enumerate() {
        if h != 0.0 {
            slack = slack.term(nu_offset + i, -h);
        }
    }
    let mut rows = Vec::with_capacity(cones.len() + 2);
    rows.extend(eq);
    rows.push(ConeRows {
        cone: Cone::nonneg(1),
        rows: vec![slack],
    });
    rows.extend(cones);
    SupportConstraintBlock {
        nu: nu_offset..nu_offset + rep.num_rows(),
        rows,
    }
}

/// `F^T nu + direction = 0`, `G^T nu = 0` (if any rows) and `nu in K*`.
fn dual_system(rep: &ConicRep, direction: &[Affine], nu_offset: usize) -> (Option<ConeRows>, Vec<ConeRows>) {
    assert_eq!(direction.len(), rep.dim(), "direction length");
    let mut eq = Vec::with_capacity(rep.dim() + rep.num_aux());
    for (j, dir) in direction.iter().enumerate() {
        let (ri, rv) = rep.f.col(j);
        let mut row = dir.clone();
        for (&i, &v) in ri.iter().zip(rv) {
            row = row.term(nu_offset + i, v);
        }
        eq.push(row);
    }
    for k in 0..rep.num_aux() {
        let (ri, rv) = rep.g.col(k);
        let mut row = Affine::default();
        for (&i, &v) in ri.iter().zip(rv) {
            row = row.term(nu_offset + i, v);
        }
        eq.push(row);
    }
    let eq = (!eq.is_empty()).then(|| ConeRows {
        cone: Cone::zero(eq.len()),
        rows: eq,
    });

    let mut off = 0;
    let cones = rep
        .cones
        .iter()
        .map(|c| {
            let k = c.dim();
            let rows = (off..off + k).map(|i| Affine::var(nu_offset + i)).collect();
            off += k;
            ConeRows { cone: c.dual(), rows }
        })
        .collect();
    (eq, cones)
}

/// `S_C(theta)` by solving the dual program directly.
pub fn support_value(rep: &ConicRep, theta: &[f64]) -> Result<f64> {
    support_value_with(rep, theta, &SolverSettings::default())
}

/// [`support_value`] with explicit solver settings.
///
/// Returns [`RermError::Unbounded`] with a recession direction `x`
/// (`theta^T x > 0`) when the supremum is infinite, and
/// [`RermError::EmptySet`] when `C` is empty.
pub fn support_value_with(rep: &ConicRep, theta: &[f64], settings: &SolverSettings) -> Result<f64> {
    let d = rep.dim();
    if theta.len() != d {
        return Err(RermError::dim("support direction", d, theta.len()));
    }
    let m = rep.num_rows();
    let mut b = ProgramBuilder::new();
    let nu = b.add_var("nu", m);
    for (i, &h) in rep.h.iter().enumerate() {
        b.set_cost(nu.start + i, h);
    }
    let dir: Vec<Affine> = theta.iter().map(|&t| Affine::constant(t)).collect();
    let (eq, cones) = dual_system(rep, &dir, nu.start);
    b.push_all(eq);
    b.push_all(cones);
    let prog = b.build()?;
    let sol = solver::solve(&prog, settings);
    match sol.status {
        SolveStatus::Optimal => Ok(sol.objective),
        SolveStatus::PrimalInfeasible => {
            // rows 0..d are F^T nu + theta = 0; their multiplier is -x
            let w = &sol.certificate.as_ref().expect("certificate").witness;
            Err(RermError::Unbounded {
                direction: w[..d].iter().map(|v| -v).collect(),
            })
        }
        SolveStatus::DualInfeasible => Err(RermError::EmptySet { index: None }),
        status => Err(RermError::Solver {
            status,
            message: format!(
                "support subproblem stopped after {} iterations, residual {:.3e}",
                sol.iterations,
                sol.residuals.max_relative()
            ),
        }),
    }
}

/// Support values for many directions.
pub fn support_values(exec: Exec, rep: &ConicRep, thetas: &[Vec<f64>]) -> Vec<Result<f64>> {
    map_range(exec, thetas.len(), |k| support_value(rep, &thetas[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::set::{canonicalize, intersect, Norm, Primitive, SetExpr};
    use proptest::prelude::*;

    fn sv(s: &SetExpr, theta: &[f64]) -> f64 {
        support_value(&canonicalize(s).unwrap(), theta).unwrap()
    }

    fn simplex(d: usize) -> SetExpr {
        SetExpr::boxed(vec![0.0; d], vec![f64::INFINITY; d]).with(Primitive::AffineEq {
            mat: vec![vec![1.0; d]],
            rhs: vec![1.0],
        })
    }

    /// Feasibility of the emitted block with `theta` fixed and bound `t`.
    fn block_feasible(rep: &ConicRep, theta: &[f64], t: f64) -> bool {
        let mut b = ProgramBuilder::new();
        let nu = b.add_var("nu", rep.num_rows());
        let dir: Vec<Affine> = theta.iter().map(|&v| Affine::constant(v)).collect();
        let block = emit_support_constraint(rep, &dir, &Affine::constant(t), nu.start);
        b.push_all(block.rows);
        let prog = b.build().unwrap();
        solver::solve(&prog, &SolverSettings::default()).status == SolveStatus::Optimal
    }

    #[test]
    fn simplex_block_threshold() {
        let rep = canonicalize(&simplex(3)).unwrap();
        assert!(block_feasible(&rep, &[1.0, 5.0, 2.0], 5.0));
        assert!(!block_feasible(&rep, &[1.0, 5.0, 2.0], 4.9));
        assert!((support_value(&rep, &[1.0, 5.0, 2.0]).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn block_layout() {
        let rep = canonicalize(&SetExpr::ball(Norm::L1, vec![0.0, 0.0], 1.0)).unwrap();
        let dir = vec![Affine::var(0), Affine::var(1)];
        let blk = emit_support_constraint(&rep, &dir, &Affine::var(2), 10);
        assert_eq!(blk.nu, 10..15);
        assert_eq!(blk.rows[0].cone, Cone::zero(4));
        assert_eq!(blk.rows[1].cone, Cone::nonneg(1));
        assert_eq!(blk.rows[2].cone, Cone::nonneg(4));
        assert_eq!(blk.rows[3].cone, Cone::nonneg(1));
    }

    #[test]
    fn examples() {
        assert!((sv(&SetExpr::boxed(vec![-1.0], vec![1.0]), &[3.0]) - 3.0).abs() < 1e-6);
        assert!((sv(&SetExpr::ball(Norm::L1, vec![0.0, 0.0], 2.0), &[1.0, -1.0]) - 2.0).abs() < 1e-6);
        let theta = [0.3, -1.2, 0.5];
        let unit = SetExpr::ball(Norm::L2, vec![0.0; 3], 1.0);
        let n2 = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((sv(&unit, &theta) - n2).abs() < 1e-6);
        let fixed = SetExpr::point(&[1.0, 2.0, 3.0]);
        assert!((sv(&fixed, &theta) - (0.3 - 2.4 + 1.5)).abs() < 1e-6);
        let pin = intersect(&SetExpr::boxed(vec![0.0], vec![1.0]), &SetExpr::whole(1).with(Primitive::fix(vec![0], vec![0.25]))).unwrap();
        assert!((sv(&pin, &[2.0]) - 0.5).abs() < 1e-6);
        let l1 = SetExpr::ball(Norm::L1, vec![0.0, 0.0], 1.0);
        assert!((sv(&l1, &[0.4, -0.9]) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn unbounded_direction_is_reported() {
        let half = SetExpr::boxed(vec![0.0, -1.0], vec![f64::INFINITY, 1.0]);
        let rep = canonicalize(&half).unwrap();
        match support_value(&rep, &[1.0, 0.5]) {
            Err(RermError::Unbounded { direction }) => {
                assert!(direction[0] > 0.0);
                assert!(direction[1].abs() < 1e-6 * direction[0]);
            }
            other => panic!("{other:?}"),
        }
        assert!((support_value(&rep, &[-1.0, 0.5]).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn empty_set_is_reported() {
        let empty = SetExpr::boxed(vec![0.0], vec![1.0]).with(Primitive::fix(vec![0], vec![2.0]));
        let rep = canonicalize(&empty).unwrap();
        assert!(matches!(support_value(&rep, &[1.0]), Err(RermError::EmptySet { .. })));
    }

    #[test]
    fn self_intersection_has_same_support() {
        let a = SetExpr::boxed(vec![-1.0, 0.0], vec![0.5, 2.0]).with(Primitive::ball(Norm::L2, vec![0.0, 1.0], 1.2));
        let aa = intersect(&a, &a).unwrap();
        let (ra, raa) = (canonicalize(&a).unwrap(), canonicalize(&aa).unwrap());
        let thetas: Vec<Vec<f64>> = (0..100)
            .map(|k| {
                let t = k as f64 * 0.0628;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let va = support_values(Exec::Parallel, &ra, &thetas);
        let vaa = support_values(Exec::Sequential, &raa, &thetas);
        for (x, y) in va.iter().zip(&vaa) {
            assert!((x.as_ref().unwrap() - y.as_ref().unwrap()).abs() < 1e-7);
        }
    }

    fn dir2() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0..3.0f64, 2)
    }

    fn square_disk() -> SetExpr {
        SetExpr::boxed(vec![-0.5, -0.5], vec![1.5, 1.5]).with(Primitive::ball(Norm::L2, vec![0.0, 0.0], 1.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn positive_homogeneity(theta in dir2()) {
            let rep = canonicalize(&square_disk()).unwrap();
            let base = support_value(&rep, &theta).unwrap();
            for alpha in [0.5, 2.0, 10.0] {
                let t: Vec<f64> = theta.iter().map(|v| alpha * v).collect();
                let v = support_value(&rep, &t).unwrap();
                prop_assert!((v - alpha * base).abs() <= 1e-6 * (1.0 + (alpha * base).abs()));
            }
        }

        #[test]
        fn subadditivity(a in dir2(), b in dir2()) {
            let rep = canonicalize(&square_disk()).unwrap();
            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = support_value(&rep, &ab).unwrap();
            let rhs = support_value(&rep, &a).unwrap() + support_value(&rep, &b).unwrap();
            prop_assert!(lhs <= rhs + 1e-6);
        }

        #[test]
        fn intersection_shrinks_support(theta in dir2(), c in dir2(), r in 0.5..2.0f64) {
            let a = SetExpr::boxed(vec![-1.0, -1.0], vec![1.0, 1.0]);
            let b = SetExpr::ball(Norm::L2, c.clone(), r);
            let ab = intersect(&a, &b).unwrap();
            let sa = sv(&a, &theta);
            let sb = sv(&b, &theta);
            match support_value(&canonicalize(&ab).unwrap(), &theta) {
                Ok(v) => prop_assert!(v <= sa.min(sb) + 1e-7 * (1.0 + sa.abs().max(sb.abs()))),
                Err(RermError::EmptySet { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn ball_radius_scales_support(theta in dir2(), r in 0.1..3.0f64, alpha in 0.2..5.0f64) {
            for norm in [Norm::L1, Norm::L2, Norm::Inf] {
                let a = sv(&SetExpr::ball(norm, vec![0.0, 0.0], r), &theta);
                let b = sv(&SetExpr::ball(norm, vec![0.0, 0.0], alpha * r), &theta);
                prop_assert!((b - alpha * a).abs() <= 1e-6 * (1.0 + b.abs()));
            }
        }
    }
}

//! Embedded conic solver.
//!
//! Douglas-Rachford splitting on the homogeneous self-dual embedding with
//! one sparse LDL^T factorization of the quasidefinite system, Ruiz
//! equilibration and over-relaxation. Reported residuals are always
//! recomputed from the unscaled program at return.

mod admm;
pub mod ldl;
mod refine;
mod scaling;

use serde::{Deserialize, Serialize};

use crate::program::{ConicProgram, Solution};

pub use refine::refine;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scaling {
    None,
    Ruiz { iters: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Tolerance on normalized infeasibility certificates.
    pub eps_infeas: f64,
    pub max_iter: usize,
    pub scaling: Scaling,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub time_limit: Option<f64>,
    /// Recorded for reproducibility; the iteration has no random components.
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            eps_infeas: 1e-8,
            max_iter: 200_000,
            scaling: Scaling::Ruiz { iters: 10 },
            alpha: 1.5,
            time_limit: None,
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_abs = eps;
        self.eps_rel = eps;
        self
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        let ok = self.eps_abs > 0.0
            && self.eps_rel > 0.0
            && self.eps_infeas > 0.0
            && self.max_iter >= 1
            && self.alpha > 0.0
            && self.alpha < 2.0;
        if ok {
            Ok(())
        } else {
            Err(crate::error::RermError::InvalidCone(format!("invalid solver settings {self:?}")))
        }
    }
}

/// Anything that maps a program and settings to a solution. The embedded
/// solver is the default; tests can substitute another implementation.
pub trait Backend: Sync {
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Solution;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Embedded;

impl Backend for Embedded {
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Solution {
        solve(prog, settings)
    }
}

/// Solve `prog`. Deterministic for identical inputs.
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Solution {
    admm::Admm::new(prog, settings).run()
}

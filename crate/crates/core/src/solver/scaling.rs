//! Ruiz equilibration of the constraint matrix.
//!
//! Row factors are shared within each second-order and exponential cone
//! block so that scaled slacks stay in the same cone.

use crate::cone::Cone;
use crate::sparse::CscMatrix;

const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

pub struct Equilibration {
    /// Row scaling `D`.
    pub row: Vec<f64>,
    /// Column scaling `E`.
    pub col: Vec<f64>,
}

impl Equilibration {
    pub fn identity(m: usize, n: usize) -> Self {
        Equilibration {
            row: vec![1.0; m],
            col: vec![1.0; n],
        }
    }

    /// Scale `a` in place to `D A E` and return the accumulated factors.
    pub fn ruiz(a: &mut CscMatrix, cones: &[Cone], iters: usize) -> Self {
        let (m, n) = (a.nrows(), a.ncols());
        let mut eq = Self::identity(m, n);
        for _ in 0..iters {
            let mut rnorm = vec![0.0f64; m];
            let mut cnorm = vec![0.0f64; n];
            for (i, j, v) in a.iter() {
                rnorm[i] = rnorm[i].max(v.abs());
                cnorm[j] = cnorm[j].max(v.abs());
            }
            let mut off = 0;
            for c in cones {
                let d = c.dim();
                if matches!(c, Cone::SecondOrder { .. } | Cone::Exponential | Cone::DualExponential) {
                    let mean = rnorm[off..off + d].iter().sum::<f64>() / d as f64;
                    rnorm[off..off + d].iter_mut().for_each(|v| *v = mean);
                }
                off += d;
            }
            let mut dr = vec![1.0; m];
            let mut dc = vec![1.0; n];
            for i in 0..m {
                let next = (eq.row[i] * factor(rnorm[i])).clamp(MIN_SCALE, MAX_SCALE);
                dr[i] = next / eq.row[i];
                eq.row[i] = next;
            }
            for j in 0..n {
                let next = (eq.col[j] * factor(cnorm[j])).clamp(MIN_SCALE, MAX_SCALE);
                dc[j] = next / eq.col[j];
                eq.col[j] = next;
            }
            a.scale(&dr, &dc);
        }
        eq
    }
}

fn factor(norm: f64) -> f64 {
    if norm < 1e-12 {
        1.0
    } else {
        1.0 / norm.sqrt()
    }
}

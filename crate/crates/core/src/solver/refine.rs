use crate::program::{ConicProgram, Solution};
use crate::sparse::dot;

const ROUNDS: usize = 50;
const BACKTRACK: usize = 30;

/// Polish a solution by projected gradient steps on
/// `|Az + b - P_K(Az + b)|^2 + |A^T y - q|^2 + (q^T z + b^T y)^2`.
///
/// A step is kept only when it lowers the largest relative residual, so
/// the result is never worse than the input. Solutions carrying an
/// infeasibility certificate are returned unchanged, and the status is
/// never altered.
pub fn refine(prog: &ConicProgram, solution: &Solution) -> Solution {
    let mut out = solution.clone();
    let (n, m) = (prog.num_vars(), prog.num_rows());
    if solution.certificate.is_some() || n + m == 0 || out.primal.len() != n || out.dual.len() != m {
        return out;
    }
    if !out.primal.iter().chain(&out.dual).all(|v| v.is_finite()) {
        return out;
    }
    let cones = prog.cone_ranges();
    let (mut res, _) = prog.residuals(&out.primal, &out.dual);
    let mut score = res.max_relative();
    let mut step = 1.0;

    for _ in 0..ROUNDS {
        if score <= f64::EPSILON {
            break;
        }
        let z = &out.primal;
        let y = &out.dual;
        let mut affine = vec![0.0; m];
        prog.a().mul_vec(z, &mut affine);
        for (a, b) in affine.iter_mut().zip(prog.b()) {
            *a += b;
        }
        let mut rp = affine.clone();
        for (c, r) in &cones {
            let mut s = rp[r.clone()].to_vec();
            c.project_in_place(&mut s);
            for (v, p) in rp[r.clone()].iter_mut().zip(&s) {
                *v -= p;
            }
        }
        let mut rd = vec![0.0; n];
        prog.a().tmul_vec(y, &mut rd);
        for (v, q) in rd.iter_mut().zip(prog.q()) {
            *v -= q;
        }
        let gap = dot(prog.q(), z) + dot(prog.b(), y);

        let mut gz = vec![0.0; n];
        prog.a().tmul_vec(&rp, &mut gz);
        for (g, q) in gz.iter_mut().zip(prog.q()) {
            *g += gap * q;
        }
        let mut gy = vec![0.0; m];
        prog.a().mul_vec(&rd, &mut gy);
        for (g, b) in gy.iter_mut().zip(prog.b()) {
            *g += gap * b;
        }

        let mut improved = false;
        let mut t = step;
        for _ in 0..BACKTRACK {
            let z2: Vec<f64> = z.iter().zip(&gz).map(|(v, g)| v - t * g).collect();
            let mut y2: Vec<f64> = y.iter().zip(&gy).map(|(v, g)| v - t * g).collect();
            for (c, r) in &cones {
                c.dual().project_in_place(&mut y2[r.clone()]);
            }
            let (r2, _) = prog.residuals(&z2, &y2);
            let s2 = r2.max_relative();
            if s2 < score {
                out.primal = z2;
                out.dual = y2;
                res = r2;
                score = s2;
                improved = true;
                step = t * 2.0;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }

    let (res2, slack) = prog.residuals(&out.primal, &out.dual);
    debug_assert_eq!(res, res2);
    out.residuals = res2;
    out.slack = slack;
    out.objective = dot(prog.q(), &out.primal);
    out
}

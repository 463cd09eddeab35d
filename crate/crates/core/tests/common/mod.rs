#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rerm_core::cone::Cone;
use rerm_core::program::ConicProgram;
use rerm_core::sparse::CscMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A complementary pair `(s, y)` with `s in K`, `y in K*`, `s^T y = 0`,
/// block by block, with at least `rows` entries.
pub fn complementary_pair(rng: &mut ChaCha8Rng, rows: usize) -> (Vec<Cone>, Vec<f64>, Vec<f64>) {
    let mut cones = vec![];
    let mut s = vec![];
    let mut y = vec![];
    while s.len() < rows {
        match rng.random_range(0..4) {
            0 => {
                cones.push(Cone::zero(1));
                s.push(0.0);
                y.push(rng.random_range(-1.0..1.0));
            }
            1 => {
                let k = rng.random_range(1..4);
                cones.push(Cone::nonneg(k));
                for _ in 0..k {
                    let v: f64 = rng.random_range(0.1..1.0);
                    if rng.random::<bool>() {
                        s.push(v);
                        y.push(0.0);
                    } else {
                        s.push(0.0);
                        y.push(v);
                    }
                }
            }
            2 => {
                let k = rng.random_range(2..5);
                cones.push(Cone::soc(k));
                let u: Vec<f64> = (0..k - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nu = norm2(&u);
                let (a, c) = (rng.random_range(0.1..1.0), rng.random_range(0.1..1.0));
                s.push(a);
                y.push(c);
                for v in &u {
                    s.push(a * v / nu);
                    y.push(-c * v / nu);
                }
            }
            _ => {
                cones.push(Cone::Exponential);
                let rho: f64 = rng.random_range(-1.0..1.0);
                let (sg, mu) = (rng.random_range(0.2..1.0), rng.random_range(0.2..1.0));
                s.extend([sg * rho, sg, sg * rho.exp()]);
                y.extend([-mu, mu * (rho - 1.0), mu * (-rho).exp()]);
            }
        }
    }
    (cones, s, y)
}

/// A feasible, bounded program with a known optimal value, built from a
/// complementary primal-dual pair.
pub fn kkt_program(rng: &mut ChaCha8Rng, n: usize) -> (ConicProgram, f64) {
    let (cones, s, y) = complementary_pair(rng, n + 3);
    let m = s.len();
    let mut t = vec![];
    for j in 0..n {
        t.push((j % m, j, rng.random_range(0.5..1.5)));
        for _ in 0..2 {
            t.push((rng.random_range(0..m), j, rng.random_range(-1.0..1.0)));
        }
    }
    let a = CscMatrix::from_triplets(m, n, &t);
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut az = vec![0.0; m];
    a.mul_vec(&z, &mut az);
    let b: Vec<f64> = s.iter().zip(&az).map(|(s, a)| s - a).collect();
    let mut q = vec![0.0; n];
    a.tmul_vec(&y, &mut q);
    let opt = dot(&q, &z);
    (ConicProgram::new(q, a, b, cones, vec![("z".into(), 0..n)]).unwrap(), opt)
}

fn random_dense(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// A program that admits `y in K*`, `A^T y = 0`, `b^T y = -1`.
pub fn primal_infeasible_program(rng: &mut ChaCha8Rng, n: usize) -> ConicProgram {
    let (cones, _, mut y) = complementary_pair(rng, n + 2);
    if norm2(&y) == 0.0 {
        y[0] = 1.0;
    }
    let m = y.len();
    let yy = dot(&y, &y);
    let mut a = random_dense(rng, m, n);
    for j in 0..n {
        let col: f64 = (0..m).map(|i| a[i][j] * y[i]).sum();
        for i in 0..m {
            a[i][j] -= y[i] * col / yy;
        }
    }
    let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let by = dot(&b, &y);
    for i in 0..m {
        b[i] -= y[i] * (by + 1.0) / yy;
    }
    // q = A^T y0 with y0 in K* keeps the dual feasible
    let y0 = dual_cone_point(&cones, rng);
    let q: Vec<f64> = (0..n).map(|j| (0..m).map(|i| a[i][j] * y0[i]).sum()).collect();
    ConicProgram::new(q, CscMatrix::from_dense(&a), b, cones, vec![("z".into(), 0..n)]).unwrap()
}

/// A feasible program with a ray `A z in K`, `q^T z = -1`.
pub fn dual_infeasible_program(rng: &mut ChaCha8Rng, n: usize) -> ConicProgram {
    let (cones, s, _) = complementary_pair(rng, n + 2);
    let m = s.len();
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let zz = dot(&z, &z);
    let mut a = random_dense(rng, m, n);
    for i in 0..m {
        let r = s[i] - dot(&a[i], &z);
        for j in 0..n {
            a[i][j] += r * z[j] / zz;
        }
    }
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let qz = dot(&q, &z);
    for j in 0..n {
        q[j] -= z[j] * (qz + 1.0) / zz;
    }
    // b = s0 - A z0 keeps the primal feasible
    let s0 = cone_point(&cones, rng);
    let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..m).map(|i| s0[i] - dot(&a[i], &z0)).collect();
    ConicProgram::new(q, CscMatrix::from_dense(&a), b, cones, vec![("z".into(), 0..n)]).unwrap()
}

/// A point of `K` shaped like `cones`.
fn cone_point(cones: &[Cone], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = vec![];
    for c in cones {
        match *c {
            Cone::Zero { dim: k } => s.extend(std::iter::repeat_n(0.0, k)),
            Cone::Nonneg { dim: k } => s.extend((0..k).map(|_| rng.random_range(0.1..1.0))),
            Cone::SecondOrder { dim: k } => {
                let u: Vec<f64> = (0..k - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                s.push(norm2(&u) + rng.random_range(0.0..1.0));
                s.extend(u);
            }
            _ => {
                let (r, t): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
                s.extend([r * t, t, t * r.exp() + rng.random_range(0.0..1.0)]);
            }
        }
    }
    s
}

/// A point of `K*` shaped like `cones`.
fn dual_cone_point(cones: &[Cone], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y = vec![];
    for c in cones {
        match *c {
            Cone::Zero { dim: k } => y.extend((0..k).map(|_| rng.random_range(-1.0..1.0))),
            Cone::Exponential => {
                let (rho, mu): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0));
                y.extend([-mu, mu * (rho - 1.0), mu * (-rho).exp() + rng.random_range(0.1..1.0)]);
            }
            other => y.extend(cone_point(&[other], rng)),
        }
    }
    y
}

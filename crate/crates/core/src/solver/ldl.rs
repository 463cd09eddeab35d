//! Sparse LDL^T factorization for symmetric quasidefinite matrices.
//!
//! Up-looking factorization over the elimination tree, preceded by a
//! minimum-degree fill-reducing permutation. Quasidefinite matrices are
//! strongly factorizable, so no pivoting is needed for any symmetric
//! permutation; tiny pivots are clamped to a signed regularization.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::sparse::CscMatrix;

#[derive(Debug)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPivot(pub usize);

impl LdlFactor {
    /// Factor the symmetric matrix whose upper triangle (including the
    /// diagonal) is `upper`. `signs[k]` is the expected sign of pivot `k`
    /// in the original ordering, used for regularizing tiny pivots.
    pub fn new(upper: &CscMatrix, signs: &[f64], reg: f64) -> Result<Self, ZeroPivot> {
        let n = upper.ncols();
        assert_eq!(upper.nrows(), n);
        let perm = min_degree_order(upper);
        let mut pinv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        let c = permute_upper(upper, &pinv);
        let psigns: Vec<f64> = perm.iter().map(|&p| signs[p]).collect();

        let (lp, parent) = symbolic(&c);
        let nnz = lp[n];
        let mut f = LdlFactor {
            n,
            perm,
            lp,
            li: vec![0; nnz],
            lx: vec![0.0; nnz],
            d: vec![0.0; n],
        };
        f.numeric(&c, &parent, &psigns, reg)?;
        Ok(f)
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    fn numeric(&mut self, c: &CscMatrix, parent: &[usize], signs: &[f64], reg: f64) -> Result<(), ZeroPivot> {
        let n = self.n;
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let (rows, vals) = c.col(k);
            for (&i0, &v) in rows.iter().zip(vals) {
                y[i0] += v;
                let mut len = 0;
                let mut i = i0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = self.lp[i] + lnz[i];
                for p in self.lp[i]..p2 {
                    y[self.li[p]] -= self.lx[p] * yi;
                }
                let lki = yi / self.d[i];
                dk -= lki * yi;
                self.li[p2] = k;
                self.lx[p2] = lki;
                lnz[i] += 1;
                top += 1;
            }
            if !dk.is_finite() {
                return Err(ZeroPivot(self.perm[k]));
            }
            if dk * signs[k] <= reg {
                if reg == 0.0 {
                    return Err(ZeroPivot(self.perm[k]));
                }
                dk = signs[k] * reg;
            }
            self.d[k] = dk;
        }
        Ok(())
    }

    /// Solve `K x = b` in place.
    pub fn solve(&self, b: &mut [f64], work: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            work[k] = b[self.perm[k]];
        }
        for j in 0..n {
            let xj = work[j];
            for p in self.lp[j]..self.lp[j + 1] {
                work[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            work[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = work[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * work[self.li[p]];
            }
            work[j] = s;
        }
        for k in 0..n {
            b[self.perm[k]] = work[k];
        }
    }
}

/// Column pointers of L and the elimination tree (`usize::MAX` = root).
fn symbolic(c: &CscMatrix) -> (Vec<usize>, Vec<usize>) {
    let n = c.ncols();
    let mut parent = vec![usize::MAX; n];
    let mut flag = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    for k in 0..n {
        flag[k] = k;
        for &i0 in c.col(k).0 {
            let mut i = i0;
            if i >= k {
                continue;
            }
            while flag[i] != k {
                if parent[i] == usize::MAX {
                    parent[i] = k;
                }
                lnz[i] += 1;
                flag[i] = k;
                i = parent[i];
            }
        }
    }
    let mut lp = vec![0; n + 1];
    for k in 0..n {
        lp[k + 1] = lp[k] + lnz[k];
    }
    (lp, parent)
}

/// Upper triangle of `P K P^T` given the upper triangle of `K`.
fn permute_upper(upper: &CscMatrix, pinv: &[usize]) -> CscMatrix {
    let t: Vec<_> = upper
        .iter()
        .filter(|&(i, j, _)| i <= j)
        .map(|(i, j, v)| {
            let (a, b) = (pinv[i], pinv[j]);
            (a.min(b), a.max(b), v)
        })
        .collect();
    CscMatrix::from_triplets(upper.nrows(), upper.ncols(), &t)
}

/// Minimum-degree ordering on the explicit elimination graph. Ties break on
/// the lower index, so the ordering is deterministic.
pub fn min_degree_order(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in upper.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            // adj[u] <- (adj[u] \ {v}) U (nbrs \ {u})
            merged.clear();
            let au = &adj[u];
            let (mut a, mut b) = (0, 0);
            while a < au.len() || b < nbrs.len() {
                let x = if b >= nbrs.len() || (a < au.len() && au[a] < nbrs[b]) {
                    a += 1;
                    au[a - 1]
                } else if a >= au.len() || nbrs[b] < au[a] {
                    b += 1;
                    nbrs[b - 1]
                } else {
                    a += 1;
                    b += 1;
                    au[a - 1]
                };
                if x != u && x != v {
                    merged.push(x);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn upper_of(dense: &[Vec<f64>]) -> CscMatrix {
        let n = dense.len();
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if dense[i][j] != 0.0 {
                    t.push((i, j, dense[i][j]));
                }
            }
        }
        CscMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solves_random_quasidefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let (nx, ny) = (3 + trial % 7, 2 + trial % 5);
            let n = nx + ny;
            let mut k = vec![vec![0.0; n]; n];
            for i in 0..nx {
                k[i][i] = 1.0 + rng.random::<f64>();
            }
            for i in nx..n {
                k[i][i] = -(0.5 + rng.random::<f64>());
            }
            for i in nx..n {
                for j in 0..nx {
                    if rng.random::<f64>() < 0.4 {
                        let v = rng.random_range(-2.0..2.0);
                        k[i][j] = v;
                        k[j][i] = v;
                    }
                }
            }
            let signs: Vec<f64> = (0..n).map(|i| if i < nx { 1.0 } else { -1.0 }).collect();
            let f = LdlFactor::new(&upper_of(&k), &signs, 0.0).unwrap();
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * xs[j]).sum()).collect();
            let mut work = vec![0.0; n];
            f.solve(&mut b, &mut work);
            for i in 0..n {
                assert!((b[i] - xs[i]).abs() < 1e-10, "trial {trial}");
            }
        }
    }

    #[test]
    fn ordering_is_a_permutation_and_defers_hubs() {
        // star graph: hub 0 connected to every leaf; min degree eliminates leaves first
        let n = 6;
        let mut t = vec![];
        for j in 0..n {
            t.push((j, j, 4.0));
        }
        for j in 1..n {
            t.push((0, j, 1.0));
        }
        let m = CscMatrix::from_triplets(n, n, &t);
        let order = min_degree_order(&m);
        let mut s = order.clone();
        s.sort();
        assert_eq!(s, (0..n).collect::<Vec<_>>());
        assert!(order[..n - 2].iter().all(|&v| v != 0));
        let f = LdlFactor::new(&m, &vec![1.0; n], 0.0).unwrap();
        // no fill for a star when the hub goes last
        assert_eq!(f.nnz(), n - 1);
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let m = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]);
        assert!(LdlFactor::new(&m, &[1.0, 1.0], 0.0).is_err());
    }
}

//! Column-compressed sparse matrices.
//!
//! Row indices inside each column are sorted and duplicate triplets are
//! summed when the matrix is finalized, so assembly order never changes the
//! stored representation.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowval: Vec<usize>,
    nzval: Vec<f64>,
}

/// Coordinate-format entry list, the JSON shape of a matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowval: Vec::new(),
            nzval: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CscMatrix {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowval: (0..n).collect(),
            nzval: vec![1.0; n],
        }
    }

    /// Build from `(row, col, value)` entries. Duplicates are summed; entries
    /// that sum to exactly zero are dropped.
    ///
    /// Panics if an index is out of range.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        for &(r, c, _) in &sorted {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of range {nrows}x{ncols}");
        }
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));

        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(sorted.len());
        let mut nzval = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (r, c, _) = sorted[k];
            let mut v = 0.0;
            while k < sorted.len() && sorted[k].0 == r && sorted[k].1 == c {
                v += sorted[k].2;
                k += 1;
            }
            if v != 0.0 {
                rowval.push(r);
                nzval.push(v);
                colptr[c + 1] += 1;
            }
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        CscMatrix {
            nrows,
            ncols,
            colptr,
            rowval,
            nzval,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.nzval.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowval(&self) -> &[usize] {
        &self.rowval
    }

    pub fn nzval(&self) -> &[f64] {
        &self.nzval
    }

    pub(crate) fn nzval_mut(&mut self) -> &mut [f64] {
        &mut self.nzval
    }

    /// `(row indices, values)` of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.colptr[j], self.colptr[j + 1]);
        (&self.rowval[a..b], &self.nzval[a..b])
    }

    /// Iterate `(row, col, value)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            let (r, v) = self.col(j);
            r.iter().zip(v).map(move |(&i, &x)| (i, j, x))
        })
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        self.mul_vec_acc(x, y);
    }

    /// `y += A x`.
    pub fn mul_vec_acc(&self, x: &[f64], y: &mut [f64]) {
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.col(j);
            for (&i, &a) in rows.iter().zip(vals) {
                y[i] += a * xj;
            }
        }
    }

    /// `x = A^T y`.
    pub fn tmul_vec(&self, y: &[f64], x: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        debug_assert_eq!(x.len(), self.ncols);
        for (j, out) in x.iter_mut().enumerate() {
            let (rows, vals) = self.col(j);
            *out = rows.iter().zip(vals).map(|(&i, &a)| a * y[i]).sum();
        }
    }

    pub fn transpose(&self) -> CscMatrix {
        let t: Vec<_> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        CscMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            d[i][j] = v;
        }
        d
    }

    /// Scale rows by `dr` and columns by `dc`: `diag(dr) A diag(dc)`.
    pub(crate) fn scale(&mut self, dr: &[f64], dc: &[f64]) {
        for j in 0..self.ncols {
            let (a, b) = (self.colptr[j], self.colptr[j + 1]);
            for k in a..b {
                self.nzval[k] *= dr[self.rowval[k]] * dc[j];
            }
        }
    }

    pub fn to_triplets(&self) -> Triplets {
        let mut t = Triplets {
            nrows: self.nrows,
            ncols: self.ncols,
            ..Default::default()
        };
        for (i, j, v) in self.iter() {
            t.rows.push(i);
            t.cols.push(j);
            t.vals.push(v);
        }
        t
    }
}

impl Triplets {
    pub fn to_csc(&self) -> Option<CscMatrix> {
        let n = self.rows.len();
        if self.cols.len() != n || self.vals.len() != n {
            return None;
        }
        if self.rows.iter().any(|&r| r >= self.nrows) || self.cols.iter().any(|&c| c >= self.ncols) {
            return None;
        }
        let e: Vec<_> = (0..n).map(|k| (self.rows[k], self.cols[k], self.vals[k])).collect();
        Some(CscMatrix::from_triplets(self.nrows, self.ncols, &e))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

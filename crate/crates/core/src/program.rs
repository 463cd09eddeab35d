//! Conic program intermediate representation.
//!
//! A program is
//!
//! ```text
//! minimize    q^T z
//! subject to  A z + b in K_1 x ... x K_m
//! ```
//!
//! with dual `maximize -b^T y  s.t.  A^T y = q,  y in K*`. Every
//! canonicalization in this crate compiles into this one form.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::error::{RermError, Result};
use crate::sparse::{dot, norm_inf, CscMatrix, Triplets};

pub const FORMAT_VERSION: u32 = 1;

/// Sparse affine expression `sum_k coef_k z_{col_k} + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(col: usize) -> Self {
        Affine {
            terms: vec![(col, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, col: usize, coef: f64) -> Self {
        self.terms.push((col, coef));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.1 *= a);
        self.constant *= a;
        self
    }

    pub fn add(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(c, a)| a * z[c]).sum::<f64>() + self.constant
    }
}

/// A cone together with the affine rows that must lie in it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeRows {
    pub cone: Cone,
    pub rows: Vec<Affine>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    q: Vec<f64>,
    a: CscMatrix,
    b: Vec<f64>,
    cones: Vec<Cone>,
    names: Vec<(String, Range<usize>)>,
}

impl ConicProgram {
    /// Assemble and validate. `names` must partition `0..q.len()`.
    pub fn new(
        q: Vec<f64>,
        a: CscMatrix,
        b: Vec<f64>,
        cones: Vec<Cone>,
        names: Vec<(String, Range<usize>)>,
    ) -> Result<Self> {
        let p = ConicProgram { q, a, b, cones, names };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.len();
        if self.a.ncols() != n {
            return Err(RermError::dim("program columns", n, self.a.ncols()));
        }
        let m: usize = self.cones.iter().map(Cone::dim).sum();
        if self.a.nrows() != m {
            return Err(RermError::dim("program rows vs total cone dimension", m, self.a.nrows()));
        }
        if self.b.len() != m {
            return Err(RermError::dim("offset vector", m, self.b.len()));
        }
        for c in &self.cones {
            c.validate()?;
        }
        let mut ranges: Vec<&Range<usize>> = self.names.iter().map(|(_, r)| r).collect();
        ranges.sort_by_key(|r| r.start);
        let mut next = 0;
        for r in ranges {
            if r.start != next || r.end < r.start {
                return Err(RermError::InvalidCone(format!(
                    "variable names do not partition columns: gap or overlap at {next}"
                )));
            }
            next = r.end;
        }
        if next != n {
            return Err(RermError::InvalidCone(format!(
                "variable names cover {next} of {n} columns"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &self.names {
            if !seen.insert(name.as_str()) {
                return Err(RermError::InvalidCone(format!("duplicate variable name {name}")));
            }
        }
        if self.q.iter().chain(&self.b).chain(self.a.nzval()).any(|v| !v.is_finite()) {
            return Err(RermError::InvalidCone("non-finite program data".into()));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn a(&self) -> &CscMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn names(&self) -> &[(String, Range<usize>)] {
        &self.names
    }

    pub fn var(&self, name: &str) -> Option<Range<usize>> {
        self.names.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    /// Slice of the cone list as row ranges.
    pub fn cone_ranges(&self) -> Vec<(Cone, Range<usize>)> {
        let mut off = 0;
        self.cones
            .iter()
            .map(|&c| {
                let r = off..off + c.dim();
                off = r.end;
                (c, r)
            })
            .collect()
    }

    /// Residuals of a candidate primal/dual pair, recomputed from the
    /// program data. The slack is taken as `P_K(Az + b)`.
    pub fn residuals(&self, z: &[f64], y: &[f64]) -> (Residuals, Vec<f64>) {
        let mut az = vec![0.0; self.num_rows()];
        self.a.mul_vec(z, &mut az);
        let affine: Vec<f64> = az.iter().zip(&self.b).map(|(a, b)| a + b).collect();
        let mut s = affine.clone();
        for (c, r) in self.cone_ranges() {
            c.project_in_place(&mut s[r]);
        }
        let rp: Vec<f64> = affine.iter().zip(&s).map(|(a, b)| a - b).collect();

        let mut aty = vec![0.0; self.num_vars()];
        self.a.tmul_vec(y, &mut aty);
        let rd: Vec<f64> = aty.iter().zip(&self.q).map(|(a, q)| a - q).collect();

        let pobj = dot(&self.q, z);
        let dobj = -dot(&self.b, y);
        let primal = norm_inf(&rp);
        let dual = norm_inf(&rd);
        let gap = (pobj - dobj).abs();
        let res = Residuals {
            primal,
            dual,
            gap,
            primal_scale: norm_inf(&az).max(norm_inf(&self.b)).max(norm_inf(&s)),
            dual_scale: norm_inf(&aty).max(norm_inf(&self.q)),
            gap_scale: pobj.abs().max(dobj.abs()),
        };
        (res, s)
    }

    pub fn to_document(&self) -> ProgramDocument {
        ProgramDocument {
            version: FORMAT_VERSION,
            q: self.q.clone(),
            a: self.a.to_triplets(),
            b: self.b.clone(),
            cones: self.cones.clone(),
            names: self
                .names
                .iter()
                .map(|(n, r)| (n.clone(), [r.start, r.end]))
                .collect(),
        }
    }

    pub fn from_document(doc: ProgramDocument) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(RermError::Schema {
                pointer: "/version".into(),
                message: format!("unsupported version {}", doc.version),
            });
        }
        let a = doc.a.to_csc().ok_or_else(|| RermError::Schema {
            pointer: "/A".into(),
            message: "malformed triplets".into(),
        })?;
        let names = doc.names.into_iter().map(|(n, [s, e])| (n, s..e)).collect();
        ConicProgram::new(doc.q, a, doc.b, doc.cones, names)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("program document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ProgramDocument = serde_json::from_str(s)?;
        Self::from_document(doc)
    }
}

/// Versioned JSON form of a [`ConicProgram`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramDocument {
    pub version: u32,
    pub q: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Triplets,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub names: BTreeMap<String, [usize; 2]>,
}

/// Incremental program assembly.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    q: Vec<f64>,
    names: Vec<(String, Range<usize>)>,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    /// Reserve `len` fresh columns under `name`. Zero-length variables are
    /// not recorded.
    pub fn add_var(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        let start = self.q.len();
        self.q.resize(start + len, 0.0);
        let r = start..start + len;
        if len > 0 {
            self.names.push((name.into(), r.clone()));
        }
        r
    }

    pub fn set_cost(&mut self, col: usize, c: f64) {
        self.q[col] = c;
    }

    pub fn add_cost(&mut self, col: usize, c: f64) {
        self.q[col] += c;
    }

    /// Require `rows in cone`. `Free` blocks are accepted and dropped.
    pub fn push(&mut self, block: ConeRows) {
        assert_eq!(block.rows.len(), block.cone.dim(), "rows do not match cone dimension");
        if matches!(block.cone, Cone::Free { .. }) {
            return;
        }
        let base = self.b.len();
        for (k, row) in block.rows.iter().enumerate() {
            for &(c, v) in &row.terms {
                assert!(c < self.q.len(), "column {c} not allocated");
                self.triplets.push((base + k, c, v));
            }
            self.b.push(row.constant);
        }
        // merge adjacent linear blocks of the same kind
        match (self.cones.last_mut(), block.cone) {
            (Some(Cone::Zero { dim }), Cone::Zero { dim: d }) => *dim += d,
            (Some(Cone::Nonneg { dim }), Cone::Nonneg { dim: d }) => *dim += d,
            _ => self.cones.push(block.cone),
        }
    }

    pub fn push_all(&mut self, blocks: impl IntoIterator<Item = ConeRows>) {
        for b in blocks {
            self.push(b);
        }
    }

    pub fn build(self) -> Result<ConicProgram> {
        let n = self.q.len();
        let m = self.b.len();
        let a = CscMatrix::from_triplets(m, n, &self.triplets);
        ConicProgram::new(self.q, a, self.b, self.cones, self.names)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterLimit,
    NumericalError,
}

/// Absolute residuals (infinity norms) and the magnitudes they are
/// compared against: a residual `r` with scale `s` passes at
/// `(eps_abs, eps_rel)` when `r <= eps_abs + eps_rel * s`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub primal_scale: f64,
    pub dual_scale: f64,
    pub gap_scale: f64,
}

impl Residuals {
    pub fn within(&self, eps_abs: f64, eps_rel: f64) -> bool {
        self.primal <= eps_abs + eps_rel * self.primal_scale
            && self.dual <= eps_abs + eps_rel * self.dual_scale
            && self.gap <= eps_abs + eps_rel * self.gap_scale
    }

    /// Largest of the three residuals, each divided by `1 + scale`.
    pub fn max_relative(&self) -> f64 {
        (self.primal / (1.0 + self.primal_scale))
            .max(self.dual / (1.0 + self.dual_scale))
            .max(self.gap / (1.0 + self.gap_scale))
    }

    pub fn max_abs(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateKind {
    /// `y in K*`, `A^T y = 0`, `b^T y < 0`; normalized to `b^T y = -1`.
    PrimalInfeasible,
    /// `A z in K`, `q^T z < 0`; normalized to `q^T z = -1`.
    DualInfeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub witness: Vec<f64>,
    /// Infinity norm of the violated certificate conditions.
    pub residual: f64,
}

impl Certificate {
    /// Recompute the certificate residual against `prog`.
    pub fn check(&self, prog: &ConicProgram) -> f64 {
        match self.kind {
            CertificateKind::PrimalInfeasible => {
                let y = &self.witness;
                let mut aty = vec![0.0; prog.num_vars()];
                prog.a().tmul_vec(y, &mut aty);
                let mut cone_err: f64 = 0.0;
                for (c, r) in prog.cone_ranges() {
                    cone_err = cone_err.max(crate::cone::distance(c.dual(), &y[r]));
                }
                let by = dot(prog.b(), y);
                norm_inf(&aty).max(cone_err).max((by + 1.0).max(0.0))
            }
            CertificateKind::DualInfeasible => {
                let z = &self.witness;
                let mut az = vec![0.0; prog.num_rows()];
                prog.a().mul_vec(z, &mut az);
                let mut cone_err: f64 = 0.0;
                for (c, r) in prog.cone_ranges() {
                    cone_err = cone_err.max(crate::cone::distance(c, &az[r]));
                }
                let qz = dot(prog.q(), z);
                cone_err.max((qz + 1.0).max(0.0))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub slack: Vec<f64>,
    pub objective: f64,
    pub residuals: Residuals,
    pub certificate: Option<Certificate>,
    pub iterations: usize,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

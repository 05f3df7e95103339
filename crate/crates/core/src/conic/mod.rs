//! Dense conic programs with PSD blocks and an embedded interior-point solver.
//!
//! A program reads
//!
//! ```text
//! minimize    c'z - tau * logdet G(z)
//! subject to  S_k(z) = C_k + sum_i z_i F_{k,i}  PSD   for every block k
//!             A z = b
//! ```
//!
//! where `G` (optional, `tau = 1`) and the `S_k` are affine symmetric-matrix
//! valued maps.  Dual matrices follow the Lagrangian
//! `L = f(z) - sum_k <Lambda_k, S_k(z)> - nu'(A z - b)`.

mod barrier;
mod reformulate;
mod sdpa;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use barrier::solve;
pub use reformulate::{reformulate_criterion, CriterionReformulation};
pub use sdpa::write_sdpa;

/// One upper-triangular coefficient `(row, col, value)` with `row <= col`.
pub type Entry = (usize, usize, f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalTrouble,
}

/// Affine map `z -> C + sum_i z_i F_i` into symmetric `size x size` matrices,
/// optionally restricted to a face `P' S(z) P`.
#[derive(Clone, Debug)]
pub struct AffineBlock {
    size: usize,
    constant: DMatrix<f64>,
    coeffs: Vec<Vec<Entry>>,
    face: Option<DMatrix<f64>>,
    pub label: String,
}

impl AffineBlock {
    pub fn new(size: usize, num_vars: usize, label: impl Into<String>) -> Self {
        AffineBlock {
            size,
            constant: DMatrix::zeros(size, size),
            coeffs: vec![Vec::new(); num_vars],
            face: None,
            label: label.into(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_vars(&self) -> usize {
        self.coeffs.len()
    }

    /// Size after restriction to the face (equal to `size` without one).
    pub fn reduced_size(&self) -> usize {
        self.face.as_ref().map_or(self.size, |p| p.ncols())
    }

    pub fn face(&self) -> Option<&DMatrix<f64>> {
        self.face.as_ref()
    }

    /// Adds `v` to entries `(r, c)` and `(c, r)` of `F_var`.
    pub fn add(&mut self, var: usize, r: usize, c: usize, v: f64) {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        if v != 0.0 {
            self.coeffs[var].push((r, c, v));
        }
    }

    /// Adds `v` to entries `(r, c)` and `(c, r)` of the constant term.
    pub fn add_constant(&mut self, r: usize, c: usize, v: f64) {
        self.constant[(r, c)] += v;
        if r != c {
            self.constant[(c, r)] += v;
        }
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn entries(&self, var: usize) -> &[Entry] {
        &self.coeffs[var]
    }

    /// Extends the variable space (new variables do not enter this block).
    pub fn resize_vars(&mut self, num_vars: usize) {
        self.coeffs.resize(num_vars, Vec::new());
    }

    pub fn coefficient_matrix(&self, var: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(r, c, v) in &self.coeffs[var] {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }

    /// `S(z)` in full (unrestricted) coordinates.
    pub fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (i, list) in self.coeffs.iter().enumerate() {
            let zi = z[i];
            if zi == 0.0 {
                continue;
            }
            for &(r, c, v) in list {
                s[(r, c)] += zi * v;
                if r != c {
                    s[(c, r)] += zi * v;
                }
            }
        }
        s
    }

    /// `P' S(z) P`, the matrix the cone constraint actually applies to.
    pub fn eval_reduced(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let s = self.eval(z);
        match &self.face {
            Some(p) => p.transpose() * s * p,
            None => s,
        }
    }

    /// `(<W, F_i>)_i` for a symmetric `W` in full coordinates.
    pub fn adjoint(&self, w: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.coeffs.len(),
            self.coeffs.iter().map(|list| {
                list.iter()
                    .map(|&(r, c, v)| {
                        if r == c {
                            v * w[(r, c)]
                        } else {
                            v * (w[(r, c)] + w[(c, r)])
                        }
                    })
                    .sum()
            }),
        )
    }

    /// True when `self(z) = -other(z)` identically, coefficient-wise.
    pub fn is_negation_of(&self, other: &AffineBlock, tol: f64) -> bool {
        if self.size != other.size || self.num_vars() != other.num_vars() {
            return false;
        }
        if self.face.is_some() || other.face.is_some() {
            return false;
        }
        if (&self.constant + &other.constant).amax() > tol {
            return false;
        }
        let mut any = false;
        for i in 0..self.num_vars() {
            if self.coeffs[i].is_empty() && other.coeffs[i].is_empty() {
                continue;
            }
            any = true;
            let sum = self.coefficient_matrix(i) + other.coefficient_matrix(i);
            if sum.amax() > tol {
                return false;
            }
        }
        any
    }

    /// Restricts the block to the orthogonal complement of `kernel` (columns
    /// in the current reduced coordinates).
    pub fn restrict(&mut self, kernel: &DMatrix<f64>) {
        let m = self.reduced_size();
        let q = linalg::range_basis(kernel, 1e-12);
        let comp = linalg::complement_basis(&q, m);
        self.face = Some(match &self.face {
            Some(p) => p * comp,
            None => comp,
        });
    }

    fn validate(&self, num_vars: usize) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidInput(format!("block '{}' has size 0", self.label)));
        }
        if self.coeffs.len() != num_vars {
            return Err(Error::DimensionMismatch {
                expected: num_vars,
                found: self.coeffs.len(),
            });
        }
        let asym = linalg::asymmetry(&self.constant);
        if asym > 1e-12 * (1.0 + self.constant.amax()) {
            return Err(Error::NonSymmetricInput(asym));
        }
        for list in &self.coeffs {
            for &(r, c, v) in list {
                if r >= self.size || c >= self.size || !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "bad coefficient ({r}, {c}, {v}) in block '{}'",
                        self.label
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub cost: DVector<f64>,
    /// `G` in the objective term `-logdet G(z)`.
    pub logdet: Option<AffineBlock>,
    pub blocks: Vec<AffineBlock>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        ConicProgram {
            num_vars,
            cost: DVector::zeros(num_vars),
            logdet: None,
            blocks: Vec::new(),
            eq_matrix: DMatrix::zeros(0, num_vars),
            eq_rhs: DVector::zeros(0),
        }
    }

    /// Appends a fresh variable and returns its index.
    pub fn add_variable(&mut self) -> usize {
        let k = self.num_vars;
        self.num_vars += 1;
        self.cost = self.cost.clone().insert_row(k, 0.0);
        self.eq_matrix = self.eq_matrix.clone().insert_column(k, 0.0);
        for b in &mut self.blocks {
            b.resize_vars(self.num_vars);
        }
        if let Some(g) = &mut self.logdet {
            g.resize_vars(self.num_vars);
        }
        k
    }

    pub fn add_equality(&mut self, row: &[(usize, f64)], rhs: f64) {
        let k = self.eq_matrix.nrows();
        self.eq_matrix = self.eq_matrix.clone().insert_row(k, 0.0);
        for &(i, v) in row {
            self.eq_matrix[(k, i)] += v;
        }
        self.eq_rhs = self.eq_rhs.clone().insert_row(k, rhs);
    }

    pub fn num_equalities(&self) -> usize {
        self.eq_matrix.nrows()
    }

    /// Declares that `S_k(z) K = 0` on the feasible set: the rows are added as
    /// equalities and block `k` is restricted to the complement of `K`
    /// (columns given in the block's current reduced coordinates).
    pub fn add_block_kernel(&mut self, k: usize, kernel: &DMatrix<f64>) {
        let rows = kernel_equalities(&self.blocks[k], kernel, self.num_vars);
        for (row, rhs) in rows {
            let entries: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect();
            self.add_equality(&entries, rhs);
        }
        self.blocks[k].restrict(kernel);
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_vars == 0 {
            return Err(Error::InvalidInput("program has no variables".into()));
        }
        if self.cost.len() != self.num_vars || self.eq_matrix.ncols() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                found: self.cost.len().min(self.eq_matrix.ncols()),
            });
        }
        if self.eq_rhs.len() != self.eq_matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.eq_matrix.nrows(),
                found: self.eq_rhs.len(),
            });
        }
        if let Some(g) = &self.logdet {
            g.validate(self.num_vars)?;
        }
        for b in &self.blocks {
            b.validate(self.num_vars)?;
        }
        Ok(())
    }

    /// `c'z - logdet G(z)`; `+inf` outside the domain of the log-det term.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        let mut f = self.cost.dot(z);
        if let Some(g) = &self.logdet {
            match g.eval_reduced(z).cholesky() {
                Some(ch) => f -= 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
                None => return f64::INFINITY,
            }
        }
        f
    }
}

/// Rows of `S(z) K = 0` written as `(a, b)` with `a'z = b`.
pub(crate) fn kernel_equalities(
    block: &AffineBlock,
    kernel: &DMatrix<f64>,
    num_vars: usize,
) -> Vec<(DVector<f64>, f64)> {
    let p = block
        .face
        .clone()
        .unwrap_or_else(|| DMatrix::identity(block.size, block.size));
    // left factor spans the reduced coordinates; right factor the kernel
    let right = &p * kernel;
    let left = p;
    let c = left.transpose() * &block.constant * &right;
    let mut out = Vec::with_capacity(c.len());
    let mut coeff_prod: Vec<DMatrix<f64>> = Vec::with_capacity(num_vars);
    for i in 0..num_vars {
        if block.coeffs[i].is_empty() {
            coeff_prod.push(DMatrix::zeros(0, 0));
        } else {
            coeff_prod.push(left.transpose() * block.coefficient_matrix(i) * &right);
        }
    }
    for col in 0..right.ncols() {
        for row in 0..left.ncols() {
            let mut a = DVector::zeros(num_vars);
            for i in 0..num_vars {
                if !coeff_prod[i].is_empty() {
                    a[i] = coeff_prod[i][(row, col)];
                }
            }
            if a.amax() > 1e-14 || c[(row, col)].abs() > 1e-14 {
                out.push((a, -c[(row, col)]));
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Stop when the barrier duality-gap bound falls below
    /// `gap_tol * max(1, |objective|)`.
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    /// A phase-I margin below this (relative) triggers facial reduction.
    pub fr_tol: f64,
    pub max_facial_reductions: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-9,
            feas_tol: 1e-8,
            max_outer: 200,
            max_newton: 4000,
            mu: 10.0,
            fr_tol: 1e-9,
            max_facial_reductions: 12,
            seed: 0,
        }
    }
}

/// Equality added by the solver itself (facial reduction or merging an
/// opposing block pair), kept so that certificates can account for it.
#[derive(Clone, Debug)]
pub struct ExtraEquality {
    pub row: DVector<f64>,
    pub rhs: f64,
    pub dual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub outer_iterations: usize,
    pub newton_steps: usize,
    pub facial_reductions: usize,
    pub final_barrier_weight: f64,
    pub equality_residual: f64,
    pub stationarity_residual: f64,
    pub min_block_eigenvalue: f64,
    pub complementarity: Vec<f64>,
    pub phase_one_margin: f64,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolverStatus,
    pub z: DVector<f64>,
    pub objective: f64,
    /// Duality-gap bound at termination.
    pub gap: f64,
    /// One dual matrix per block, in full block coordinates.
    pub duals: Vec<DMatrix<f64>>,
    /// Dual of the log-det term, `G(z)^{-1}`.
    pub logdet_dual: Option<DMatrix<f64>>,
    pub eq_duals: DVector<f64>,
    pub extra_equalities: Vec<ExtraEquality>,
    /// Blocks replaced by equalities because they came as a pair `S, -S`.
    pub merged_blocks: Vec<usize>,
    pub diagnostics: SolverDiagnostics,
    pub detail: String,
}

impl ConicSolution {
    pub fn ok(self) -> Result<ConicSolution> {
        if self.status == SolverStatus::Optimal {
            Ok(self)
        } else {
            Err(Error::Solver {
                status: self.status,
                detail: self.detail.clone(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_eval_and_adjoint_agree() {
        let mut b = AffineBlock::new(2, 2, "t");
        b.add_constant(0, 0, 1.0);
        b.add(0, 0, 1, 2.0);
        b.add(1, 1, 1, -1.0);
        let z = DVector::from_vec(vec![0.5, 3.0]);
        let s = b.eval(&z);
        assert_eq!(s[(0, 1)], 1.0);
        assert_eq!(s[(1, 0)], 1.0);
        assert_eq!(s[(1, 1)], -3.0);
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let adj = b.adjoint(&w);
        for i in 0..2 {
            let fi = b.coefficient_matrix(i);
            assert!((adj[i] - linalg::frob(&fi, &w)).abs() < 1e-15);
        }
    }

    #[test]
    fn negation_detection() {
        let mut a = AffineBlock::new(1, 2, "a");
        let mut b = AffineBlock::new(1, 2, "b");
        a.add_constant(0, 0, 1.0);
        a.add(1, 0, 0, -1.0);
        b.add_constant(0, 0, -1.0);
        b.add(1, 0, 0, 1.0);
        assert!(a.is_negation_of(&b, 1e-14));
        b.add(0, 0, 0, 1.0);
        assert!(!a.is_negation_of(&b, 1e-14));
    }
}

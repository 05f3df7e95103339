//! Moment relaxations of the approximate optimal design problem.
//!
//! The variable is a truncated moment sequence `y` of order `2(d + delta)`,
//! constrained by `y_0 = 1`, the moment matrix `M_{d+delta}(y)` and one
//! localizing matrix per constraint of the design space.  The criterion acts
//! on the information matrix `A M_d(y) A'`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{
    self, AffineBlock, ConicProgram, ConicSolution, CriterionReformulation, SolverDiagnostics, SolverOptions,
    SolverStatus,
};
use crate::criteria::{self, Criterion};
use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::{basis_matrices, localizing_matrix, moment_matrix, MomentSequence};
use crate::polybasis::{enumerate_monomials, MonomialBasis, MultiIndex, Polynomial, RegressionBasis};
use crate::semialg::SemiAlgebraicSet;

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationConfig {
    pub d: usize,
    pub delta: usize,
    pub criterion: Criterion,
    pub basis: RegressionBasis,
    /// Prescribed moments `y_alpha = value`, `0 < |alpha| <= 2d`.
    pub fixed_moments: Vec<(MultiIndex, f64)>,
}

impl RelaxationConfig {
    /// Plain monomial regression of degree `d`.
    pub fn new(n: usize, d: usize, delta: usize, criterion: Criterion) -> Result<Self> {
        Ok(RelaxationConfig {
            d,
            delta,
            criterion,
            basis: RegressionBasis::identity(n, d)?,
            fixed_moments: Vec::new(),
        })
    }

    pub fn with_fixed_moments(mut self, fixed: Vec<(MultiIndex, f64)>) -> Self {
        self.fixed_moments = fixed;
        self
    }

    /// `2(d + delta)`.
    pub fn lifted_order(&self) -> usize {
        2 * (self.d + self.delta)
    }
}

/// What a block of the relaxation stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockRole {
    Moment,
    /// Localizing matrix of the `j`-th constraint.
    Localizing(usize),
    /// Schur block (A) or `M - tI` (E).
    Criterion,
}

/// A relaxation ready for the conic solver.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub program: ConicProgram,
    pub reformulation: CriterionReformulation,
    pub roles: Vec<BlockRole>,
    /// Number of moment variables; they occupy the first slots of `z`.
    pub num_moments: usize,
    pub n: usize,
    pub d: usize,
    pub order: usize,
    /// Indices of the equality rows: `0` is `y_0 = 1`, then fixed moments,
    /// then kernel rows implied by equality constraints.
    pub fixed_rows: std::ops::Range<usize>,
}

pub fn build_relaxation(set: &SemiAlgebraicSet, cfg: &RelaxationConfig) -> Result<Relaxation> {
    let n = set.n();
    cfg.basis.check_degree(n, cfg.d)?;
    let k = cfg.d + cfg.delta;
    let order = 2 * k;
    let moments = enumerate_monomials(n, order)?;
    let nm = moments.len();
    let mut prog = ConicProgram::new(nm);

    prog.add_equality(&[(0, 1.0)], 1.0);
    for (alpha, value) in &cfg.fixed_moments {
        if alpha.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: alpha.n(),
            });
        }
        if alpha.is_zero() {
            return Err(Error::InvalidInput("y_0 = 1 is built in and cannot be fixed".into()));
        }
        if alpha.degree() > 2 * cfg.d {
            return Err(Error::DegreeOverflow {
                needed: alpha.degree(),
                available: 2 * cfg.d,
            });
        }
        let idx = moments.index_of(alpha).expect("degree checked");
        prog.add_equality(&[(idx, 1.0)], *value);
    }
    let fixed_rows = 1..prog.num_equalities();

    let mut roles = push_moment_blocks(&mut prog, set, &moments, k)?;

    let info = information_block(&cfg.basis, n, cfg.d, nm)?;
    let reformulation = conic::reformulate_criterion(&mut prog, cfg.criterion, &info)?;
    if reformulation.aux_block.is_some() {
        roles.push(BlockRole::Criterion);
    }
    prog.validate()?;
    Ok(Relaxation {
        program: prog,
        reformulation,
        roles,
        num_moments: nm,
        n,
        d: cfg.d,
        order,
        fixed_rows,
    })
}

/// Appends `M_k(y)` and the localizing blocks `M_{k - v_j}(g_j y)` of `set`
/// to `prog`, whose first variables are the moments listed in `moments`.
/// For every equality pair `g = 0` the moment block is restricted to the
/// complement of the vectors `g x^beta`, `deg(g x^beta) <= k - v`.
pub(crate) fn push_moment_blocks(
    prog: &mut ConicProgram,
    set: &SemiAlgebraicSet,
    moments: &MonomialBasis,
    k: usize,
) -> Result<Vec<BlockRole>> {
    let n = set.n();
    let first = prog.blocks.len();
    let mut roles = Vec::new();
    let mut block = localizing_block(moments, &Polynomial::constant(n, 1.0), k, "moment")?;
    block.resize_vars(prog.num_vars);
    prog.blocks.push(block);
    roles.push(BlockRole::Moment);
    for (j, c) in set.constraints().iter().enumerate() {
        if c.half_degree > k {
            continue;
        }
        let mut block = localizing_block(moments, &c.poly, k - c.half_degree, &format!("localizing[{j}]"))?;
        block.resize_vars(prog.num_vars);
        prog.blocks.push(block);
        roles.push(BlockRole::Localizing(j));
    }

    // g = 0 on X forces g * x^beta into the kernel of the moment matrix
    let row_basis = enumerate_monomials(n, k)?;
    let mut kernel_cols: Vec<DVector<f64>> = Vec::new();
    for (i, _) in set.equality_pairs() {
        let c = &set.constraints()[i];
        if 2 * c.half_degree > k {
            continue;
        }
        for beta in enumerate_monomials(n, k - 2 * c.half_degree)?.iter() {
            let shifted = c.poly.mul(&Polynomial::monomial(beta.clone(), 1.0));
            kernel_cols.push(shifted.coefficients_in(&row_basis)?);
        }
    }
    if !kernel_cols.is_empty() {
        let kmat = linalg::range_basis(&DMatrix::from_columns(&kernel_cols), 1e-12);
        prog.add_block_kernel(first, &kmat);
    }
    Ok(roles)
}

/// `M_k(g y)` as an affine block in the moment variables.
fn localizing_block(moments: &MonomialBasis, g: &Polynomial, k: usize, label: &str) -> Result<AffineBlock> {
    let rows = enumerate_monomials(moments.n(), k)?;
    let s = rows.len();
    let mut block = AffineBlock::new(s, moments.len(), label);
    for a in 0..s {
        for b in a..s {
            let ab = rows.get(a).add(rows.get(b));
            for (gamma, coeff) in g.terms() {
                let idx = moments.index_of(&gamma.add(&ab)).ok_or(Error::DegreeOverflow {
                    needed: gamma.degree() + ab.degree(),
                    available: moments.degree(),
                })?;
                block.add(idx, a, b, coeff);
            }
        }
    }
    Ok(block)
}

/// `A M_d(y) A'` as an affine block in the moment variables.
fn information_block(basis: &RegressionBasis, n: usize, d: usize, num_vars: usize) -> Result<AffineBlock> {
    let bm = basis_matrices(n, d)?;
    let a = basis.matrix();
    let p = basis.p();
    let mut block = AffineBlock::new(p, num_vars, "information");
    for (idx, list) in bm.entries.iter().enumerate() {
        if basis.is_identity() {
            for &(r, c) in list {
                if r <= c {
                    block.add(idx, r, c, 1.0);
                }
            }
            continue;
        }
        // A B_alpha A'
        let mut m = DMatrix::<f64>::zeros(p, p);
        for &(r, c) in list {
            for i in 0..p {
                let air = a[(i, r)];
                if air == 0.0 {
                    continue;
                }
                for j in 0..p {
                    m[(i, j)] += air * a[(j, c)];
                }
            }
        }
        for i in 0..p {
            for j in i..p {
                if m[(i, j)].abs() > 1e-15 {
                    block.add(idx, i, j, m[(i, j)]);
                }
            }
        }
    }
    Ok(block)
}

/// Dual variables of a solved relaxation, arranged for certification.
///
/// They satisfy, as polynomial identities in `x`,
///
/// ```text
/// -nu_0 - F(x)' W F(x) = v(x)' Q_0 v(x) + sum_j g_j(x) v(x)' Q_j v(x)
///                        + sum_alpha nu_alpha x^alpha + sum_e nu_e l_e(x)
/// ```
///
/// where the middle sum runs over fixed moments and `l_e` over the
/// remaining equality rows, restricted to the moment variables.
#[derive(Clone, Debug)]
pub struct RelaxationDuals {
    /// `W`: `G^{-1}` for D, the top-left Schur dual for A, `Pi` for E.
    pub information: DMatrix<f64>,
    /// Multiplier of `y_0 = 1`.
    pub normalization: f64,
    pub moment: DMatrix<f64>,
    /// `(j, Q_j)` for every constraint with a localizing block.
    pub localizing: Vec<(usize, DMatrix<f64>)>,
    pub fixed: Vec<(MultiIndex, f64)>,
    /// `(l_e restricted to y, multiplier)` of every other equality row.
    pub ideal: Vec<(DVector<f64>, f64)>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub criterion: Criterion,
    pub d: usize,
    pub delta: usize,
    pub y_star: MomentSequence,
    pub y_lifted: MomentSequence,
    /// Optimal criterion value `phi(A M_d(y*) A')` of the relaxation.
    pub rho: f64,
    /// Optimal value of the minimized conic objective.
    pub objective: f64,
    pub status: SolverStatus,
    pub duals: RelaxationDuals,
    pub diagnostics: SolverDiagnostics,
}

pub fn solve_design(set: &SemiAlgebraicSet, cfg: &RelaxationConfig) -> Result<SolveResult> {
    solve_design_with(set, cfg, &SolverOptions::default())
}

pub fn solve_design_with(set: &SemiAlgebraicSet, cfg: &RelaxationConfig, opts: &SolverOptions) -> Result<SolveResult> {
    let relax = build_relaxation(set, cfg)?;
    let sol = conic::solve(&relax.program, opts)?.ok()?;
    let y = sol.z.rows(0, relax.num_moments).into_owned();
    let y_lifted = MomentSequence::new(relax.n, relax.order, y)?;
    let y_star = y_lifted.truncate(2 * cfg.d)?;
    let rho = relax.reformulation.phi_from_objective(sol.objective);
    let duals = arrange_duals(&relax, cfg, &sol)?;
    Ok(SolveResult {
        criterion: cfg.criterion,
        d: cfg.d,
        delta: cfg.delta,
        y_star,
        y_lifted,
        rho,
        objective: sol.objective,
        status: sol.status,
        duals,
        diagnostics: sol.diagnostics,
    })
}

fn arrange_duals(relax: &Relaxation, cfg: &RelaxationConfig, sol: &ConicSolution) -> Result<RelaxationDuals> {
    let nm = relax.num_moments;
    let p = relax.reformulation.p;
    let information = match cfg.criterion {
        Criterion::D => sol
            .logdet_dual
            .clone()
            .ok_or_else(|| Error::InvalidInput("solution carries no log-det dual".into()))?,
        Criterion::A => {
            let k = relax.reformulation.aux_block.expect("A has a Schur block");
            sol.duals[k].view((0, 0), (p, p)).into_owned()
        }
        Criterion::E => {
            let k = relax.reformulation.aux_block.expect("E has an eigenvalue block");
            sol.duals[k].clone()
        }
    };
    let mut moment = DMatrix::zeros(0, 0);
    let mut localizing = Vec::new();
    for (k, role) in relax.roles.iter().enumerate() {
        match role {
            BlockRole::Moment => moment = sol.duals[k].clone(),
            BlockRole::Localizing(j) => localizing.push((*j, sol.duals[k].clone())),
            BlockRole::Criterion => {}
        }
    }
    let fixed = cfg
        .fixed_moments
        .iter()
        .zip(relax.fixed_rows.clone())
        .map(|((alpha, _), row)| (alpha.clone(), sol.eq_duals[row]))
        .collect();
    let mut ideal = Vec::new();
    let prog = &relax.program;
    for row in relax.fixed_rows.end..prog.num_equalities() {
        let l = prog.eq_matrix.row(row).columns(0, nm).transpose();
        ideal.push((l, sol.eq_duals[row]));
    }
    for extra in &sol.extra_equalities {
        ideal.push((extra.row.rows(0, nm).into_owned(), extra.dual));
    }
    Ok(RelaxationDuals {
        information,
        normalization: sol.eq_duals[0],
        moment,
        localizing,
        fixed,
        ideal,
    })
}

/// Largest violation of the structural invariants of a solution: `y_0 = 1`
/// and PSD moment and localizing matrices (reported as `-lambda_min`).
pub fn feasibility_violation(set: &SemiAlgebraicSet, y: &MomentSequence) -> Result<f64> {
    let k = y.order() / 2;
    let mut worst = (y.values()[0] - 1.0).abs();
    let scale = |m: &DMatrix<f64>| m.amax().max(1.0);
    let m = moment_matrix(y, k)?.into_entries();
    worst = worst.max(-linalg::min_eigenvalue(&m) / scale(&m));
    for c in set.constraints() {
        if c.half_degree > k {
            continue;
        }
        let l = localizing_matrix(y, &c.poly, k - c.half_degree)?.into_entries();
        worst = worst.max(-linalg::min_eigenvalue(&l) / scale(&l));
    }
    Ok(worst)
}

/// Criterion value of the information matrix built from `y`.
pub fn criterion_value(y: &MomentSequence, basis: &RegressionBasis, d: usize, c: Criterion) -> Result<f64> {
    criteria::phi(&criteria::information_matrix(y, basis, d)?, c)
}

#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub delta: usize,
    pub outcome: std::result::Result<SolveResult, String>,
}

impl SweepEntry {
    pub fn rho(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.rho)
    }
}

/// Solves the relaxation for every `delta` in `deltas` (strictly increasing);
/// failures are recorded per entry.
pub fn hierarchy_sweep(set: &SemiAlgebraicSet, cfg: &RelaxationConfig, deltas: &[usize]) -> Result<Vec<SweepEntry>> {
    if deltas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("delta list must be strictly increasing".into()));
    }
    Ok(deltas
        .iter()
        .map(|&delta| {
            let cfg = RelaxationConfig { delta, ..cfg.clone() };
            SweepEntry {
                delta,
                outcome: solve_design(set, &cfg).map_err(|e| e.to_string()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semialg;

    #[test]
    fn univariate_relaxation_shape() {
        let set = semialg::interval();
        let cfg = RelaxationConfig::new(1, 5, 0, Criterion::D).unwrap();
        let r = build_relaxation(&set, &cfg).unwrap();
        assert_eq!(r.num_moments, 11);
        assert_eq!(r.program.blocks.len(), 2);
        assert_eq!(r.program.blocks[0].size(), 6);
        assert_eq!(r.program.blocks[1].size(), 5);
        assert_eq!(r.program.num_equalities(), 1);
    }

    #[test]
    fn wynn_relaxation_has_45_moments() {
        let cfg = RelaxationConfig::new(2, 1, 3, Criterion::D).unwrap();
        let r = build_relaxation(&semialg::wynn_polygon(), &cfg).unwrap();
        assert_eq!(r.num_moments, 45);
    }

    #[test]
    fn fixed_moment_adds_one_row() {
        let set = semialg::sphere3d();
        let base = RelaxationConfig::new(3, 1, 0, Criterion::D).unwrap();
        let before = build_relaxation(&set, &base).unwrap().program.num_equalities();
        let cfg = base.with_fixed_moments(vec![(MultiIndex::new(vec![0, 2, 0]), 2.0)]);
        let after = build_relaxation(&set, &cfg).unwrap().program.num_equalities();
        assert_eq!(after, before + 1);
    }

    #[test]
    fn fixed_moment_degree_checked() {
        let cfg = RelaxationConfig::new(1, 1, 1, Criterion::D)
            .unwrap()
            .with_fixed_moments(vec![(MultiIndex::new(vec![3]), 0.0)]);
        assert!(matches!(
            build_relaxation(&semialg::interval(), &cfg),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn univariate_d5_moments() {
        let cfg = RelaxationConfig::new(1, 5, 0, Criterion::D).unwrap();
        let r = solve_design(&semialg::interval(), &cfg).unwrap();
        let want = [1.0, 0.0, 0.56, 0.0, 0.45, 0.0, 0.40, 0.0, 0.37, 0.0, 0.36];
        for (k, w) in want.iter().enumerate() {
            assert!(
                (r.y_star.values()[k] - w).abs() <= 0.01,
                "{k}: {}",
                r.y_star.values()[k]
            );
        }
        let direct = criterion_value(&r.y_star, &cfg.basis, 5, Criterion::D).unwrap();
        assert!((direct - r.rho).abs() < 1e-6, "{direct} vs {}", r.rho);
        assert!(feasibility_violation(&semialg::interval(), &r.y_lifted).unwrap() < 1e-8);
    }

    #[test]
    fn sphere_second_moments() {
        let set = semialg::sphere3d();
        let cfg = RelaxationConfig::new(3, 1, 0, Criterion::D).unwrap();
        let r = solve_design(&set, &cfg).unwrap();
        for (k, alpha) in r.y_star.basis().iter().enumerate() {
            let v = r.y_star.values()[k];
            if alpha.is_zero() {
                assert!((v - 1.0).abs() < 1e-10);
            } else if alpha.exponents().contains(&2) {
                assert!((v - 1.0 / 3.0).abs() < 1e-3, "{alpha}: {v}");
            } else {
                assert!(v.abs() < 1e-6, "{alpha}: {v}");
            }
        }
    }

    #[test]
    fn singleton_space_forces_dirac() {
        let x = Polynomial::monomial(MultiIndex::new(vec![1]), 1.0);
        let g1 = x.add(&Polynomial::constant(1, -1.0));
        let set = SemiAlgebraicSet::new(1, vec![g1, Polynomial::ball(1, 1.0)]).unwrap();
        let cfg = RelaxationConfig::new(1, 0, 1, Criterion::D).unwrap();
        let r = solve_design(&set, &cfg).unwrap();
        for v in r.y_lifted.values().iter() {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }
}

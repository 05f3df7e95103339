//! Recovery of an atomic design from optimal moments.
//!
//! The truncated sequence is first completed to a higher order (either by
//! Nie's lifting or by minimizing the dual polynomial), the flat-rank test is
//! applied, atoms are read off the multiplication operators of the flat
//! moment matrix and weights come from the moment-matching system.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{self, AffineBlock, ConicProgram, SolverOptions};
use crate::designsolve::push_moment_blocks;
use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::{moment_matrix, riesz, MomentSequence};
use crate::polybasis::{enumerate_monomials, MultiIndex, Polynomial};
use crate::semialg::{snap_to_active, SemiAlgebraicSet};

/// Largest lifting order tried by [`recover_with_escalation`].
pub const MAX_LIFT_ORDER: usize = 5;

/// Atoms closer than this (max-norm) are merged.
/// Atoms this close to a constraint boundary are moved onto it.
pub const SNAP_TOL: f64 = 1e-4;

pub const MERGE_TOL: f64 = 1e-5;

/// Extraction is rejected when the multiplication operators fail to be
/// simultaneously triangular to this (relative) level.
pub const EXTRACTION_TOL: f64 = 1e-4;

/// Vandermonde systems with a larger condition estimate are rejected.
pub const MAX_VANDERMONDE_COND: f64 = 1e12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMethod {
    #[default]
    /// Complete `y*` minimizing `L(f_r)` with `y*` fixed.
    Nie,
    /// Minimize `L(p*)` over normalized pseudo-moments.
    ChristoffelMin,
    /// Minimize the trace of the moment matrix on `L(p*) = 0`.
    ChristoffelTrace,
}

impl RecoveryMethod {
    pub fn name(self) -> &'static str {
        match self {
            RecoveryMethod::Nie => "nie",
            RecoveryMethod::ChristoffelMin => "christoffel_min",
            RecoveryMethod::ChristoffelTrace => "christoffel_trace",
        }
    }
}

impl fmt::Display for RecoveryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RecoveryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nie" => Ok(RecoveryMethod::Nie),
            "christoffel_min" | "christoffel-min" => Ok(RecoveryMethod::ChristoffelMin),
            "christoffel_trace" | "christoffel-trace" => Ok(RecoveryMethod::ChristoffelTrace),
            other => Err(Error::InvalidInput(format!("unknown recovery method '{other}'"))),
        }
    }
}

/// Objective `f_r` of the Nie lifting.
#[derive(Clone, Debug, PartialEq)]
pub enum LiftObjective {
    /// `|v_{d+r}(x)|^2`, i.e. the trace of `M_{d+r}(y)`.
    Trace,
    /// `sum_alpha c_alpha x^{2 alpha}` with seeded `c_alpha` in `[0.5, 1.5]`.
    Random(u64),
    Custom(Polynomial),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryConfig {
    pub r: usize,
    pub method: RecoveryMethod,
    pub objective: LiftObjective,
    /// Relative singular-value threshold for numerical ranks.
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            r: 1,
            method: RecoveryMethod::Nie,
            objective: LiftObjective::Trace,
            rank_tol: 1e-6,
            seed: 0,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidInput("lifting order r must be >= 1".into()));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rank_tol must lie in (0, 1), got {}",
                self.rank_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Design {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn moments(&self, order: usize) -> Result<MomentSequence> {
        MomentSequence::from_atoms(&self.points, &self.weights, order)
    }
}

/// Completed moment sequence and the value of the lifting objective.
#[derive(Clone, Debug)]
pub struct Lift {
    pub moments: MomentSequence,
    pub objective: f64,
}

fn lift_objective_poly(objective: &LiftObjective, n: usize, k: usize) -> Result<Polynomial> {
    let half = enumerate_monomials(n, k)?;
    Ok(match objective {
        LiftObjective::Trace => {
            let mut f = Polynomial::zero(n);
            for a in half.iter() {
                f.add_term(a.add(a), 1.0);
            }
            f
        }
        LiftObjective::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut f = Polynomial::zero(n);
            for a in half.iter() {
                f.add_term(a.add(a), rng.gen_range(0.5..1.5));
            }
            f
        }
        LiftObjective::Custom(f) => {
            if f.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: f.n(),
                });
            }
            if f.degree() > 2 * k {
                return Err(Error::DegreeOverflow {
                    needed: f.degree(),
                    available: 2 * k,
                });
            }
            f.clone()
        }
    })
}

/// Program over pseudo-moments of order `2k` on `set` with a linear
/// objective `L(f)`.
fn moment_program(set: &SemiAlgebraicSet, k: usize, f: &Polynomial) -> Result<(ConicProgram, usize)> {
    let moments = enumerate_monomials(set.n(), 2 * k)?;
    let mut prog = ConicProgram::new(moments.len());
    let coeffs = f.coefficients_in(&moments)?;
    prog.cost.copy_from(&coeffs);
    push_moment_blocks(&mut prog, set, &moments, k)?;
    Ok((prog, moments.len()))
}

fn solve_moment_program(prog: &ConicProgram, n: usize, k: usize, nm: usize, seed: u64) -> Result<Lift> {
    let opts = SolverOptions {
        seed,
        ..SolverOptions::default()
    };
    let sol = conic::solve(prog, &opts)?.ok()?;
    let y = sol.z.rows(0, nm).into_owned();
    Ok(Lift {
        moments: MomentSequence::new(n, 2 * k, y)?,
        objective: sol.objective,
    })
}

/// Completes `y*` (order `2d`) to order `2(d + r)` minimizing `L(f_r)`
/// subject to the moment and localizing constraints of `set`.
pub fn nie_lift(y_star: &MomentSequence, set: &SemiAlgebraicSet, cfg: &RecoveryConfig) -> Result<Lift> {
    cfg.validate()?;
    if y_star.n() != set.n() {
        return Err(Error::DimensionMismatch {
            expected: set.n(),
            found: y_star.n(),
        });
    }
    let d = y_star.order() / 2;
    let k = d + cfg.r;
    let f = lift_objective_poly(&cfg.objective, set.n(), k)?;
    let (mut prog, nm) = moment_program(set, k, &f)?;
    for (idx, &v) in y_star.values().iter().enumerate() {
        prog.add_equality(&[(idx, 1.0)], v);
    }
    match solve_moment_program(&prog, set.n(), k, nm, cfg.seed) {
        Err(Error::Solver {
            status: conic::SolverStatus::Infeasible,
            ..
        }) => Err(Error::MatchConstraintInfeasible),
        other => other,
    }
}

/// Minimizes `L(p*)` over normalized pseudo-moments of order `2(d + r)`
/// (`ChristoffelMin`), or, for `ChristoffelTrace`, the trace of the moment
/// matrix over those pseudo-moments that also attain that minimum up to a
/// small slack.
pub fn christoffel_recover(pstar: &Polynomial, d: usize, set: &SemiAlgebraicSet, cfg: &RecoveryConfig) -> Result<Lift> {
    cfg.validate()?;
    if pstar.degree() > 2 * d {
        return Err(Error::DegreeOverflow {
            needed: pstar.degree(),
            available: 2 * d,
        });
    }
    let n = set.n();
    let k = d + cfg.r;
    let (mut prog, nm) = moment_program(set, k, pstar)?;
    prog.add_equality(&[(0, 1.0)], 1.0);
    let lower = solve_moment_program(&prog, n, k, nm, cfg.seed)?;
    if cfg.method != RecoveryMethod::ChristoffelTrace {
        return Ok(lower);
    }
    let trace = lift_objective_poly(&LiftObjective::Trace, n, k)?;
    let moments = enumerate_monomials(n, 2 * k)?;
    let pc = pstar.coefficients_in(&moments)?;
    prog.cost.copy_from(&trace.coefficients_in(&moments)?);
    // L(p*) <= min + slack keeps a strictly feasible interior
    let scale = pc.amax().max(1.0);
    let mut cap = AffineBlock::new(1, prog.num_vars, "riesz cap");
    cap.add_constant(0, 0, lower.objective + 1e-8 * scale);
    for (idx, &c) in pc.iter().enumerate() {
        if c != 0.0 {
            cap.add(idx, 0, 0, -c);
        }
    }
    prog.blocks.push(cap);
    solve_moment_program(&prog, n, k, nm, cfg.seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankTest {
    pub flat: bool,
    pub rank_high: usize,
    pub rank_low: usize,
}

/// Compares the numerical ranks of `M_k(y)` and `M_{k-v}(y)`, `2k` being the
/// order of `y`.
pub fn rank_flat(y: &MomentSequence, v: usize, rank_tol: f64) -> Result<RankTest> {
    let k = y.order() / 2;
    if v > k {
        return Err(Error::DegreeOverflow {
            needed: v,
            available: k,
        });
    }
    let high = moment_matrix(y, k)?.into_entries();
    let low = moment_matrix(y, k - v)?.into_entries();
    let rank_high = linalg::numerical_rank(&high, rank_tol);
    let rank_low = linalg::numerical_rank(&low, rank_tol);
    Ok(RankTest {
        flat: rank_high == rank_low,
        rank_high,
        rank_low,
    })
}

/// Points and the simultaneous-triangularization residual.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub points: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Reads the atoms of a flat sequence `y` (order `2k`) off the multiplication
/// operators of `M_k(y)`; basis monomials are taken among degrees `<= k - v`.
pub fn extract_atoms(y: &MomentSequence, v: usize, rank_tol: f64, seed: u64) -> Result<Extraction> {
    let n = y.n();
    let k = y.order() / 2;
    if v == 0 || v > k {
        return Err(Error::InvalidInput(format!("shift v = {v} must lie in 1..={k}")));
    }
    let m = moment_matrix(y, k)?;
    let rows = m.basis().clone();
    let (vals, vecs) = linalg::sym_eigen(m.entries());
    let top = vals.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(Error::NoAtomsExtracted(
            "moment matrix has no positive eigenvalue".into(),
        ));
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > rank_tol * top).collect();
    let rank = keep.len();
    let mut factor = DMatrix::zeros(rows.len(), rank);
    for (dst, &j) in keep.iter().enumerate() {
        factor.set_column(dst, &(vecs.column(j) * vals[j].sqrt()));
    }

    // greedy pivoting over the low-degree rows
    let candidates = rows.prefix_len(k - v);
    let mut residual_rows: Vec<DVector<f64>> = (0..candidates).map(|i| factor.row(i).transpose()).collect();
    let mut pivots = Vec::with_capacity(rank);
    for _ in 0..rank {
        let (best, norm) = residual_rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !pivots.contains(i))
            .map(|(i, r)| (i, r.norm()))
            .fold(
                (usize::MAX, 0.0),
                |acc, (i, nrm)| if nrm > acc.1 { (i, nrm) } else { acc },
            );
        if best == usize::MAX || norm <= 1e-10 * top.sqrt() {
            return Err(Error::NoAtomsExtracted(format!(
                "only {} independent rows of degree <= {} for rank {rank}",
                pivots.len(),
                k - v
            )));
        }
        pivots.push(best);
        let q = &residual_rows[best] / norm;
        for r in residual_rows.iter_mut() {
            let c = q.dot(r);
            *r -= &q * c;
        }
    }
    let w = DMatrix::from_fn(rank, rank, |i, j| factor[(pivots[i], j)]);
    let w_inv = w.lu().try_inverse().ok_or(Error::SingularMatrix)?;
    let mut ops = Vec::with_capacity(n);
    for i in 0..n {
        let shifted = DMatrix::from_fn(rank, rank, |a, j| {
            let alpha = rows.get(pivots[a]).add(&MultiIndex::unit(n, i));
            factor[(rows.index_of(&alpha).expect("degree <= k"), j)]
        });
        // N_i W = shifted
        ops.push(shifted * &w_inv);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let sum: f64 = coeffs.iter().sum();
    coeffs.iter_mut().for_each(|c| *c /= sum);
    let mut comb = DMatrix::zeros(rank, rank);
    for (c, op) in coeffs.iter().zip(&ops) {
        comb += op * *c;
    }
    let schur = nalgebra::linalg::Schur::try_new(comb, 1e-14, 10_000)
        .ok_or_else(|| Error::NoAtomsExtracted("Schur iteration did not converge".into()))?;
    let (q, _) = schur.unpack();

    let mut residual: f64 = 0.0;
    let mut points = vec![vec![0.0; n]; rank];
    for (i, op) in ops.iter().enumerate() {
        let t = q.transpose() * op * &q;
        let scale = t.amax().max(1.0);
        for a in 0..rank {
            points[a][i] = t[(a, a)];
            for b in 0..a {
                residual = residual.max(t[(a, b)].abs() / scale);
            }
        }
    }
    if residual > EXTRACTION_TOL {
        return Err(Error::ExtractionUnstable { residual });
    }
    Ok(Extraction {
        points: canonical_points(merge_points(points, MERGE_TOL)),
        residual,
    })
}

fn merge_points(points: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<(Vec<f64>, usize)> = Vec::new();
    for p in points {
        match out
            .iter_mut()
            .find(|(q, _)| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol))
        {
            Some((q, count)) => {
                let c = *count as f64;
                for (qa, pa) in q.iter_mut().zip(&p) {
                    *qa = (*qa * c + pa) / (c + 1.0);
                }
                *count += 1;
            }
            None => out.push((p, 1)),
        }
    }
    out.into_iter().map(|(p, _)| p).collect()
}

/// Lexicographic order on coordinates, treating differences below `1e-6`
/// as ties.
pub fn canonical_points(mut points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                if (x - y).abs() <= 1e-6 {
                    std::cmp::Ordering::Equal
                } else {
                    x.total_cmp(y)
                }
            })
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    points
}

/// Weights and the moment-matching residual `|V w - y|_inf`.
#[derive(Clone, Debug)]
pub struct WeightFit {
    pub design: Design,
    pub residual: f64,
    pub condition: f64,
}

/// Least-squares solution of `sum_i w_i x_i^alpha = y_alpha` over all
/// moments of `y`; negative weights down to `-1e-9` are clipped and the
/// weights renormalized.
pub fn compute_weights(points: &[Vec<f64>], y: &MomentSequence) -> Result<WeightFit> {
    if points.is_empty() {
        return Err(Error::NoAtomsExtracted("no points to weight".into()));
    }
    let basis = y.basis();
    let v = DMatrix::from_fn(basis.len(), points.len(), |a, i| basis.get(a).eval(&points[i]));
    let svd = v.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_VANDERMONDE_COND {
        return Err(Error::IllConditionedVandermonde { cond: condition });
    }
    let w = svd
        .solve(y.values(), 0.0)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut weights: Vec<f64> = w.iter().cloned().collect();
    for wi in weights.iter_mut() {
        if *wi < 0.0 {
            if *wi < -1e-9 {
                return Err(Error::NegativeWeight { weight: *wi });
            }
            *wi = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoAtomsExtracted("weights vanish".into()));
    }
    weights.iter_mut().for_each(|wi| *wi /= total);
    let residual = (&v * DVector::from_vec(weights.clone()) - y.values()).amax();
    Ok(WeightFit {
        design: Design {
            points: points.to_vec(),
            weights,
        },
        residual,
        condition,
    })
}

/// `|moments(design) - y|_inf` over the moments of `y`.
pub fn moment_residual(design: &Design, y: &MomentSequence) -> f64 {
    design
        .moments(y.order())
        .and_then(|m| m.max_abs_diff(y))
        .unwrap_or(f64::INFINITY)
}

/// Outcome of one lifting order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Attempt {
    pub r: usize,
    pub ranks: Option<RankTest>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Recovery {
    pub method: RecoveryMethod,
    pub r: usize,
    pub lift: Lift,
    pub ranks: RankTest,
    pub design: Design,
    /// `|V w - y*|_inf` over the moments of order `<= 2d`.
    pub weight_residual: f64,
    pub extraction_residual: f64,
    pub attempts: Vec<Attempt>,
}

/// Serialized form of a recovered design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignRecord {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub residual: f64,
    pub ranks: [usize; 2],
    pub method: RecoveryMethod,
    pub r: usize,
}

impl Recovery {
    pub fn record(&self) -> DesignRecord {
        DesignRecord {
            points: self.design.points.clone(),
            weights: self.design.weights.clone(),
            residual: self.weight_residual,
            ranks: [self.ranks.rank_high, self.ranks.rank_low],
            method: self.method,
            r: self.r,
        }
    }
}

/// Why [`recover_with_escalation`] produced no design.
#[derive(Clone, Debug)]
pub struct RecoveryFailure {
    pub attempts: Vec<Attempt>,
    /// Last completed lift, if any, for diagnostics.
    pub last_lift: Option<Box<Lift>>,
}

/// Lifted sequence for one order according to `cfg.method`.
pub fn lift(
    y_star: &MomentSequence,
    pstar: Option<&Polynomial>,
    set: &SemiAlgebraicSet,
    cfg: &RecoveryConfig,
) -> Result<Lift> {
    match cfg.method {
        RecoveryMethod::Nie => nie_lift(y_star, set, cfg),
        RecoveryMethod::ChristoffelMin | RecoveryMethod::ChristoffelTrace => {
            let pstar = pstar.ok_or_else(|| Error::InvalidInput("Christoffel recovery needs p*".into()))?;
            christoffel_recover(pstar, y_star.order() / 2, set, cfg)
        }
    }
}

/// Lifts, tests flatness, extracts and weights, raising `r` up to
/// [`MAX_LIFT_ORDER`] until the rank test passes.
pub fn recover_with_escalation(
    y_star: &MomentSequence,
    pstar: Option<&Polynomial>,
    set: &SemiAlgebraicSet,
    cfg: &RecoveryConfig,
    r_max: usize,
) -> std::result::Result<Recovery, RecoveryFailure> {
    let v = set.max_half_degree().max(1);
    let mut attempts = Vec::new();
    let mut last_lift = None;
    for r in cfg.r..=r_max.max(cfg.r) {
        let cfg_r = RecoveryConfig { r, ..cfg.clone() };
        match recover_once(y_star, pstar, set, &cfg_r, v) {
            Ok((mut rec, attempt)) => {
                attempts.push(attempt);
                rec.attempts = attempts;
                return Ok(rec);
            }
            Err(failed) => {
                let (attempt, lifted) = *failed;
                attempts.push(attempt);
                if let Some(l) = lifted {
                    last_lift = Some(Box::new(l));
                }
            }
        }
    }
    Err(RecoveryFailure { attempts, last_lift })
}

type OnceError = Box<(Attempt, Option<Lift>)>;

fn recover_once(
    y_star: &MomentSequence,
    pstar: Option<&Polynomial>,
    set: &SemiAlgebraicSet,
    cfg: &RecoveryConfig,
    v: usize,
) -> std::result::Result<(Recovery, Attempt), OnceError> {
    let fail = |ranks, e: Error, l: Option<Lift>| {
        Box::new((
            Attempt {
                r: cfg.r,
                ranks,
                error: Some(e.to_string()),
            },
            l,
        ))
    };
    let lifted = lift(y_star, pstar, set, cfg).map_err(|e| fail(None, e, None))?;
    let ranks = rank_flat(&lifted.moments, v, cfg.rank_tol).map_err(|e| fail(None, e, Some(lifted.clone())))?;
    if !ranks.flat {
        return Err(Box::new((
            Attempt {
                r: cfg.r,
                ranks: Some(ranks),
                error: None,
            },
            Some(lifted),
        )));
    }
    let extraction = extract_atoms(&lifted.moments, v, cfg.rank_tol, cfg.seed)
        .map_err(|e| fail(Some(ranks), e, Some(lifted.clone())))?;
    // the order-2d system can be rank deficient (points on a quadric); the
    // Nie lift agrees with y* and carries the higher moments that separate them
    let points: Vec<Vec<f64>> = extraction
        .points
        .iter()
        .map(|x| snap_to_active(set, x, SNAP_TOL))
        .collect();
    let fit = match compute_weights(&points, y_star) {
        Err(Error::IllConditionedVandermonde { .. }) if cfg.method == RecoveryMethod::Nie => {
            compute_weights(&points, &lifted.moments).map(|mut f| {
                f.residual = moment_residual(&f.design, y_star);
                f
            })
        }
        other => other,
    }
    .map_err(|e| fail(Some(ranks), e, Some(lifted.clone())))?;
    let attempt = Attempt {
        r: cfg.r,
        ranks: Some(ranks),
        error: None,
    };
    Ok((
        Recovery {
            method: cfg.method,
            r: cfg.r,
            lift: lifted,
            ranks,
            design: fit.design,
            weight_residual: fit.residual,
            extraction_residual: extraction.residual,
            attempts: Vec::new(),
        },
        attempt,
    ))
}

/// `L_y(p)` convenience re-export for reports.
pub fn riesz_value(y: &MomentSequence, p: &Polynomial) -> Result<f64> {
    riesz(y, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semialg;

    #[test]
    fn dirac_lift_is_flat_and_extracts_its_point() {
        let x0 = vec![0.3, -0.2];
        let set = semialg::wynn_polygon();
        let y = MomentSequence::from_atoms(std::slice::from_ref(&x0), &[1.0], 2).unwrap();
        let cfg = RecoveryConfig::default();
        let lift = nie_lift(&y, &set, &cfg).unwrap();
        let want = MomentSequence::from_atoms(std::slice::from_ref(&x0), &[1.0], 4).unwrap();
        assert!(lift.moments.max_abs_diff(&want).unwrap() < 1e-6);
        let ranks = rank_flat(&lift.moments, 1, 1e-6).unwrap();
        assert_eq!((ranks.flat, ranks.rank_high, ranks.rank_low), (true, 1, 1));
        let ex = extract_atoms(&lift.moments, 1, 1e-6, 0).unwrap();
        assert_eq!(ex.points.len(), 1);
        assert!((ex.points[0][0] - 0.3).abs() < 1e-6 && (ex.points[0][1] + 0.2).abs() < 1e-6);
        let fit = compute_weights(&ex.points, &y).unwrap();
        assert!((fit.design.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_recovered_from_exact_moments() {
        let pts = vec![vec![-0.5, 0.1], vec![0.2, 0.7], vec![0.6, -0.3], vec![0.0, 0.0]];
        let w = [0.1, 0.2, 0.3, 0.4];
        let y = MomentSequence::from_atoms(&pts, &w, 4).unwrap();
        let fit = compute_weights(&pts, &y).unwrap();
        for (a, b) in fit.design.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn extraction_of_exact_atomic_sequence() {
        let pts = vec![vec![-0.5, 0.1], vec![0.2, 0.7], vec![0.6, -0.3]];
        let y = MomentSequence::from_atoms(&pts, &[0.2, 0.3, 0.5], 6).unwrap();
        let ranks = rank_flat(&y, 1, 1e-9).unwrap();
        assert!(ranks.flat);
        assert_eq!(ranks.rank_high, 3);
        let ex = extract_atoms(&y, 1, 1e-9, 7).unwrap();
        assert_eq!(ex.points.len(), 3);
        for (p, q) in ex.points.iter().zip(&pts) {
            assert!(p.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-8), "{p:?} vs {q:?}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            RecoveryMethod::Nie,
            RecoveryMethod::ChristoffelMin,
            RecoveryMethod::ChristoffelTrace,
        ] {
            assert_eq!(m.name().parse::<RecoveryMethod>().unwrap(), m);
        }
    }
}

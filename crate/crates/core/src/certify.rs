//! Numerical checks of the equivalence theorem for a computed design.
//!
//! With `M = A M_d(y*) A'` and the dual polynomial
//! `p*(x) = trace(M^q) - F(x)' M^{q-1} F(x)`, optimality means `p* >= 0` on
//! the design space, `L_{y*}(p*) = 0` and `p*` vanishing at every atom.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, Criterion, DualPolynomial};
use crate::designsolve::SolveResult;
use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::{riesz, MomentSequence};
use crate::polybasis::{enumerate_monomials, eval_on_basis, regression_vector, RegressionBasis};
use crate::recovery::Design;
use crate::semialg::{project_onto, sample_points, SemiAlgebraicSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Slack on `min p*` over the samples.
    pub neg: f64,
    /// Bound on `|L_{y*}(p*)|`.
    pub riesz: f64,
    /// Bound on `|p*(x_i)|` at the atoms.
    pub atom: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            neg: 1e-6,
            riesz: 1e-6,
            atom: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Number of most negative samples used as starts of the local descent.
    pub refine_starts: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            samples: 2000,
            seed: 0,
            tolerances: Tolerances::default(),
            refine_starts: 20,
        }
    }
}

/// Which evidence backs the nonnegativity claim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    Sampling,
    SamplingAndSos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateReport {
    pub criterion: Criterion,
    /// `phi_q(M_d(y*))`.
    pub lambda_star: f64,
    /// `trace(M^q)`, the constant term of `p*`.
    pub pstar_constant: f64,
    pub min_pstar_on_samples: f64,
    pub argmin: Vec<f64>,
    pub riesz_pstar: f64,
    pub atom_values: Vec<f64>,
    /// Largest Christoffel value `F' M^{q-1} F` over the atoms.
    pub max_christoffel_at_atoms: f64,
    pub sample_count: usize,
    pub tolerances: Tolerances,
    pub evidence: Evidence,
    /// Relative residual of the SOS identity, when it was checked.
    pub sos_residual: Option<f64>,
    /// E only: the least eigenvalue is repeated, so `p*` is one of several.
    pub multiplicity_warning: bool,
    pub passed: bool,
}

impl CertificateReport {
    fn judge(&mut self) {
        let t = &self.tolerances;
        let max_atom = self.atom_values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.passed = self.min_pstar_on_samples >= -t.neg && self.riesz_pstar.abs() <= t.riesz && max_atom <= t.atom;
    }

    /// Records a verified SOS decomposition as extra evidence.
    pub fn attach_sos(&mut self, sos: &SosCertificate) {
        self.sos_residual = Some(sos.residual);
        if sos.valid {
            self.evidence = Evidence::SamplingAndSos;
        }
    }
}

/// Evaluates `p*` built from `y*` on seeded samples of `set` (refined by a
/// local descent from the worst ones), at the atoms of `design`, and through
/// the Riesz functional of `y*`.
pub fn check_design(
    y_star: &MomentSequence,
    design: &Design,
    set: &SemiAlgebraicSet,
    basis: &RegressionBasis,
    criterion: Criterion,
    opts: &CertifyOptions,
) -> Result<CertificateReport> {
    let d = y_star.order() / 2;
    let m = criteria::information_matrix(y_star, basis, d)?;
    let lambda_star = criteria::phi(&m, criterion)?;
    let pstar = DualPolynomial::new(&m, basis, criterion, y_star.n(), d)?;

    let samples = sample_points(set, opts.samples, opts.seed)?;
    let mut values: Vec<(f64, usize)> = samples.iter().enumerate().map(|(i, x)| (pstar.eval(x), i)).collect();
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = values[0].0;
    let mut argmin = samples[values[0].1].clone();
    for &(_, i) in values.iter().take(opts.refine_starts) {
        let (x, v) = local_descent(&pstar, set, &samples[i]);
        if v < best {
            best = v;
            argmin = x;
        }
    }
    let atom_values: Vec<f64> = design.points.iter().map(|x| pstar.eval(x)).collect();
    for (x, &v) in design.points.iter().zip(&atom_values) {
        if v < best && set.contains(x, 0.0) {
            best = v;
            argmin = x.clone();
        }
    }
    let max_christoffel_at_atoms = design
        .points
        .iter()
        .map(|x| pstar.christoffel_at(x))
        .fold(0.0, f64::max);
    let riesz_pstar = riesz(y_star, &pstar.to_polynomial())?;
    let mut report = CertificateReport {
        criterion,
        lambda_star,
        pstar_constant: pstar.constant,
        min_pstar_on_samples: best,
        argmin,
        riesz_pstar,
        atom_values,
        max_christoffel_at_atoms,
        sample_count: samples.len(),
        tolerances: opts.tolerances,
        evidence: Evidence::Sampling,
        sos_residual: None,
        multiplicity_warning: pstar.ambiguous,
        passed: false,
    };
    report.judge();
    Ok(report)
}

/// Projected gradient descent on `p*` with backtracking.
fn local_descent(pstar: &DualPolynomial, set: &SemiAlgebraicSet, start: &[f64]) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = pstar.eval(&x);
    let mut step = 0.1;
    for _ in 0..200 {
        let g = pstar.gradient(&x);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-14 {
            break;
        }
        let mut moved = false;
        while step > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi / gn).collect();
            if let Some(p) = project_onto(set, &trial) {
                let fp = pstar.eval(&p);
                if fp < fx {
                    x = p;
                    fx = fp;
                    moved = true;
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, fx)
}

/// Gram matrices of the identity
/// `p*(x) = v(x)' Q_0 v(x) + sum_j g_j(x) v(x)' Q_j v(x) + sum_e nu_e l_e(x)`
/// read off the relaxation duals.
#[derive(Clone, Debug)]
pub struct SosCertificate {
    /// `-nu_0`, the constant of `p*` according to the duals.
    pub constant: f64,
    pub information_dual: DMatrix<f64>,
    pub q0: DMatrix<f64>,
    pub localizing: Vec<(usize, DMatrix<f64>)>,
    /// Largest relative mismatch of the identity over the test points.
    pub residual: f64,
    /// Smallest eigenvalue over all Gram matrices, relative to the largest.
    pub min_gram_eigenvalue: f64,
    pub valid: bool,
}

pub const SOS_TEST_POINTS: usize = 50;
pub const SOS_RESIDUAL_TOL: f64 = 1e-5;
pub const GRAM_PSD_TOL: f64 = 1e-8;

/// Checks the polynomial identity behind the duals of `solved` at
/// [`SOS_TEST_POINTS`] seeded points of the bounding box of `set`.
pub fn sos_certificate(
    solved: &SolveResult,
    set: &SemiAlgebraicSet,
    basis: &RegressionBasis,
    seed: u64,
) -> Result<SosCertificate> {
    let n = set.n();
    let duals = &solved.duals;
    let k = solved.y_lifted.order() / 2;
    let row_basis = enumerate_monomials(n, k)?;
    let moment_basis = solved.y_lifted.basis().clone();
    let r = set.ball_radius().unwrap_or(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residual: f64 = 0.0;
    for _ in 0..SOS_TEST_POINTS {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-r..=r)).collect();
        let f = regression_vector(basis, &x, solved.d)?;
        let quad = f.dot(&(&duals.information * &f));
        let lhs = -duals.normalization - quad;
        let mut scale = duals.normalization.abs() + quad.abs();
        let mut rhs = 0.0;
        let mut add = |v: f64| {
            rhs += v;
            scale += v.abs();
        };
        let v = eval_on_basis(&row_basis, &x);
        add(v.dot(&(&duals.moment * &v)));
        for (j, q) in &duals.localizing {
            let c = &set.constraints()[*j];
            let vj = eval_on_basis(&enumerate_monomials(n, k - c.half_degree)?, &x);
            add(c.poly.eval(&x) * vj.dot(&(q * &vj)));
        }
        for (alpha, nu) in &duals.fixed {
            add(nu * alpha.eval(&x));
        }
        let monomials = eval_on_basis(&moment_basis, &x);
        for (row, nu) in &duals.ideal {
            add(nu * row.dot(&monomials));
        }
        residual = residual.max((lhs - rhs).abs() / scale.max(1e-300));
    }
    let mut top: f64 = 0.0;
    let mut low: f64 = f64::INFINITY;
    for q in std::iter::once(&duals.moment).chain(duals.localizing.iter().map(|(_, q)| q)) {
        if q.nrows() == 0 {
            continue;
        }
        let (vals, _) = linalg::sym_eigen(q);
        top = top.max(vals.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        low = low.min(vals[0]);
    }
    let min_gram_eigenvalue = if top > 0.0 { low / top } else { 0.0 };
    let valid = residual <= SOS_RESIDUAL_TOL && min_gram_eigenvalue >= -GRAM_PSD_TOL;
    Ok(SosCertificate {
        constant: -duals.normalization,
        information_dual: duals.information.clone(),
        q0: duals.moment.clone(),
        localizing: duals.localizing.clone(),
        residual,
        min_gram_eigenvalue,
        valid,
    })
}

/// Like [`sos_certificate`] but failing with `CertificateResidualTooLarge`.
pub fn require_sos_certificate(
    solved: &SolveResult,
    set: &SemiAlgebraicSet,
    basis: &RegressionBasis,
    seed: u64,
) -> Result<SosCertificate> {
    let cert = sos_certificate(solved, set, basis, seed)?;
    if cert.residual > SOS_RESIDUAL_TOL {
        return Err(Error::CertificateResidualTooLarge {
            residual: cert.residual,
        });
    }
    Ok(cert)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridNode {
    pub x: Vec<f64>,
    pub pstar: f64,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetGrid {
    pub n: usize,
    pub resolution: usize,
    pub nodes: Vec<GridNode>,
}

impl LevelSetGrid {
    /// CSV with header `x1,..,xn,pstar,inside`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},pstar,inside", header.join(","))?;
        for node in &self.nodes {
            let coords: Vec<String> = node.x.iter().map(|v| format!("{v:.10e}")).collect();
            writeln!(
                out,
                "{},{:.10e},{}",
                coords.join(","),
                node.pstar,
                u8::from(node.inside)
            )?;
        }
        Ok(())
    }
}

/// `p*` on the regular grid with `resolution` nodes per axis over
/// `[-R, R]^n`, flagged by membership.
pub fn levelset_grid(
    y_star: &MomentSequence,
    set: &SemiAlgebraicSet,
    basis: &RegressionBasis,
    criterion: Criterion,
    resolution: usize,
) -> Result<LevelSetGrid> {
    let n = set.n();
    if !(1..=3).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    if resolution < 2 {
        return Err(Error::InvalidInput("grid resolution must be >= 2".into()));
    }
    let r = set.ball_radius().ok_or(Error::MissingCompactnessCertificate)?;
    let pstar = DualPolynomial::from_moments(y_star, basis, criterion, y_star.order() / 2)?;
    let axis: Vec<f64> = (0..resolution)
        .map(|i| -r + 2.0 * r * i as f64 / (resolution - 1) as f64)
        .collect();
    let total = resolution.pow(n as u32);
    let mut nodes = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0; n];
        for xi in x.iter_mut() {
            *xi = axis[rem % resolution];
            rem /= resolution;
        }
        nodes.push(GridNode {
            pstar: pstar.eval(&x),
            inside: set.contains(&x, crate::semialg::DEFAULT_MEMBERSHIP_TOL),
            x,
        });
    }
    Ok(LevelSetGrid { n, resolution, nodes })
}

/// `|moments(design) - y*|_inf`.
pub fn design_moment_error(design: &Design, y_star: &MomentSequence) -> Result<f64> {
    design.moments(y_star.order())?.max_abs_diff(y_star)
}

/// Dual polynomial value at `x`, exposed for plotting and tests.
pub fn pstar_at(y_star: &MomentSequence, basis: &RegressionBasis, criterion: Criterion, x: &[f64]) -> Result<f64> {
    criteria::dual_polynomial_value(y_star, basis, criterion, y_star.order() / 2, x)
}

//! Problem files, stage records and the end-to-end driver used by the CLI.
//!
//! All files are JSON carrying a `schema_version`; unknown fields are
//! rejected.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certify::{self, CertificateReport, CertifyOptions};
use crate::conic::{SolverDiagnostics, SolverStatus};
use crate::criteria::{Criterion, DualPolynomial};
use crate::designsolve::{build_relaxation, solve_design, RelaxationConfig, SolveResult};
use crate::error::{Error, Result};
use crate::moments::MomentSequence;
use crate::polybasis::{MultiIndex, Polynomial, RegressionBasis};
use crate::recovery::{self, Attempt, Design, DesignRecord, RecoveryConfig, RecoveryMethod, MAX_LIFT_ORDER};
use crate::semialg::{self, DesignSpaceRecord, SemiAlgebraicSet};

pub const SCHEMA_VERSION: u32 = 1;

/// Per-coordinate and per-weight tolerance of `--check`.
pub const GOLDEN_TOL: f64 = 5e-3;

/// Bound on `|moments(design) - y*|` for a consistent result.
pub const MOMENT_CONSISTENCY_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpaceSpec {
    Preset(String),
    Inline(DesignSpaceRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub d: usize,
    /// Rows of the `p x s(d)` matrix `A` in `F(x) = A v_d(x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_matrix: Option<Vec<Vec<f64>>>,
}

fn default_r() -> usize {
    1
}

fn default_rank_tol() -> f64 {
    1e-6
}

fn default_r_max() -> usize {
    MAX_LIFT_ORDER
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySpec {
    #[serde(default)]
    pub method: RecoveryMethod,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
}

impl Default for RecoverySpec {
    fn default() -> Self {
        RecoverySpec {
            method: RecoveryMethod::default(),
            r: default_r(),
            rank_tol: default_rank_tol(),
            r_max: default_r_max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedMomentRecord {
    pub exponents: Vec<u32>,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for stage files; the CLI `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Nodes per axis of the level-set grid; no grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levelset_resolution: Option<usize>,
}

fn default_delta() -> usize {
    1
}

fn default_samples() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub design_space: DesignSpaceSpec,
    pub regression: RegressionSpec,
    pub criterion: Criterion,
    #[serde(default = "default_delta")]
    pub delta: usize,
    #[serde(default)]
    pub recovery: RecoverySpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_moments: Vec<FixedMomentRecord>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// A problem file turned into module configurations.
#[derive(Clone, Debug)]
pub struct Problem {
    pub set: SemiAlgebraicSet,
    pub relaxation: RelaxationConfig,
    pub recovery: RecoveryConfig,
    pub r_max: usize,
    pub certify: CertifyOptions,
    pub preset: Option<String>,
}

impl ProblemFile {
    /// The example settings shipped with each preset design space;
    /// `d` overrides the regression degree.
    pub fn preset(name: &str, d: Option<usize>) -> Result<ProblemFile> {
        semialg::preset(name)?;
        let (d0, delta, r) = match name {
            "interval" => (5, 0, 1),
            "sphere3d" => (1, 0, 2),
            _ => (1, 3, 3),
        };
        Ok(ProblemFile {
            schema_version: SCHEMA_VERSION,
            design_space: DesignSpaceSpec::Preset(name.to_string()),
            regression: RegressionSpec {
                d: d.unwrap_or(d0),
                basis_matrix: None,
            },
            criterion: Criterion::D,
            delta,
            recovery: RecoverySpec {
                r,
                ..RecoverySpec::default()
            },
            fixed_moments: Vec::new(),
            seed: 0,
            samples: default_samples(),
            outputs: OutputSpec::default(),
        })
    }

    pub fn resolve(&self) -> Result<Problem> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                location: "schema_version".into(),
                message: format!("unsupported version {}", self.schema_version),
            });
        }
        let (set, preset) = match &self.design_space {
            DesignSpaceSpec::Preset(name) => (semialg::preset(name)?, Some(name.clone())),
            DesignSpaceSpec::Inline(rec) => (rec.to_set()?, None),
        };
        let n = set.n();
        let d = self.regression.d;
        let mut relaxation = RelaxationConfig::new(n, d, self.delta, self.criterion)?;
        if let Some(rows) = &self.regression.basis_matrix {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Error::Parse {
                    location: "regression.basis_matrix".into(),
                    message: "rows have different lengths".into(),
                });
            }
            let m = DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied());
            let basis = RegressionBasis::from_matrix(m)?;
            basis.check_degree(n, d)?;
            relaxation.basis = basis;
        }
        let fixed = self
            .fixed_moments
            .iter()
            .map(|f| (MultiIndex::new(f.exponents.clone()), f.value))
            .collect();
        relaxation = relaxation.with_fixed_moments(fixed);
        let recovery = RecoveryConfig {
            r: self.recovery.r,
            method: self.recovery.method,
            rank_tol: self.recovery.rank_tol,
            seed: self.seed,
            ..RecoveryConfig::default()
        };
        recovery.validate()?;
        if self.recovery.r_max < self.recovery.r {
            return Err(Error::InvalidInput("recovery.r_max must be >= recovery.r".into()));
        }
        let certify = CertifyOptions {
            samples: self.samples,
            seed: self.seed,
            ..CertifyOptions::default()
        };
        Ok(Problem {
            set,
            relaxation,
            recovery,
            r_max: self.recovery.r_max,
            certify,
            preset,
        })
    }
}

/// Parses any of the JSON files, reporting the failing location.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Output of the `solve` stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRecord {
    pub schema_version: u32,
    pub criterion: Criterion,
    pub d: usize,
    pub delta: usize,
    pub rho: f64,
    pub objective: f64,
    pub status: SolverStatus,
    pub y_star: MomentSequence,
    pub y_lifted: MomentSequence,
    pub diagnostics: SolverDiagnostics,
}

impl SolveRecord {
    pub fn from_result(res: &SolveResult) -> Self {
        SolveRecord {
            schema_version: SCHEMA_VERSION,
            criterion: res.criterion,
            d: res.d,
            delta: res.delta,
            rho: res.rho,
            objective: res.objective,
            status: res.status,
            y_star: res.y_star.clone(),
            y_lifted: res.y_lifted.clone(),
            diagnostics: res.diagnostics.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttemptRecord {
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&Attempt> for AttemptRecord {
    fn from(a: &Attempt) -> Self {
        AttemptRecord {
            r: a.r,
            ranks: a.ranks.map(|t| [t.rank_high, t.rank_low]),
            error: a.error.clone(),
        }
    }
}

/// Output of the `recover` stage. `design` is absent when the rank
/// condition never held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryRecord {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignRecord>,
    pub attempts: Vec<AttemptRecord>,
}

impl RecoveryRecord {
    pub fn design(&self) -> Option<Design> {
        self.design.as_ref().map(|d| Design {
            points: d.points.clone(),
            weights: d.weights.clone(),
        })
    }
}

/// Comparison of a design with tabulated values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenCheck {
    pub expected_atoms: usize,
    pub found_atoms: usize,
    pub max_coordinate_error: f64,
    pub max_weight_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub solve_seconds: f64,
    pub recover_seconds: f64,
    pub certify_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Certified,
    RankNeverFlat,
    CertificationFailed,
}

impl Outcome {
    /// Process exit code; `1` is reserved for errors.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Certified => 0,
            Outcome::RankNeverFlat => 2,
            Outcome::CertificationFailed => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineResult {
    pub schema_version: u32,
    pub problem: ProblemFile,
    pub solve: SolveRecord,
    pub recovery: RecoveryRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
    /// `|moments(design) - y*|_inf` over the moments of order `<= 2d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden: Option<GoldenCheck>,
    pub outcome: Outcome,
    pub timing: Timing,
}

impl PipelineResult {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }
}

/// Runs the `solve` stage.
pub fn run_solve(problem: &Problem) -> Result<SolveResult> {
    solve_design(&problem.set, &problem.relaxation)
}

/// Runs the `recover` stage with escalation of `r` up to `r_max`.
pub fn run_recover(problem: &Problem, y_star: &MomentSequence) -> Result<RecoveryRecord> {
    let pstar = match problem.recovery.method {
        RecoveryMethod::Nie => None,
        _ => Some(
            DualPolynomial::from_moments(
                y_star,
                &problem.relaxation.basis,
                problem.relaxation.criterion,
                problem.relaxation.d,
            )?
            .to_polynomial(),
        ),
    };
    let outcome =
        recovery::recover_with_escalation(y_star, pstar.as_ref(), &problem.set, &problem.recovery, problem.r_max);
    Ok(match outcome {
        Ok(rec) => RecoveryRecord {
            schema_version: SCHEMA_VERSION,
            design: Some(rec.record()),
            attempts: rec.attempts.iter().map(AttemptRecord::from).collect(),
        },
        Err(fail) => RecoveryRecord {
            schema_version: SCHEMA_VERSION,
            design: None,
            attempts: fail.attempts.iter().map(AttemptRecord::from).collect(),
        },
    })
}

/// Runs the `certify` stage on sampled values of `p*`, adding the SOS
/// evidence when solver duals are at hand.
pub fn run_certify(
    problem: &Problem,
    y_star: &MomentSequence,
    design: &Design,
    solved: Option<&SolveResult>,
) -> Result<CertificateReport> {
    let cfg = &problem.relaxation;
    let mut report = certify::check_design(
        y_star,
        design,
        &problem.set,
        &cfg.basis,
        cfg.criterion,
        &problem.certify,
    )?;
    if let Some(res) = solved {
        let sos = certify::sos_certificate(res, &problem.set, &cfg.basis, problem.certify.seed)?;
        report.attach_sos(&sos);
    }
    Ok(report)
}

/// Solve, recover, certify and optionally compare with the tabulated design
/// of the preset.
pub fn run_pipeline(file: &ProblemFile, check: bool) -> Result<PipelineResult> {
    let problem = file.resolve()?;
    let t0 = Instant::now();
    let solved = run_solve(&problem)?;
    let t1 = Instant::now();
    let recovery = run_recover(&problem, &solved.y_star)?;
    let t2 = Instant::now();
    let (certificate, moment_error, golden) = match recovery.design() {
        Some(design) => {
            let report = run_certify(&problem, &solved.y_star, &design, Some(&solved))?;
            let err = certify::design_moment_error(&design, &solved.y_star)?;
            let golden = if check {
                problem
                    .preset
                    .as_deref()
                    .and_then(|p| golden_design(p, file.regression.d))
                    .map(|g| compare_with_golden(&design, &g, GOLDEN_TOL))
            } else {
                None
            };
            (Some(report), Some(err), golden)
        }
        None => (None, None, None),
    };
    let t3 = Instant::now();
    let outcome = match &certificate {
        None => Outcome::RankNeverFlat,
        Some(c) if c.passed && golden.as_ref().is_none_or(|g| g.passed) => Outcome::Certified,
        Some(_) => Outcome::CertificationFailed,
    };
    Ok(PipelineResult {
        schema_version: SCHEMA_VERSION,
        problem: file.clone(),
        solve: SolveRecord::from_result(&solved),
        recovery,
        certificate,
        moment_error,
        golden,
        outcome,
        timing: Timing {
            solve_seconds: (t1 - t0).as_secs_f64(),
            recover_seconds: (t2 - t1).as_secs_f64(),
            certify_seconds: (t3 - t2).as_secs_f64(),
        },
    })
}

/// Structure of the relaxation as JSON: blocks with their sparse
/// coefficient lists and the equality system.
pub fn dump_sdp(problem: &Problem) -> Result<Value> {
    let relax = build_relaxation(&problem.set, &problem.relaxation)?;
    let prog = &relax.program;
    let block = |b: &crate::conic::AffineBlock| {
        let mut coeffs = Vec::new();
        for var in 0..b.num_vars() {
            for &(r, c, v) in b.entries(var) {
                coeffs.push(json!([var, r, c, v]));
            }
        }
        let constant: Vec<Value> = (0..b.size())
            .flat_map(|r| (r..b.size()).map(move |c| (r, c)))
            .filter(|&(r, c)| b.constant()[(r, c)] != 0.0)
            .map(|(r, c)| json!([r, c, b.constant()[(r, c)]]))
            .collect();
        json!({
            "label": b.label,
            "size": b.size(),
            "reduced_size": b.reduced_size(),
            "constant": constant,
            "coefficients": coeffs,
        })
    };
    let equalities: Vec<Value> = (0..prog.eq_matrix.nrows())
        .map(|i| {
            let row: Vec<Value> = (0..prog.eq_matrix.ncols())
                .filter(|&j| prog.eq_matrix[(i, j)] != 0.0)
                .map(|j| json!([j, prog.eq_matrix[(i, j)]]))
                .collect();
            json!({"row": row, "rhs": prog.eq_rhs[i]})
        })
        .collect();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "num_vars": prog.num_vars,
        "num_moments": relax.num_moments,
        "order": relax.order,
        "cost": prog.cost.as_slice(),
        "logdet": prog.logdet.as_ref().map(block),
        "blocks": prog.blocks.iter().map(block).collect::<Vec<_>>(),
        "roles": relax.roles,
        "equalities": equalities,
    }))
}

/// The relaxation in sparse SDPA format.
pub fn dump_sdpa(problem: &Problem) -> Result<String> {
    let relax = build_relaxation(&problem.set, &problem.relaxation)?;
    Ok(crate::conic::write_sdpa(&relax.program))
}

/// A tabulated D-optimal design: points and weights.
pub type GoldenDesign = Vec<(Vec<f64>, f64)>;

const WYNN: [&[(f64, f64, f64)]; 3] = [
    &[
        (-0.35, -0.35, 0.125),
        (-0.35, 0.35, 0.281),
        (0.35, -0.35, 0.281),
        (0.71, 0.71, 0.313),
    ],
    &[
        (-0.35, -0.35, 0.163),
        (-0.35, 0.35, 0.165),
        (0.12, 0.12, 0.066),
        (0.35, -0.35, 0.165),
        (0.18, 0.53, 0.141),
        (0.53, 0.18, 0.141),
        (0.71, 0.71, 0.159),
    ],
    &[
        (-0.35, -0.35, 0.095),
        (0.02, -0.35, 0.074),
        (-0.35, 0.02, 0.074),
        (0.35, -0.35, 0.096),
        (0.14, -0.12, 0.044),
        (-0.12, 0.14, 0.044),
        (-0.35, 0.35, 0.097),
        (0.45, -0.06, 0.088),
        (-0.06, 0.45, 0.088),
        (0.39, 0.39, 0.037),
        (0.61, 0.41, 0.084),
        (0.41, 0.61, 0.084),
        (0.71, 0.71, 0.097),
    ],
];

const ELLIPSES: [&[(f64, f64, f64)]; 3] = [
    &[
        (0.0, -0.75, 0.250),
        (-0.90, 0.0, 0.250),
        (0.90, 0.0, 0.250),
        (0.0, 0.75, 0.250),
    ],
    &[
        (-0.45, -0.65, 0.134),
        (-0.90, 0.0, 0.139),
        (0.0, -0.39, 0.093),
        (0.45, -0.65, 0.134),
        (-0.45, 0.65, 0.134),
        (0.0, 0.39, 0.093),
        (0.90, 0.0, 0.139),
        (0.45, 0.65, 0.134),
    ],
    &[
        (-0.64, -0.53, 0.085),
        (-0.90, 0.0, 0.088),
        (0.0, -0.75, 0.088),
        (-0.36, -0.32, 0.075),
        (0.0, -0.39, 0.005),
        (-0.64, 0.53, 0.085),
        (-0.36, 0.32, 0.075),
        (0.36, -0.32, 0.075),
        (0.64, -0.53, 0.085),
        (0.0, 0.39, 0.005),
        (0.36, 0.32, 0.075),
        (0.0, 0.75, 0.088),
        (0.90, 0.0, 0.088),
        (0.64, 0.53, 0.085),
    ],
];

const MOON: [&[(f64, f64, f64)]; 3] = [
    &[
        (-0.80, 0.0, 0.329),
        (0.07, -0.53, 0.305),
        (0.07, 0.53, 0.305),
        (0.33, -0.29, 0.031),
        (0.33, 0.29, 0.031),
    ],
    &[
        (-0.39, -0.57, 0.167),
        (-0.80, 0.0, 0.167),
        (-0.20, 0.0, 0.167),
        (0.29, -0.35, 0.167),
        (-0.39, 0.57, 0.167),
        (0.29, 0.35, 0.167),
    ],
    &[
        (-0.57, -0.47, 0.099),
        (-0.08, -0.59, 0.098),
        (-0.80, 0.0, 0.100),
        (-0.45, -0.18, 0.061),
        (-0.11, -0.30, 0.062),
        (-0.45, 0.18, 0.061),
        (0.33, -0.29, 0.099),
        (-0.57, 0.47, 0.099),
        (0.11, 0.0, 0.063),
        (-0.11, 0.30, 0.062),
        (-0.08, 0.59, 0.098),
        (0.33, 0.29, 0.099),
    ],
];

const FOLIUM: [&[(f64, f64, f64)]; 3] = [
    &[(0.29, -0.55, 0.333), (-1.0, 0.0, 0.333), (0.29, 0.55, 0.333)],
    &[
        (-1.0, 0.0, 0.167),
        (-0.60, -0.21, 0.166),
        (-0.60, 0.21, 0.166),
        (0.28, -0.56, 0.162),
        (0.21, -0.20, 0.088),
        (0.21, 0.20, 0.088),
        (0.28, 0.56, 0.162),
    ],
    &[
        (-1.0, 0.0, 0.100),
        (-0.77, -0.20, 0.099),
        (-0.77, 0.20, 0.099),
        (-0.45, 0.0, 0.077),
        (-0.14, 0.0, 0.033),
        (0.10, -0.41, 0.098),
        (0.29, -0.56, 0.099),
        (0.31, -0.35, 0.100),
        (0.10, 0.41, 0.098),
        (0.31, 0.35, 0.100),
        (0.29, 0.56, 0.099),
    ],
];

/// Published D-optimal designs for the preset design spaces, when known.
pub fn golden_design(preset: &str, d: usize) -> Option<GoldenDesign> {
    if preset == "interval" && d == 5 {
        let pts = [-1.0, -0.765, -0.285, 0.285, 0.765, 1.0];
        return Some(pts.iter().map(|&t| (vec![t], 1.0 / 6.0)).collect());
    }
    let table = match preset {
        "wynn_polygon" => &WYNN,
        "ellipse_ring" => &ELLIPSES,
        "moon" => &MOON,
        "folium" => &FOLIUM,
        _ => return None,
    };
    let rows = table.get(d.checked_sub(1)?)?;
    Some(rows.iter().map(|&(a, b, w)| (vec![a, b], w)).collect())
}

/// Pairs every tabulated atom with its nearest unused computed atom.
pub fn compare_with_golden(design: &Design, golden: &GoldenDesign, tol: f64) -> GoldenCheck {
    let mut used = vec![false; design.len()];
    let mut max_c: f64 = 0.0;
    let mut max_w: f64 = 0.0;
    let mut complete = design.len() == golden.len();
    for (pt, w) in golden {
        let best = design
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, x)| (i, x.iter().zip(pt).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()))))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, err)) => {
                used[i] = true;
                max_c = max_c.max(err);
                max_w = max_w.max((design.weights[i] - w).abs());
            }
            None => complete = false,
        }
    }
    GoldenCheck {
        expected_atoms: golden.len(),
        found_atoms: design.len(),
        max_coordinate_error: max_c,
        max_weight_error: max_w,
        tolerance: tol,
        passed: complete && max_c <= tol && max_w <= tol,
    }
}

/// Convenience for callers holding a polynomial description of `X`.
pub fn inline_space(n: usize, inequalities: &[Polynomial], ball_radius: Option<f64>) -> DesignSpaceSpec {
    DesignSpaceSpec::Inline(DesignSpaceRecord {
        n,
        inequalities: inequalities.iter().map(Polynomial::to_records).collect(),
        ball_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_file_round_trips() {
        let f = ProblemFile::preset("wynn_polygon", None).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: ProblemFile = parse_json(&text).unwrap();
        assert_eq!(f, back);
        assert_eq!(back.regression.d, 1);
        assert_eq!(back.delta, 3);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"schema_version":1,"design_space":{"preset":"interval"},
            "regression":{"d":2},"criterion":"D","colour":"red"}"#;
        assert!(matches!(parse_json::<ProblemFile>(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let text = r#"{"schema_version":1,"design_space":{"preset":"interval"},
            "regression":{"d":2},"criterion":"A"}"#;
        let f: ProblemFile = parse_json(text).unwrap();
        assert_eq!(f.delta, 1);
        assert_eq!(f.recovery, RecoverySpec::default());
        let p = f.resolve().unwrap();
        assert_eq!(p.relaxation.criterion, Criterion::A);
    }

    #[test]
    fn malformed_polynomial_reports_location() {
        let text = r#"{"schema_version":1,
            "design_space":{"inline":{"n":1,"inequalities":[[{"exponents":[2,1],"coeff":-1.0}]]}},
            "regression":{"d":1},"criterion":"D"}"#;
        let f: ProblemFile = parse_json(text).unwrap();
        match f.resolve() {
            Err(Error::Parse { location, .. }) => assert!(location.contains("inequalities[0]")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn golden_tables_have_published_sizes() {
        let sizes: Vec<usize> = (1..=3)
            .map(|d| golden_design("wynn_polygon", d).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![4, 7, 13]);
        for name in ["wynn_polygon", "ellipse_ring", "moon", "folium"] {
            for d in 1..=3 {
                let total: f64 = golden_design(name, d).unwrap().iter().map(|g| g.1).sum();
                assert!((total - 1.0).abs() < 1e-2, "{name} {d} {total}");
            }
        }
        assert!(golden_design("sphere3d", 1).is_none());
    }

    #[test]
    fn golden_comparison_pairs_atoms() {
        let g = golden_design("interval", 5).unwrap();
        let mut design = Design {
            points: g.iter().rev().map(|p| p.0.clone()).collect(),
            weights: vec![1.0 / 6.0; 6],
        };
        assert!(compare_with_golden(&design, &g, 5e-3).passed);
        design.points[0][0] += 0.01;
        assert!(!compare_with_golden(&design, &g, 5e-3).passed);
    }

    #[test]
    fn outcome_codes() {
        assert_eq!(Outcome::Certified.exit_code(), 0);
        assert_eq!(Outcome::RankNeverFlat.exit_code(), 2);
        assert_eq!(Outcome::CertificationFailed.exit_code(), 3);
    }
}

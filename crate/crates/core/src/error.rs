use thiserror::Error;

use crate::conic::SolverStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("binomial coefficient C({n}+{d}, {n}) overflows usize")]
    BinomialOverflow { n: usize, d: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degree {needed} exceeds available moment order {available}")]
    DegreeOverflow { needed: usize, available: usize },

    #[error("design space has no ball constraint R^2 - |x|^2 >= 0 and no radius hint was given")]
    MissingCompactnessCertificate,

    #[error("sampling exhausted after {attempts} attempts ({accepted} accepted)")]
    SamplingExhausted { attempts: u64, accepted: usize },

    #[error("matrix is not symmetric (asymmetry {0:.3e})")]
    NonSymmetricInput(f64),

    #[error("matrix is singular to working tolerance")]
    SingularMatrix,

    #[error("least eigenvalue has multiplicity > 1 (gap {gap:.3e})")]
    EigMultiplicityAmbiguous { gap: f64 },

    #[error("unsupported criterion: {0}")]
    UnsupportedCriterion(String),

    #[error("regression basis matrix has rank {rank} < {rows} rows")]
    RankDeficientBasis { rank: usize, rows: usize },

    #[error("conic solver finished with status {status:?}: {detail}")]
    Solver { status: SolverStatus, detail: String },

    #[error("moment matching constraints are infeasible; y* is not (nearly) a moment sequence")]
    MatchConstraintInfeasible,

    #[error("atom extraction unstable (residual {residual:.3e}); try a larger relaxation order r")]
    ExtractionUnstable { residual: f64 },

    #[error("no atoms could be extracted: {0}")]
    NoAtomsExtracted(String),

    #[error("Vandermonde system ill-conditioned (condition estimate {cond:.3e})")]
    IllConditionedVandermonde { cond: f64 },

    #[error("weight solve produced negative weight {weight:.3e}")]
    NegativeWeight { weight: f64 },

    #[error("SOS certificate residual {residual:.3e} exceeds tolerance")]
    CertificateResidualTooLarge { residual: f64 },

    #[error("level-set grids support n in {{1, 2, 3}}, got n = {0}")]
    UnsupportedDimension(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BinomialOverflow { .. } => "binomial_overflow",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegreeOverflow { .. } => "degree_overflow",
            Error::MissingCompactnessCertificate => "missing_compactness_certificate",
            Error::SamplingExhausted { .. } => "sampling_exhausted",
            Error::NonSymmetricInput(_) => "non_symmetric_input",
            Error::SingularMatrix => "singular_matrix",
            Error::EigMultiplicityAmbiguous { .. } => "eig_multiplicity_ambiguous",
            Error::UnsupportedCriterion(_) => "unsupported_criterion",
            Error::RankDeficientBasis { .. } => "rank_deficient_basis",
            Error::Solver { .. } => "solver",
            Error::MatchConstraintInfeasible => "match_constraint_infeasible",
            Error::ExtractionUnstable { .. } => "extraction_unstable",
            Error::NoAtomsExtracted(_) => "no_atoms_extracted",
            Error::IllConditionedVandermonde { .. } => "ill_conditioned_vandermonde",
            Error::NegativeWeight { .. } => "negative_weight",
            Error::CertificateResidualTooLarge { .. } => "certificate_residual_too_large",
            Error::UnsupportedDimension(_) => "unsupported_dimension",
            Error::InvalidInput(_) => "invalid_input",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

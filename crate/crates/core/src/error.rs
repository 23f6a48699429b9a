use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constraint vector has no strictly positive entry")]
    InfeasibleSign,
    #[error("several candidate index sets satisfy the optimality conditions: {0}")]
    NumericalAmbiguity(String),
    #[error("no candidate index set satisfies the optimality conditions")]
    NoCandidate,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("index-set segments fail to cover (0, inf): {0}")]
    CoverageGap(String),
    #[error("covariance is not positive definite and regularization is disabled")]
    CovNotPd,
    #[error("exponent overflow: {0}")]
    Overflow(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("Pickands ladder is not decreasing: {0}")]
    NonConvergent(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("2D oracle preconditions fail: {0}")]
    OutOfScope2D(String),
    #[error("independent-components oracle preconditions fail: {0}")]
    OutOfScopeIndependent(String),
    #[error("negatively-associated oracle preconditions fail: {0}")]
    OutOfScopeNegAssoc(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("effective sample size {0:.1} is below 50")]
    EffectiveSampleTooSmall(f64),
    #[error("too few hits for a passage-time comparison: {0}")]
    TooFewHits(usize),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite(_) => "NOT_POSITIVE_DEFINITE",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::InfeasibleSign => "INFEASIBLE_SIGN",
            Error::NumericalAmbiguity(_) => "NUMERICAL_AMBIGUITY",
            Error::NoCandidate => "NO_CANDIDATE",
            Error::InvalidProblem(_) => "INVALID_PROBLEM",
            Error::CoverageGap(_) => "COVERAGE_GAP",
            Error::CovNotPd => "COV_NOT_PD",
            Error::Overflow(_) => "OVERFLOW",
            Error::InvalidGrid(_) => "INVALID_GRID",
            Error::NonConvergent(_) => "NON_CONVERGENT",
            Error::QuadratureNotConverged(_) => "QUADRATURE_NOT_CONVERGED",
            Error::OutOfScope2D(_) => "OUT_OF_SCOPE_2D",
            Error::OutOfScopeIndependent(_) => "OUT_OF_SCOPE_INDEPENDENT",
            Error::OutOfScopeNegAssoc(_) => "OUT_OF_SCOPE_NEG_ASSOC",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::EffectiveSampleTooSmall(_) => "EFFECTIVE_SAMPLE_TOO_SMALL",
            Error::TooFewHits(_) => "TOO_FEW_HITS",
        }
    }

    /// Pipeline module that raises this error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite(_)
            | Error::DimensionMismatch(_)
            | Error::InfeasibleSign
            | Error::NumericalAmbiguity(_)
            | Error::NoCandidate => "qp_core",
            Error::InvalidProblem(_) | Error::CoverageGap(_) => "g_analysis",
            Error::CovNotPd => "mvn_orthant",
            Error::Overflow(_) | Error::InvalidGrid(_) | Error::NonConvergent(_) => "pickands_mc",
            Error::QuadratureNotConverged(_)
            | Error::OutOfScope2D(_)
            | Error::OutOfScopeIndependent(_)
            | Error::OutOfScopeNegAssoc(_) => "asymptotics",
            Error::InvalidConfig(_) | Error::EffectiveSampleTooSmall(_) | Error::TooFewHits(_) => {
                "path_sim"
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

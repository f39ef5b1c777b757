use thiserror::Error;

/// Every failure the engine can report.
///
/// Each variant maps to a stable upper-case code (see [`Error::code`]) that the
/// CLI prints on stderr and the HTTP service returns in `error.code`.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("treatment start period out of range: {0}")]
    PeriodRange(String),

    #[error("measurement times must be strictly increasing with one entry per period: {0}")]
    NonMonotoneTimes(String),

    #[error("timing group {group} has no clusters in the {arm} arm")]
    EmptyGroup { group: usize, arm: &'static str },

    #[error("interrupted time series designs cannot have comparison clusters (timing group {0})")]
    ItsWithComparisons(usize),

    #[error("timing group {group} has {pre} pre-periods and {post} post-periods; trendline estimators need at least 3 of each")]
    CitsTooFewPeriods { group: usize, pre: usize, post: usize },

    #[error("period {period} is not a post-treatment period for timing group {group}")]
    NotPostPeriod { group: usize, period: usize },

    #[error("timing group {group} has too few {window} periods ({len}) for this term")]
    DegeneratePeriod { group: usize, window: &'static str, len: usize },

    #[error("no timing group contributes to {0}")]
    NoGroupIncluded(String),

    #[error("variance evaluated to {0}, below the numerical guard")]
    NumericGuard(f64),

    #[error("R-squared values must lie in [0, 1): {0}")]
    R2OutOfRange(String),

    #[error("probability {0} is outside (0, 1)")]
    POutOfRange(f64),

    #[error("degrees of freedom {0} are not positive; the design is too small for the model")]
    NonpositiveDf(f64),

    #[error("cluster solver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("trendline fit is singular: {0}")]
    SingularFit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Stable machine-readable name of the error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::PeriodRange(_) => "PERIOD_RANGE",
            Error::NonMonotoneTimes(_) => "NON_MONOTONE_TIMES",
            Error::EmptyGroup { .. } => "EMPTY_GROUP",
            Error::ItsWithComparisons(_) => "ITS_WITH_COMPARISONS",
            Error::CitsTooFewPeriods { .. } => "CITS_TOO_FEW_PERIODS",
            Error::NotPostPeriod { .. } => "NOT_POST_PERIOD",
            Error::DegeneratePeriod { .. } => "DEGENERATE_PERIOD",
            Error::NoGroupIncluded(_) => "NO_GROUP_INCLUDED",
            Error::NumericGuard(_) => "NUMERIC_GUARD",
            Error::R2OutOfRange(_) => "R2_OUT_OF_RANGE",
            Error::POutOfRange(_) => "P_OUT_OF_RANGE",
            Error::NonpositiveDf(_) => "NONPOSITIVE_DF",
            Error::NoConvergence(_) => "NO_CONVERGENCE",
            Error::SingularFit(_) => "SINGULAR_FIT",
            Error::InvalidParameter(_) => "INVALID_PARAMETER",
        }
    }

    /// Name of the input field most responsible for the error, when there is one.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::PeriodRange(_) | Error::CitsTooFewPeriods { .. } => Some("S"),
            Error::NonMonotoneTimes(_) => Some("times"),
            Error::EmptyGroup { .. } => Some("M_T_k"),
            Error::ItsWithComparisons(_) => Some("M_C_k"),
            Error::NotPostPeriod { .. } | Error::NoGroupIncluded(_) => Some("estimand"),
            Error::R2OutOfRange(_) => Some("covariates"),
            _ => None,
        }
    }

    /// True for errors caused by invalid user input (as opposed to a design that
    /// is valid but cannot be powered, or an internal inconsistency).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonpositiveDf(_) | Error::NoConvergence(_) | Error::NumericGuard(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

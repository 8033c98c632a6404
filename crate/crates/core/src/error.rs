use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: u64,
        message: String,
    },

    #[error("column {} is degenerate (zero variance or zero norm)", .0 + 1)]
    DegenerateColumn(usize),

    #[error("columns {} and {} are exact duplicates", .0 + 1, .1 + 1)]
    DuplicateColumn(usize, usize),

    #[error("design restricted to the requested subset is rank deficient")]
    SingularDesign,

    #[error("noise variance sigma2 is unknown; supply it or estimate it")]
    MissingVariance,

    #[error("noise variance is not estimable with n = {n} <= p = {p}")]
    NotEstimable { n: usize, p: usize },

    #[error("estimated noise variance is zero (perfect fit)")]
    DegenerateVariance,

    #[error("lasso path was computed from different data")]
    StalePath,

    #[error("path has no entry event after step {0}")]
    PathTooShort(usize),

    #[error("step {0} is separated from the next entry by a deletion event")]
    UnsupportedStep(usize),

    #[error("only {0} variables remain; the Gumbel correction needs at least 3")]
    TooFewRemaining(usize),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("maximum likelihood estimate diverges (separation or monotone likelihood)")]
    Separation,

    #[error("fit did not converge after {0} iterations")]
    Convergence(usize),

    #[error("survival data has no events")]
    NoEvents,

    #[error("{excluded} of {total} candidate fits failed; the maximum is unreliable")]
    UnreliableMax { excluded: usize, total: usize },

    #[error("orthogonal design needs n >= p (got n = {n}, p = {p})")]
    Infeasible { n: usize, p: usize },
}

impl Error {
    /// Numerical failures (rank loss, divergence) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign
                | Error::DuplicateColumn(..)
                | Error::Separation
                | Error::Convergence(_)
                | Error::DegenerateVariance
                | Error::UnreliableMax { .. }
        )
    }
}

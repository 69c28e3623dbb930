use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid interarrival pmf: {0}")]
    InvalidPmf(String),

    #[error("invalid reward table: {0}")]
    InvalidTable(String),

    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bisection stopped after {iterations} iterations with bracket width {width:e}")]
    NonConvergence { iterations: usize, width: f64 },

    #[error("evaluator returned a non-finite value ({value}) at u = {at}")]
    EvaluatorDiverged { at: f64, value: f64 },

    #[error("enumeration exceeds {limit} count vectors; use the recursion instead")]
    TooLarge { limit: u64 },

    #[error("characteristic roots are separated by only {separation:e}")]
    CoincidentRoots { separation: f64 },

    #[error("no closed-form outage for {0}; estimate it by Monte Carlo")]
    NeedsMonteCarlo(String),

    #[error("interarrival {value} cannot be placed on a common integer lattice")]
    LatticeError { value: f64 },

    #[error("rate grid has {points} points (limit {limit})")]
    GridTooLarge { points: u128, limit: u64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

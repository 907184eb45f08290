use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quantity {x} is outside the bid domain (max {max})")]
    Domain { x: f64, max: f64 },

    #[error("bid families do not match: {0}")]
    FamilyMismatch(String),

    #[error("invalid bid: {0}")]
    InvalidBid(String),

    #[error("market infeasible: capacity {capacity} cannot cover demand {demand}")]
    Infeasible { capacity: f64, demand: f64 },

    #[error("discrete instance has {combinations} prefix combinations (cap {cap})")]
    InstanceTooLarge { combinations: f64, cap: f64 },

    #[error("invalid revelation probabilities: {0}")]
    InvalidRevelation(String),

    #[error("average feedback information {alpha} outside [1, {k}]")]
    BadAlpha { alpha: f64, k: usize },

    #[error("all strategy weights underflowed")]
    NumericalUnderflow,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("round {round}, profile {profile:?}: {source}")]
    Round {
        round: usize,
        profile: Vec<usize>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors that come from an unclearable market rather than a bad configuration.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::Infeasible { .. } => true,
            Error::Round { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}

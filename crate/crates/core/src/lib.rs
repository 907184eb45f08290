//! Repeated procurement auctions with multiplicative-weights bidders.
//!
//! Bidders offer supply curves drawn from finite strategy sets, a
//! cost-minimising operator clears the market every round, and each bidder
//! updates a mixed strategy from whatever loss information it observes. The
//! core is generic over the float type; the aliases below fix it to `f64`.

pub mod bids;
pub mod clearing;
pub mod error;
pub mod experiment;
pub mod feedback;
pub mod learning;
pub mod payments;
pub mod scalar;
pub mod simulation;
pub mod verify;

pub use bids::{BidFamily, BidFunction, DiscreteBid, QuadraticBid, StrategySet};
pub use clearing::{ClearingResult, MarketFamily, MarketInstance};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, SweepParam};
pub use feedback::{AlphaAccumulator, RevelationProbs, WinnerHistory};
pub use learning::{FeedbackMode, Learner, LossEstimate, MixedStrategy};
pub use payments::{LossMap, PaymentRule, VcgSign};
pub use scalar::Scalar;
pub use simulation::{BidderSetup, LosingSetRule, RunOutcome, RunReport, Simulation};

pub type Quadratic = QuadraticBid<f64>;
pub type Discrete = DiscreteBid<f64>;
pub type Bid = BidFunction<f64>;
pub type Strategies = StrategySet<f64>;
pub type Market = MarketInstance<f64>;
pub type Sim = Simulation<f64>;
pub type Report = RunReport<f64>;

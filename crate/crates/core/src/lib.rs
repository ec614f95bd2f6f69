//! Maximal probability of completing a schedule of investments and
//! withdrawals with a stock/bond portfolio, rebalanced yearly.

pub mod error;
pub mod market;
pub mod mortality;
pub mod policy;
pub mod schedule;
pub mod simulate;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use market::ReturnModel;
pub use mortality::{HazardSequence, LifeTable};
pub use policy::Policy;
pub use schedule::{CashFlowSchedule, ThresholdSequence};
pub use simulate::{SimConfig, SimResult};
pub use solver::{PolicySurface, SolverConfig, ValueSurface};

//! Importance-sampling reward estimates for logged bandit data, certified by
//! PAC-Bayes deviation bounds.
//!
//! * [`bandit`]: policies, reward models, relative entropy, the epsilon floor
//! * [`history`]: logged steps and their JSON Lines format
//! * [`estimators`]: IS estimates and martingale difference terms
//! * [`bounds`]: parametric, grid, optimized and oracle radii
//! * [`simulator`]: seeded environments and replicate streams
//! * [`optimizer`]: Gibbs policy search returning a [`optimizer::Certificate`]
//! * [`experiments`]: coverage runs and bound comparisons

pub mod bandit;
pub mod bounds;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod history;
pub mod optimizer;
pub mod simulator;

pub use bandit::{ContextSpace, ContextualPolicy, Policy, RewardFamily, RewardModel};
pub use bounds::{BoundKind, BoundResult, BoundSpec};
pub use error::{Error, Result};
pub use history::{History, LoggedStep};
pub use optimizer::{Certificate, OptimizedPolicy};
pub use simulator::SimConfig;

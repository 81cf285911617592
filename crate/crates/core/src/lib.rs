//! Interactive preference-based multi-objective reinforcement learning.
//!
//! A population of scalarized PPO policies is evolved toward the Pareto
//! front while a decision maker answers pairwise queries; a Gaussian-process
//! preference model then steers the population toward the preferred region.

// Validation uses `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod env;
pub mod error;
pub mod golden;
pub mod moppo;
pub mod nn;
pub mod pareto;
pub mod policy;
pub mod preference;
pub mod session;
pub mod task;
pub mod weights;

pub use error::{Error, Result};
pub use golden::{GoldenSpec, GoldenTarget};
pub use pareto::{dominates, nondominated_filter, ObjectiveVector};
pub use weights::{das_dennis, Scalarization, WeightVector};

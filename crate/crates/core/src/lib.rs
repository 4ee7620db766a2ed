//! Safe, locally differentially private linear bandits for a team of agents
//! whose joint action must satisfy polytopic constraints.
//!
//! * [`geometry`]: simplex family, shrinkage, sharpness.
//! * [`privacy`]: Gaussian mechanism and per-agent privacy levels.
//! * [`estimation`]: ridge estimates and confidence radii.
//! * [`policy`]: exploration, conservative safe set and optimistic selection.
//! * [`allocator`]: privacy allocation under a regret budget.
//! * [`harness`]: simulation, regret bound, CSV output.

pub mod allocator;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod policy;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};

//! Best-of-N decoding with a pluggable critic, and the N × temperature
//! solve-rate sweep over nested candidate pools.

mod bon;
mod sweep;

pub use bon::{best_of_n, select, BonConfig, BonOutcome, Candidate, Critic};
pub use sweep::{sweep, PoolRecord, SweepConfig, SweepCritic, SweepGrid, SweepCell};

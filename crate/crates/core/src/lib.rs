//! Conjunctive filter evaluation with runtime predicate reordering.
//!
//! Rows flow through a [`operator::TaskContext`], which evaluates predicates
//! in the order held by its worker's shared [`operator::RankState`]. Sampled
//! rows are fully evaluated and timed; at every epoch boundary the task tries
//! to re-rank predicates by `cost / (1 - selectivity)`, smoothed with a
//! momentum term, and publish the new order.

pub mod datagen;
pub mod dates;
pub mod error;
pub mod harness;
pub mod model;
pub mod monitor;
pub mod operator;
pub mod parse;
pub mod rank;
pub mod specfile;

pub use error::{Error, Result};
pub use model::{Comparator, FilterQuery, Partition, Predicate, Record, Schema, Value, ValueKind};
pub use monitor::MonitorConfig;
pub use operator::{run_partitioned, CommitOutcome, OperatorMode, RankState, RunOptions, RunReport, TaskContext};
pub use rank::{MomentumConfig, Permutation};

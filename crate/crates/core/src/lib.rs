//! Robust pull-based epidemic learning.
//!
//! Honest nodes run local momentum SGD, pull the half-step models of `s`
//! uniformly sampled peers every round and combine them with a robust
//! aggregation rule. Because sampling is random, the number of Byzantine
//! models a node sees concentrates around `b * s / (n - 1)`, so a rule tuned
//! for `b_hat` attackers among `s + 1` inputs suffices with high probability.

pub mod aggregation;
pub mod attacks;
pub mod error;
pub mod numerics;
pub mod objectives;
pub mod protocol;
pub mod sampling;

pub use aggregation::{AggregationInput, Rule};
pub use attacks::{AttackKind, AttackSpec};
pub use error::{Result, RpelError};
pub use numerics::{Domain, ModelVector, RngStream, StreamId};
pub use objectives::{HonestObjective, ObjectiveSpec};
pub use protocol::{run_fixed_graph, run_rpel, RunOutput, SimulationConfig};
pub use sampling::SelectionPlan;

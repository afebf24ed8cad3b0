//! Red-blue pebbling on the attention computation graph: DAG construction,
//! calculation validation, exhaustive search on tiny graphs, a blocked
//! schedule realising the streaming kernel, and `M`-partition checks.

mod dag;
mod game;
mod partition;
mod schedule;

pub use dag::{build_attention_dag, AttentionDag, Dag, Node, NodeId, NodeKind, SumTree};
pub use game::{
    brute_force_min_io, validate_calculation, Calculation, Color, Rule, Transition, Violation, ViolationReason,
    BRUTE_FORCE_NODE_CAP,
};
pub use partition::{
    boundary_dominator, greedy_partition, level1_vertex_count, minimum_set, verify_m_partition, MPartition, Part,
    PartitionViolation,
};
pub use schedule::{blocked_pebbling_schedule, schedule_min_budget, schedule_peak, Schedule};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PebbleError {
    #[error("malformed DAG: {0}")]
    Malformed(String),
    #[error("exhaustive search refuses {nodes} nodes (cap {cap})")]
    SearchCap { nodes: usize, cap: usize },
    #[error("blocked schedule needs at least {required} red pebbles, got M = {m}")]
    Regime { m: usize, required: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

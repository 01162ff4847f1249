//! In-order packet delivery for instantly decodable network coding (IDNC)
//! over erasure broadcast channels.
//!
//! The crate covers the whole pipeline from receiver feedback to experiment
//! metrics:
//!
//! * [`model`]: the state feedback matrix and per-receiver Has/Wants/
//!   Undelivered/Potential sets.
//! * [`graph`]: IDNC graph construction and maximal clique enumeration.
//! * [`ssp`]: the exact stochastic shortest path formulation, solved by policy
//!   iteration with value iteration as a cross-check.
//! * [`heuristics`]: the maximum weight vertex search and baseline schedulers.
//! * [`sim`]: seeded slot-by-slot broadcast simulation.
//! * [`metrics`]: undelivered-packet metrics, aggregation and CSV output.

pub mod error;
pub mod graph;
pub mod heuristics;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod ssp;

pub use error::{IdncError, Result};
pub use graph::{build_graph, candidate_subgraph, enumerate_maximal_cliques, partition_targets, Clique, IdncGraph, Vertex};
pub use heuristics::{
    baseline_select, compute_priority_context, mwvs_select, vertex_weight, Phase, PriorityContext, SchedulerKind,
};
pub use metrics::{
    aggregate, aggregate_summaries, cumulative_mean_undelivered, mean_undelivered_after, AggregateMetrics, RunSummary,
};
pub use model::{FeedbackMatrix, ReceiverView, SessionConfig, TransmissionSetting};
pub use sim::{run_batch, run_batch_map, simulate_run, RunTrace, Scheduler, SlotRecord};
pub use ssp::{
    enumerate_reachable_states, expected_cost, export_policy, policy_iteration, transition_distribution,
    value_iteration, PolicyAndValue, PolicyTable, SspModel, SspState,
};

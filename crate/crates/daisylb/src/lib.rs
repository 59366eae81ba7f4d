//! daisylb — a deterministic simulator for hierarchical, cluster-based
//! dynamic load balancing on a coordinator ring (the "daisy" layout).
//!
//! A grid is modeled as clusters of nodes. Each cluster's coordinator polls
//! its members, plans greedy local transfers from overloaded nodes into
//! nodes with spare room, and — when the cluster as a whole is overloaded —
//! joins a token circulation over the coordinator ring. The surviving token
//! collects every cluster's total and its originator broadcasts the full
//! load vector, from which every coordinator independently derives the same
//! inter-cluster transfer plan. Loads then move donor node → own coordinator
//! → remote coordinator → recipient node, with acknowledgments retracing the
//! path, and each coordinator releases its cluster when its work is done.
//!
//! The crate is organized the way the protocol is layered:
//!
//! * [`load`] — load values, thresholds, LOW/MEDIUM/HIGH classification.
//! * [`planner`] — the deterministic greedy planners (intra-cluster,
//!   inter-cluster, and the donor/recipient assignment of amounts).
//! * [`protocol`] — the message vocabulary and the coordinator/node state
//!   machines as pure transition functions.
//! * [`sim`] — topology construction and the deterministic discrete-event
//!   engine with full tracing.
//! * [`metrics`] — balancing statistics, message/time bound checkers, and
//!   CSV/JSON emitters.
//! * [`scenario`] — file-driven scenario configuration, the seeded load
//!   generator, and the run/sweep harness behind the CLI.
//!
//! The `examples/` directory shows each capability end to end; start with
//! `walkthrough` for an annotated four-cluster round.

pub mod load;
pub mod metrics;
pub mod planner;
pub mod protocol;
pub mod scenario;
pub mod sim;

pub use load::{classify_cluster_load, classify_node_load, Load, LoadClass, Thresholds};
pub use planner::{
    global_balance_plan, local_balance_plan, receiver_assignment, sender_assignment, TransferPlan,
    TransferRecord,
};
pub use protocol::{ActorId, ClusterId, Message, NodeId};
pub use sim::{build_topology, run_round, LoadTimeModel, RoundResult, TimerSchedule, Topology};

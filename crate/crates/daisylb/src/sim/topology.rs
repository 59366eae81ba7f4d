//! Cluster/ring construction and the latency model.

use crate::load::{Load, Thresholds};
use crate::protocol::{ActorId, ClusterId, Message, NodeId};
use serde::{Deserialize, Serialize};

/// How long the payload of a load transfer takes, on top of the hop latency
/// of the delivery that lands it on the recipient node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadTimeModel {
    /// Fixed cost per transfer.
    Constant(u64),
    /// Cost proportional to the number of load units moved.
    PerUnit(u64),
}

impl LoadTimeModel {
    pub fn cost(&self, amount: Load) -> u64 {
        match *self {
            LoadTimeModel::Constant(c) => c,
            LoadTimeModel::PerUnit(per) => per * amount.units(),
        }
    }
}

/// One cluster: its ring position, coordinator and member node processes.
/// The first member is the node process co-located with the coordinator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    pub id: ClusterId,
    pub members: Vec<NodeId>,
}

impl ClusterSpec {
    /// Node id the coordinator is co-located with; used to name it in traces.
    pub fn anchor(&self) -> NodeId {
        self.members[0]
    }
}

/// The daisy: clusters whose coordinators form a directed ring, plus the
/// latency parameters `d` (cluster diameter in hops), `T` (per-hop time) and
/// the load transfer time model `L`.
///
/// Message latencies: every intra-cluster path (member to coordinator or
/// member to member) costs `d*T`; a coordinator-to-coordinator hop costs `T`;
/// the load-vector broadcast costs `d*T`; and the delivery that lands a
/// payload on its recipient node additionally costs `L`. `L` is charged
/// exactly once per transfer, on that final delivery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub clusters: Vec<ClusterSpec>,
    pub diameter: u64,
    pub hop_time: u64,
    pub load_time: LoadTimeModel,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TopologyError {
    #[error("topology needs at least one cluster")]
    NoClusters,
    #[error("cluster {0} has zero nodes")]
    EmptyCluster(usize),
    #[error("cluster diameter must be at least 1")]
    ZeroDiameter,
    #[error("per-hop time must be positive")]
    ZeroHopTime,
}

/// Builds the daisy from cluster sizes. Nodes are numbered consecutively in
/// cluster order, the first node of each cluster hosts its coordinator, and
/// the ring follows ascending coordinator id.
pub fn build_topology(
    cluster_sizes: &[usize],
    diameter: u64,
    hop_time: u64,
    load_time: LoadTimeModel,
) -> Result<Topology, TopologyError> {
    if cluster_sizes.is_empty() {
        return Err(TopologyError::NoClusters);
    }
    if diameter == 0 {
        return Err(TopologyError::ZeroDiameter);
    }
    if hop_time == 0 {
        return Err(TopologyError::ZeroHopTime);
    }
    let mut clusters = Vec::with_capacity(cluster_sizes.len());
    let mut next_node = 0u32;
    for (i, &size) in cluster_sizes.iter().enumerate() {
        if size == 0 {
            return Err(TopologyError::EmptyCluster(i));
        }
        let members = (0..size).map(|k| NodeId(next_node + k as u32)).collect();
        next_node += size as u32;
        clusters.push(ClusterSpec {
            id: ClusterId(i as u32),
            members,
        });
    }
    Ok(Topology {
        clusters,
        diameter,
        hop_time,
        load_time,
    })
}

impl Topology {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    pub fn ring_next(&self, cluster: ClusterId) -> ClusterId {
        ClusterId((cluster.0 + 1) % self.clusters.len() as u32)
    }

    /// Per-cluster capacities, ascending by cluster id.
    pub fn cluster_caps(&self, t: &Thresholds) -> Vec<(ClusterId, Load)> {
        self.clusters
            .iter()
            .map(|c| (c.id, t.cluster_capacity(c.members.len()).cluster_medium_max))
            .collect()
    }

    /// Coordinator display name, anchored to its co-located node id (so the
    /// trace reads like the topology: "c0", "c6", ...).
    pub fn coord_name(&self, cluster: ClusterId) -> String {
        format!("c{}", self.clusters[cluster.0 as usize].anchor().0)
    }

    pub fn actor_name(&self, actor: ActorId) -> String {
        match actor {
            ActorId::Node(n) => format!("n{}", n.0),
            ActorId::Coord(c) => self.coord_name(c),
        }
    }

    /// Delivery latency for one message on one link.
    pub fn latency(&self, src: ActorId, dst: ActorId, msg: &Message) -> u64 {
        let _ = (src, dst);
        let intra = self.diameter * self.hop_time;
        match msg {
            Message::Token(_) | Message::CrossLoad { .. } | Message::CrossAck => self.hop_time,
            Message::LoadVector { .. } => intra,
            Message::NodeLoad { amount } => intra + self.load_time.cost(*amount),
            _ => intra,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_six_matches_worked_layout() {
        let t = build_topology(&[6, 6, 6, 6], 1, 1, LoadTimeModel::Constant(0)).unwrap();
        assert_eq!(t.n_nodes(), 24);
        let anchors: Vec<u32> = t.clusters.iter().map(|c| c.anchor().0).collect();
        assert_eq!(anchors, vec![0, 6, 12, 18]);
        assert_eq!(t.ring_next(ClusterId(3)), ClusterId(0));
    }

    #[test]
    fn single_node_cluster_is_its_own_coordinator() {
        let t = build_topology(&[1], 1, 1, LoadTimeModel::Constant(0)).unwrap();
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.clusters[0].anchor(), NodeId(0));
        assert_eq!(t.ring_next(ClusterId(0)), ClusterId(0));
    }

    #[test]
    fn mixed_sizes() {
        let t = build_topology(&[3, 4, 6], 1, 1, LoadTimeModel::Constant(0)).unwrap();
        assert_eq!(t.n_nodes(), 13);
        assert_eq!(t.n_clusters(), 3);
        let anchors: Vec<u32> = t.clusters.iter().map(|c| c.anchor().0).collect();
        assert_eq!(anchors, vec![0, 3, 7]);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(build_topology(&[], 1, 1, LoadTimeModel::Constant(0)).is_err());
        assert!(build_topology(&[3, 0], 1, 1, LoadTimeModel::Constant(0)).is_err());
        assert!(build_topology(&[3], 0, 1, LoadTimeModel::Constant(0)).is_err());
        assert!(build_topology(&[3], 1, 0, LoadTimeModel::Constant(0)).is_err());
    }

    #[test]
    fn payload_latency_charged_on_final_delivery_only() {
        let t = build_topology(&[2, 2], 2, 3, LoadTimeModel::Constant(7)).unwrap();
        let n0 = ActorId::Node(NodeId(0));
        let n1 = ActorId::Node(NodeId(1));
        let c0 = ActorId::Coord(ClusterId(0));
        let c1 = ActorId::Coord(ClusterId(1));
        assert_eq!(t.latency(c0, n0, &Message::Poll), 6);
        assert_eq!(
            t.latency(n0, n1, &Message::NodeLoad { amount: Load(3) }),
            13
        );
        assert_eq!(
            t.latency(
                n1,
                c0,
                &Message::CoordLoad {
                    amount: Load(3),
                    dest: ClusterId(1)
                }
            ),
            6
        );
        assert_eq!(
            t.latency(
                c0,
                c1,
                &Message::CrossLoad {
                    amount: Load(3),
                    from: ClusterId(0)
                }
            ),
            3
        );
        let linear = build_topology(&[2], 1, 1, LoadTimeModel::PerUnit(2)).unwrap();
        assert_eq!(
            linear.latency(n0, n1, &Message::NodeLoad { amount: Load(5) }),
            11
        );
    }
}

//! The deterministic discrete-event loop.
//!
//! Events are delivered in `(time, send sequence)` order, which makes every
//! run a pure function of topology, initial loads and the timer schedule.
//! Links are reliable and FIFO: a delivery never overtakes an earlier send on
//! the same (source, destination) pair, enforced by clamping delivery times.
//!
//! The engine also polices two round invariants on the fly: total load
//! (actor-held plus in-flight) never changes, and a coordinator multicasts
//! `End` to every member each time it returns to idle. Violations abort the
//! round, as does exhausting the event ceiling — a livelock shows up as a
//! diagnosable error instead of a hang.

use crate::load::{Load, Thresholds};
use crate::protocol::{
    ActorId, ClusterId, CoordinatorFsm, Event, Message, NodeFsm, NodeId, Outgoing, ProtocolError,
    TransferDest,
};
use crate::sim::topology::Topology;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

pub const DEFAULT_EVENT_CEILING: u64 = 1_000_000;

/// When each coordinator's activation timer fires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimerSchedule {
    /// Every coordinator wakes at t = 0.
    Simultaneous,
    /// Per-cluster firing instants, indexed by ring position.
    Offsets(Vec<u64>),
}

impl TimerSchedule {
    fn instant(&self, cluster: usize) -> u64 {
        match self {
            TimerSchedule::Simultaneous => 0,
            TimerSchedule::Offsets(v) => v[cluster],
        }
    }
}

/// One delivered message, as recorded in the round trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub sent_at: u64,
    pub deliver_at: u64,
    pub src: ActorId,
    pub dst: ActorId,
    pub msg: Message,
    /// Which commanded transfer this message belongs to, when it is part of
    /// a transfer's message chain.
    pub transfer: Option<u32>,
}

/// One network leg of a transfer's message chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferLeg {
    pub variant: &'static str,
    pub src: ActorId,
    pub dst: ActorId,
    pub sent_at: u64,
    pub deliver_at: u64,
}

/// The full story of one commanded transfer, local or inter-cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferLog {
    pub id: u32,
    pub donor: NodeId,
    pub donor_cluster: ClusterId,
    pub dest: TransferDest,
    pub amount: Load,
    /// The donor's load report that fed the plan commanding this transfer.
    pub state_sent_at: u64,
    pub state_deliver_at: u64,
    /// Every delivered message tagged to this transfer, command included.
    pub legs: Vec<TransferLeg>,
}

impl TransferLog {
    pub fn is_remote(&self) -> bool {
        matches!(self.dest, TransferDest::Cluster(_))
    }

    /// True once the donor received the acknowledgment closing the chain.
    pub fn completed(&self) -> bool {
        self.legs
            .last()
            .is_some_and(|leg| leg.variant == "NodeAck" && leg.dst == ActorId::Node(self.donor))
    }
}

/// Everything a finished round yields.
#[derive(Debug, Clone)]
pub struct RoundResult {
    pub initial_loads: Vec<Load>,
    pub final_loads: Vec<Load>,
    pub trace: Vec<TraceEvent>,
    pub transfers: Vec<TransferLog>,
    pub sim_time: u64,
    pub events_processed: u64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("protocol violation: {0}")]
    Protocol(#[from] ProtocolError),
    #[error(
        "event ceiling of {ceiling} exhausted; live actors: {}",
        format_live(live)
    )]
    EventCeiling {
        ceiling: u64,
        live: Vec<(String, String)>,
    },
    #[error(
        "no events left but actors still busy (deadlock): {}",
        format_live(live)
    )]
    Stuck { live: Vec<(String, String)> },
    #[error("conservation broken at t={time}: held {held} + in-flight {in_flight} != {expected}")]
    ConservationViolated {
        time: u64,
        held: u64,
        in_flight: u64,
        expected: u64,
    },
    #[error("coordinator {coordinator} went idle without ending its cluster")]
    EndNotMulticast { coordinator: String },
    #[error("{got} initial loads for {want} nodes")]
    LoadCountMismatch { got: usize, want: usize },
    #[error("timer schedule has {got} offsets for {want} clusters")]
    ScheduleMismatch { got: usize, want: usize },
}

fn format_live(live: &[(String, String)]) -> String {
    live.iter()
        .map(|(a, s)| format!("{a}={s}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug)]
struct QueuedEvent {
    deliver_at: u64,
    seq: u64,
    sent_at: u64,
    src: ActorId,
    dst: ActorId,
    payload: Payload,
    transfer: Option<u32>,
}

#[derive(Debug)]
enum Payload {
    Timer,
    Msg(Message),
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.deliver_at == other.deliver_at && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_at, self.seq).cmp(&(other.deliver_at, other.seq))
    }
}

struct Engine<'a> {
    topology: &'a Topology,
    nodes: BTreeMap<NodeId, NodeFsm>,
    coords: BTreeMap<ClusterId, CoordinatorFsm>,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    next_seq: u64,
    now: u64,
    /// FIFO link guarantee: latest delivery already scheduled per link.
    link_front: BTreeMap<(ActorId, ActorId), u64>,
    trace: Vec<TraceEvent>,
    transfers: Vec<TransferLog>,
    /// Commands delivered to a donor but not yet executed, oldest first.
    donor_cmds: BTreeMap<NodeId, VecDeque<u32>>,
    /// Cross-cluster payloads a receiving coordinator has not yet finished.
    receiver_cross: BTreeMap<ClusterId, VecDeque<u32>>,
    /// Latest load report per node, for attributing transfers.
    last_report: BTreeMap<NodeId, (u64, u64)>,
    held_total: u64,
    in_flight: u64,
    expected_total: u64,
}

impl<'a> Engine<'a> {
    fn live_actors(&self) -> Vec<(String, String)> {
        let mut live = Vec::new();
        for (c, fsm) in &self.coords {
            if !fsm.is_idle() {
                live.push((self.topology.coord_name(*c), fsm.phase_name().to_string()));
            }
        }
        for (n, fsm) in &self.nodes {
            if !fsm.is_idle() {
                live.push((format!("n{}", n.0), format!("{:?}", fsm.phase())));
            }
        }
        live
    }

    fn send(&mut self, src: ActorId, out: Outgoing, inherited: Option<u32>) {
        let Outgoing { to, msg } = out;
        let transfer = self.tag_for(src, to, &msg, inherited);
        let latency = self.topology.latency(src, to, &msg);
        let natural = self.now + latency;
        let front = self.link_front.entry((src, to)).or_insert(0);
        let deliver_at = natural.max(*front);
        *front = deliver_at;

        if let Message::NodeLoad { amount } | Message::CoordLoad { amount, .. } = msg {
            if matches!(src, ActorId::Node(_)) {
                // donor decremented itself this step; the units ride the wire
                self.in_flight += amount.units();
            }
        }

        self.queue.push(Reverse(QueuedEvent {
            deliver_at,
            seq: self.next_seq,
            sent_at: self.now,
            src,
            dst: to,
            payload: Payload::Msg(msg),
            transfer,
        }));
        self.next_seq += 1;
    }

    /// Attributes one outgoing message to a transfer chain.
    ///
    /// Commands open a fresh chain. A payload leaving a donor executes that
    /// donor's oldest pending command. A payload or closing acknowledgment
    /// leaving a receiving coordinator belongs to its oldest unfinished
    /// cross-cluster delivery. Everything else rides the chain of the event
    /// that triggered it.
    fn tag_for(
        &mut self,
        src: ActorId,
        dst: ActorId,
        msg: &Message,
        inherited: Option<u32>,
    ) -> Option<u32> {
        match (src, msg) {
            (ActorId::Coord(cluster), Message::TransferCmd { dest, amount }) => {
                let donor = match dst {
                    ActorId::Node(n) => n,
                    ActorId::Coord(_) => unreachable!("commands address nodes"),
                };
                let id = self.transfers.len() as u32;
                let (state_sent_at, state_deliver_at) =
                    self.last_report.get(&donor).copied().unwrap_or((0, 0));
                self.transfers.push(TransferLog {
                    id,
                    donor,
                    donor_cluster: cluster,
                    dest: *dest,
                    amount: *amount,
                    state_sent_at,
                    state_deliver_at,
                    legs: Vec::new(),
                });
                self.donor_cmds.entry(donor).or_default().push_back(id);
                Some(id)
            }
            (ActorId::Node(n), Message::NodeLoad { .. } | Message::CoordLoad { .. }) => {
                let id = self
                    .donor_cmds
                    .get_mut(&n)
                    .and_then(|q| q.pop_front())
                    .expect("payload leaving a node executes a pending command");
                Some(id)
            }
            (ActorId::Coord(c), Message::NodeLoad { .. }) => {
                self.receiver_cross.get(&c).and_then(|q| q.front()).copied()
            }
            (ActorId::Coord(c), Message::CrossAck) => {
                self.receiver_cross.get_mut(&c).and_then(|q| q.pop_front())
            }
            (_, Message::NodeAck | Message::CrossLoad { .. }) => inherited,
            _ => None,
        }
    }

    fn check_conservation(&self) -> Result<(), SimError> {
        if self.held_total + self.in_flight != self.expected_total {
            return Err(SimError::ConservationViolated {
                time: self.now,
                held: self.held_total,
                in_flight: self.in_flight,
                expected: self.expected_total,
            });
        }
        Ok(())
    }
}

/// Runs one full balancing round to quiescence.
///
/// `initial_loads` holds one load per node in node-id order; the round ends
/// when no events remain and every actor is idle. `event_ceiling` bounds the
/// number of deliveries before the round is declared live-locked.
pub fn run_round(
    topology: &Topology,
    thresholds: &Thresholds,
    initial_loads: &[Load],
    schedule: &TimerSchedule,
    event_ceiling: u64,
) -> Result<RoundResult, SimError> {
    if initial_loads.len() != topology.n_nodes() {
        return Err(SimError::LoadCountMismatch {
            got: initial_loads.len(),
            want: topology.n_nodes(),
        });
    }
    if let TimerSchedule::Offsets(v) = schedule {
        if v.len() != topology.n_clusters() {
            return Err(SimError::ScheduleMismatch {
                got: v.len(),
                want: topology.n_clusters(),
            });
        }
    }

    let caps = {
        let mut caps = Vec::new();
        for c in &topology.clusters {
            caps.push((
                c.id,
                thresholds
                    .cluster_capacity(c.members.len())
                    .cluster_medium_max,
            ));
        }
        caps
    };

    let mut nodes = BTreeMap::new();
    let mut coords = BTreeMap::new();
    for cluster in &topology.clusters {
        coords.insert(
            cluster.id,
            CoordinatorFsm::new(
                cluster.id,
                cluster.members.clone(),
                topology.ring_next(cluster.id),
                *thresholds,
                caps.clone(),
            ),
        );
        for &m in &cluster.members {
            nodes.insert(
                m,
                NodeFsm::new(m, cluster.id, initial_loads[m.0 as usize], *thresholds),
            );
        }
    }

    let expected_total: u64 = initial_loads.iter().map(|l| l.units()).sum();
    let mut engine = Engine {
        topology,
        nodes,
        coords,
        queue: BinaryHeap::new(),
        next_seq: 0,
        now: 0,
        link_front: BTreeMap::new(),
        trace: Vec::new(),
        transfers: Vec::new(),
        donor_cmds: BTreeMap::new(),
        receiver_cross: BTreeMap::new(),
        last_report: BTreeMap::new(),
        held_total: expected_total,
        in_flight: 0,
        expected_total,
    };

    for (i, cluster) in topology.clusters.iter().enumerate() {
        engine.queue.push(Reverse(QueuedEvent {
            deliver_at: schedule.instant(i),
            seq: engine.next_seq,
            sent_at: schedule.instant(i),
            src: ActorId::Coord(cluster.id),
            dst: ActorId::Coord(cluster.id),
            payload: Payload::Timer,
            transfer: None,
        }));
        engine.next_seq += 1;
    }

    let mut events_processed = 0u64;
    while let Some(Reverse(ev)) = engine.queue.pop() {
        events_processed += 1;
        if events_processed > event_ceiling {
            return Err(SimError::EventCeiling {
                ceiling: event_ceiling,
                live: engine.live_actors(),
            });
        }
        engine.now = ev.deliver_at;

        let outgoing = match (&ev.payload, ev.dst) {
            (Payload::Timer, ActorId::Coord(c)) => {
                let fsm = engine.coords.get_mut(&c).expect("coordinator exists");
                fsm.step(Event::Timeout)?
            }
            (Payload::Timer, ActorId::Node(_)) => unreachable!("nodes have no timers"),
            (Payload::Msg(msg), dst) => {
                engine.trace.push(TraceEvent {
                    seq: ev.seq,
                    sent_at: ev.sent_at,
                    deliver_at: ev.deliver_at,
                    src: ev.src,
                    dst,
                    msg: msg.clone(),
                    transfer: ev.transfer,
                });
                if let Some(id) = ev.transfer {
                    engine.transfers[id as usize].legs.push(TransferLeg {
                        variant: msg.variant_name(),
                        src: ev.src,
                        dst,
                        sent_at: ev.sent_at,
                        deliver_at: ev.deliver_at,
                    });
                }
                match dst {
                    ActorId::Node(n) => {
                        if let Message::NodeLoad { amount } = msg {
                            // the units leave the wire; the step below books
                            // them into the recipient
                            engine.in_flight -= amount.units();
                        }
                        let before = engine.nodes[&n].load().units();
                        let fsm = engine.nodes.get_mut(&n).expect("node exists");
                        let out = fsm.step(Event::Delivered {
                            from: ev.src,
                            msg: msg.clone(),
                        })?;
                        let after = engine.nodes[&n].load().units();
                        engine.held_total = engine.held_total + after - before;
                        out
                    }
                    ActorId::Coord(c) => {
                        if let (Message::NodeState { .. }, ActorId::Node(reporter)) = (&msg, ev.src)
                        {
                            engine
                                .last_report
                                .insert(reporter, (ev.sent_at, ev.deliver_at));
                        }
                        if let Message::CrossLoad { .. } = msg {
                            engine
                                .receiver_cross
                                .entry(c)
                                .or_default()
                                .push_back(ev.transfer.expect("cross payloads are tagged"));
                        }
                        let fsm = engine.coords.get_mut(&c).expect("coordinator exists");
                        let was_idle = fsm.is_idle();
                        let out = fsm.step(Event::Delivered {
                            from: ev.src,
                            msg: msg.clone(),
                        })?;
                        let fsm = &engine.coords[&c];
                        if !was_idle && fsm.is_idle() {
                            let members = &topology.clusters[c.0 as usize].members;
                            let ended = members.iter().all(|m| {
                                out.iter().any(|o| {
                                    o.to == ActorId::Node(*m) && matches!(o.msg, Message::End)
                                })
                            });
                            if !ended {
                                return Err(SimError::EndNotMulticast {
                                    coordinator: topology.coord_name(c),
                                });
                            }
                        }
                        out
                    }
                }
            }
        };

        for o in outgoing {
            engine.send(ev.dst, o, ev.transfer);
        }
        engine.check_conservation()?;
    }

    let live = engine.live_actors();
    if !live.is_empty() {
        return Err(SimError::Stuck { live });
    }

    let final_loads: Vec<Load> = engine.nodes.values().map(|n| n.load()).collect();
    Ok(RoundResult {
        initial_loads: initial_loads.to_vec(),
        final_loads,
        sim_time: engine.now,
        events_processed,
        trace: engine.trace,
        transfers: engine.transfers,
    })
}

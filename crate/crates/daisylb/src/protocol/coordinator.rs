//! The coordinator-side state machine.
//!
//! One round, from the coordinator's point of view:
//!
//! 1. Its timer fires (or a ring token arrives while idle). It polls every
//!    member, including its own co-located node process.
//! 2. With all loads in hand it plans local transfers, commands the donors,
//!    and books the planned end state into its member ledger. From here the
//!    ledger, not the wire, is the authority on member loads; physical
//!    deliveries may still be in flight but always land at the booked values.
//! 3. If the cluster total exceeds capacity it originates a ring token, or
//!    forwards the smallest token it has recorded; a balanced cluster with a
//!    recorded token forwards it; a balanced cluster with none releases its
//!    members and goes idle until a token wakes it.
//! 4. Tokens circulate; only the smallest-originator token survives a full
//!    circuit. Its originator broadcasts the complete load vector and every
//!    coordinator independently derives the same global plan from it.
//! 5. Senders drive one outgoing chunk at a time (command a donor, relay its
//!    payload, await the cross-cluster acknowledgment); receivers fan each
//!    arriving payload into members with spare room and acknowledge back.
//!    When a coordinator has nothing left to do it multicasts `End`.
//!
//! Messages the round structure makes unavoidable but the happy path never
//! shows — a token reaching a coordinator that already saw the round's load
//! vector, a load vector overtaking a re-poll, a timer firing while busy —
//! are absorbed here; anything else is a contract violation and errors out.

use super::{
    token_merge, ActorId, ClusterId, Event, Message, NodeId, Outgoing, ProtocolError,
    TokenDisposition, TokenMsg, TransferDest,
};
use crate::load::{Load, Thresholds};
use crate::planner::{
    global_balance_plan, local_balance_plan, receiver_assignment, sender_assignment,
};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinatorPhase {
    Idle,
    /// Collecting `NodeState` replies from members.
    WaitPoll,
    /// Token sent or forwarded; awaiting the load vector (or our own token).
    WaitGlobal,
    /// Sender: commanded a donor, awaiting its payload.
    WaitDonorLoad,
    /// Sender: relayed the payload, awaiting the destination's acknowledgment.
    WaitCrossAck,
    /// Receiver: awaiting the next cross-cluster payload.
    WaitCrossLoad,
    /// Receiver: payload fanned out to members, awaiting their acknowledgments.
    WaitMemberAck,
}

impl CoordinatorPhase {
    fn name(self) -> &'static str {
        match self {
            CoordinatorPhase::Idle => "IDLE",
            CoordinatorPhase::WaitPoll => "WAIT_POLL",
            CoordinatorPhase::WaitGlobal => "WAIT_GLOBAL",
            CoordinatorPhase::WaitDonorLoad => "WAIT_DONOR_LOAD",
            CoordinatorPhase::WaitCrossAck => "WAIT_CROSS_ACK",
            CoordinatorPhase::WaitCrossLoad => "WAIT_CROSS_LOAD",
            CoordinatorPhase::WaitMemberAck => "WAIT_MEMBER_ACK",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordinatorFsm {
    cluster: ClusterId,
    members: Vec<NodeId>,
    ring_next: ClusterId,
    thresholds: Thresholds,
    capacity: Load,
    /// `(cluster, capacity)` for every cluster, ascending; shared static
    /// knowledge every coordinator derives the global plan against.
    cluster_caps: Vec<(ClusterId, Load)>,

    phase: CoordinatorPhase,
    /// This coordinator has started its round (timer consumed or token seen).
    activated: bool,
    /// This coordinator has processed the round's load vector; any token
    /// still in flight afterwards is a dead letter.
    lv_processed: bool,

    /// Booked member loads: poll results with all planned transfers applied.
    ledger: BTreeMap<NodeId, Load>,
    ledger_ready: bool,
    pending_reports: BTreeSet<NodeId>,
    cluster_total: Load,

    /// Smallest-originator token recorded while not yet in the ring phase.
    recorded_token: Option<TokenMsg>,
    /// Smallest originator ever originated or forwarded by this coordinator.
    min_seen: Option<ClusterId>,
    /// Load vector that arrived while a (re-)poll was still collecting.
    stashed_lv: Option<Vec<(ClusterId, Load)>>,

    // sender side
    chunks: VecDeque<(NodeId, ClusterId, Load)>,
    current_chunk: Option<(NodeId, ClusterId, Load)>,

    // receiver side
    expected_incoming: Load,
    pending_cross: VecDeque<(ClusterId, Load)>,
    acks_outstanding: usize,
    cross_ack_to: Option<ClusterId>,
}

impl CoordinatorFsm {
    pub fn new(
        cluster: ClusterId,
        members: Vec<NodeId>,
        ring_next: ClusterId,
        thresholds: Thresholds,
        cluster_caps: Vec<(ClusterId, Load)>,
    ) -> Self {
        let capacity = thresholds
            .cluster_capacity(members.len())
            .cluster_medium_max;
        CoordinatorFsm {
            cluster,
            members,
            ring_next,
            thresholds,
            capacity,
            cluster_caps,
            phase: CoordinatorPhase::Idle,
            activated: false,
            lv_processed: false,
            ledger: BTreeMap::new(),
            ledger_ready: false,
            pending_reports: BTreeSet::new(),
            cluster_total: Load::ZERO,
            recorded_token: None,
            min_seen: None,
            stashed_lv: None,
            chunks: VecDeque::new(),
            current_chunk: None,
            expected_incoming: Load::ZERO,
            pending_cross: VecDeque::new(),
            acks_outstanding: 0,
            cross_ack_to: None,
        }
    }

    pub fn cluster(&self) -> ClusterId {
        self.cluster
    }

    pub fn phase(&self) -> CoordinatorPhase {
        self.phase
    }

    pub fn phase_name(&self) -> &'static str {
        self.phase.name()
    }

    pub fn is_idle(&self) -> bool {
        self.phase == CoordinatorPhase::Idle
    }

    /// Cluster total after local planning (meaningful once the first poll
    /// completed).
    pub fn cluster_total(&self) -> Load {
        self.cluster_total
    }

    /// The booked load of each member at round end.
    pub fn ledger(&self) -> &BTreeMap<NodeId, Load> {
        &self.ledger
    }

    fn unexpected(&self, from: ActorId, msg: &Message) -> ProtocolError {
        ProtocolError::UnexpectedEvent {
            actor: ActorId::Coord(self.cluster).to_string(),
            state: self.phase.name(),
            event: format!("{msg} from {from}"),
        }
    }

    fn violation(&self, detail: String) -> ProtocolError {
        ProtocolError::Violation {
            actor: ActorId::Coord(self.cluster).to_string(),
            detail,
        }
    }

    fn planner_err(&self, source: crate::planner::AssignmentError) -> ProtocolError {
        ProtocolError::Planner {
            actor: ActorId::Coord(self.cluster).to_string(),
            source,
        }
    }

    fn note_seen(&mut self, origin: ClusterId) {
        self.min_seen = Some(match self.min_seen {
            None => origin,
            Some(m) => m.min(origin),
        });
    }

    /// Keep only the smallest-originator token; larger ones die here.
    fn record_token(&mut self, token: TokenMsg) {
        match &self.recorded_token {
            Some(held) if held.origin <= token.origin => {}
            _ => self.recorded_token = Some(token),
        }
    }

    fn multicast_end(&mut self, out: &mut Vec<Outgoing>) {
        for &m in &self.members {
            out.push(Outgoing {
                to: ActorId::Node(m),
                msg: Message::End,
            });
        }
        self.phase = CoordinatorPhase::Idle;
    }

    fn begin_poll(&mut self, out: &mut Vec<Outgoing>) {
        self.pending_reports = self.members.iter().copied().collect();
        for &m in &self.members {
            out.push(Outgoing {
                to: ActorId::Node(m),
                msg: Message::Poll,
            });
        }
        self.phase = CoordinatorPhase::WaitPoll;
    }

    fn ledger_loads(&self) -> Vec<Load> {
        self.members.iter().map(|m| self.ledger[m]).collect()
    }

    /// All members reported: plan local transfers (first poll only), then
    /// decide between token work and ending the round.
    fn finish_poll(&mut self, out: &mut Vec<Outgoing>) -> Result<(), ProtocolError> {
        if !self.ledger_ready {
            let loads = self.ledger_loads();
            let plan = local_balance_plan(&loads, &self.thresholds);
            for tr in &plan.transfers {
                out.push(Outgoing {
                    to: ActorId::Node(self.members[tr.from]),
                    msg: Message::TransferCmd {
                        dest: TransferDest::Node(self.members[tr.to]),
                        amount: tr.amount,
                    },
                });
            }
            // book both parties at their end configuration up front
            for (m, l) in self.members.iter().zip(&plan.final_loads) {
                self.ledger.insert(*m, *l);
            }
            self.cluster_total = plan.final_loads.iter().copied().sum();
            self.ledger_ready = true;
        }

        if let Some(entries) = self.stashed_lv.take() {
            // the round's global phase already concluded elsewhere; any
            // recorded token is obsolete
            self.recorded_token = None;
            return self.process_load_vector(entries, out);
        }

        if let Some(token) = self.recorded_token.take() {
            match token_merge(self.cluster, self.cluster_total, None, token)? {
                TokenDisposition::Forward(token) => {
                    self.note_seen(token.origin);
                    out.push(Outgoing {
                        to: ActorId::Coord(self.ring_next),
                        msg: Message::Token(token),
                    });
                    self.phase = CoordinatorPhase::WaitGlobal;
                }
                TokenDisposition::Drop => unreachable!("merge without min_seen cannot drop"),
            }
        } else if self.cluster_total > self.capacity {
            let token = TokenMsg {
                origin: self.cluster,
                entries: vec![(self.cluster, self.cluster_total)],
            };
            self.note_seen(self.cluster);
            out.push(Outgoing {
                to: ActorId::Coord(self.ring_next),
                msg: Message::Token(token),
            });
            self.phase = CoordinatorPhase::WaitGlobal;
        } else {
            self.multicast_end(out);
        }
        Ok(())
    }

    fn issue_next_chunk(&mut self, out: &mut Vec<Outgoing>) {
        let (donor, dest, amount) = self.chunks.pop_front().expect("chunk queue non-empty");
        // book the donor at its post-transfer load
        *self.ledger.get_mut(&donor).expect("donor is a member") -= amount;
        self.current_chunk = Some((donor, dest, amount));
        out.push(Outgoing {
            to: ActorId::Node(donor),
            msg: Message::TransferCmd {
                dest: TransferDest::Cluster(dest),
                amount,
            },
        });
        self.phase = CoordinatorPhase::WaitDonorLoad;
    }

    fn process_load_vector(
        &mut self,
        entries: Vec<(ClusterId, Load)>,
        out: &mut Vec<Outgoing>,
    ) -> Result<(), ProtocolError> {
        self.lv_processed = true;
        self.recorded_token = None;

        let mut entries = entries;
        entries.sort_by_key(|(c, _)| *c);
        if entries.len() != self.cluster_caps.len()
            || entries
                .iter()
                .zip(&self.cluster_caps)
                .any(|((a, _), (b, _))| a != b)
        {
            return Err(self.violation(format!(
                "load vector covers {} clusters, expected {}",
                entries.len(),
                self.cluster_caps.len()
            )));
        }

        let totals: Vec<Load> = entries.iter().map(|(_, l)| *l).collect();
        let caps: Vec<Load> = self.cluster_caps.iter().map(|(_, c)| *c).collect();
        let plan = global_balance_plan(&totals, &caps);

        let self_idx = self
            .cluster_caps
            .iter()
            .position(|(c, _)| *c == self.cluster)
            .expect("own cluster in capacity table");

        let outgoing: Vec<(ClusterId, Load)> = plan
            .transfers
            .iter()
            .filter(|t| t.from == self_idx)
            .map(|t| (self.cluster_caps[t.to].0, t.amount))
            .collect();
        let incoming: Load = plan
            .transfers
            .iter()
            .filter(|t| t.to == self_idx)
            .map(|t| t.amount)
            .sum();

        if !outgoing.is_empty() && !incoming.is_zero() {
            return Err(self
                .violation("global plan makes this cluster both sender and receiver".to_string()));
        }

        if !outgoing.is_empty() {
            let loads = self.ledger_loads();
            let chunks = sender_assignment(&loads, &self.thresholds, &outgoing)
                .map_err(|e| self.planner_err(e))?;
            self.chunks = chunks
                .into_iter()
                .map(|(idx, dest, amount)| (self.members[idx], dest, amount))
                .collect();
            self.issue_next_chunk(out);
        } else if !incoming.is_zero() {
            self.expected_incoming = incoming;
            self.phase = CoordinatorPhase::WaitCrossLoad;
        } else {
            self.multicast_end(out);
        }
        Ok(())
    }

    fn handle_cross_load(
        &mut self,
        from: ClusterId,
        amount: Load,
        out: &mut Vec<Outgoing>,
    ) -> Result<(), ProtocolError> {
        if amount > self.expected_incoming {
            return Err(self.violation(format!(
                "received {amount} units from C{} but only {} still expected",
                from.0, self.expected_incoming
            )));
        }
        self.expected_incoming -= amount;

        let loads = self.ledger_loads();
        let fills = receiver_assignment(&loads, &self.thresholds, amount)
            .map_err(|e| self.planner_err(e))?;
        self.acks_outstanding = fills.len();
        self.cross_ack_to = Some(from);
        for (idx, amt) in fills {
            let member = self.members[idx];
            *self.ledger.get_mut(&member).expect("member") += amt;
            out.push(Outgoing {
                to: ActorId::Node(member),
                msg: Message::NodeLoad { amount: amt },
            });
        }
        self.phase = CoordinatorPhase::WaitMemberAck;
        Ok(())
    }

    /// Consumes one event, returning the messages to send.
    pub fn step(&mut self, event: Event) -> Result<Vec<Outgoing>, ProtocolError> {
        let mut out = Vec::new();
        let (from, msg) = match event {
            Event::Timeout => {
                // a timer firing mid-round (or after a token already started
                // the round) is the periodic re-activation; nothing to do
                if self.phase == CoordinatorPhase::Idle && !self.activated {
                    self.activated = true;
                    self.begin_poll(&mut out);
                }
                return Ok(out);
            }
            Event::Delivered { from, msg } => (from, msg),
        };

        match (self.phase, msg) {
            (CoordinatorPhase::Idle, Message::Token(token)) => {
                if !self.lv_processed {
                    self.record_token(token);
                    self.activated = true;
                    self.begin_poll(&mut out);
                }
                // else: the global phase is over; the token is a dead letter
            }

            (CoordinatorPhase::WaitPoll, Message::NodeState { load }) => {
                let reporter = match from {
                    ActorId::Node(n) => n,
                    ActorId::Coord(_) => {
                        return Err(self.unexpected(from, &Message::NodeState { load }))
                    }
                };
                if !self.pending_reports.remove(&reporter) {
                    return Err(self.violation(format!("unexpected report from n{}", reporter.0)));
                }
                if !self.ledger_ready {
                    self.ledger.insert(reporter, load);
                }
                if self.pending_reports.is_empty() {
                    self.finish_poll(&mut out)?;
                }
            }
            (CoordinatorPhase::WaitPoll, Message::Token(token)) => self.record_token(token),
            (CoordinatorPhase::WaitPoll, Message::LoadVector { entries }) => {
                self.stashed_lv = Some(entries)
            }

            (CoordinatorPhase::WaitGlobal, Message::Token(token)) => {
                if token.origin == self.cluster {
                    if token.entries.len() != self.cluster_caps.len() {
                        return Err(self.violation(format!(
                            "own token returned with {} entries, expected {}",
                            token.entries.len(),
                            self.cluster_caps.len()
                        )));
                    }
                    for (c, _) in &self.cluster_caps {
                        out.push(Outgoing {
                            to: ActorId::Coord(*c),
                            msg: Message::LoadVector {
                                entries: token.entries.clone(),
                            },
                        });
                    }
                } else {
                    match token_merge(self.cluster, self.cluster_total, self.min_seen, token)? {
                        TokenDisposition::Forward(token) => {
                            self.note_seen(token.origin);
                            out.push(Outgoing {
                                to: ActorId::Coord(self.ring_next),
                                msg: Message::Token(token),
                            });
                        }
                        TokenDisposition::Drop => {}
                    }
                }
            }
            (CoordinatorPhase::WaitGlobal, Message::LoadVector { entries }) => {
                self.process_load_vector(entries, &mut out)?
            }

            (CoordinatorPhase::WaitDonorLoad, Message::CoordLoad { amount, dest }) => {
                let (donor, exp_dest, exp_amount) = self.current_chunk.ok_or_else(|| {
                    self.violation("payload arrived with no chunk outstanding".to_string())
                })?;
                if from != ActorId::Node(donor) || dest != exp_dest || amount != exp_amount {
                    return Err(self.violation(format!(
                        "payload {amount}->C{} from {from} does not match commanded chunk \
                         {exp_amount}->C{} from n{}",
                        dest.0, exp_dest.0, donor.0
                    )));
                }
                out.push(Outgoing {
                    to: ActorId::Coord(dest),
                    msg: Message::CrossLoad {
                        amount,
                        from: self.cluster,
                    },
                });
                self.phase = CoordinatorPhase::WaitCrossAck;
            }

            (CoordinatorPhase::WaitCrossAck, Message::CrossAck) => {
                let (donor, _, _) = self.current_chunk.take().expect("chunk outstanding");
                out.push(Outgoing {
                    to: ActorId::Node(donor),
                    msg: Message::NodeAck,
                });
                if self.chunks.is_empty() {
                    self.multicast_end(&mut out);
                } else {
                    self.issue_next_chunk(&mut out);
                }
            }

            (
                CoordinatorPhase::WaitCrossLoad,
                Message::CrossLoad {
                    amount,
                    from: sender,
                },
            ) => self.handle_cross_load(sender, amount, &mut out)?,

            (CoordinatorPhase::WaitMemberAck, Message::NodeAck) => {
                self.acks_outstanding -= 1;
                if self.acks_outstanding == 0 {
                    let to = self.cross_ack_to.take().expect("cross sender recorded");
                    out.push(Outgoing {
                        to: ActorId::Coord(to),
                        msg: Message::CrossAck,
                    });
                    if let Some((sender, amount)) = self.pending_cross.pop_front() {
                        self.handle_cross_load(sender, amount, &mut out)?;
                    } else if self.expected_incoming.is_zero() {
                        self.multicast_end(&mut out);
                    } else {
                        self.phase = CoordinatorPhase::WaitCrossLoad;
                    }
                }
            }
            (
                CoordinatorPhase::WaitMemberAck,
                Message::CrossLoad {
                    amount,
                    from: sender,
                },
            ) => {
                self.pending_cross.push_back((sender, amount));
            }

            // tokens still in flight once the transfer phase started lost
            // the ring race; they are dead letters
            (
                CoordinatorPhase::WaitDonorLoad
                | CoordinatorPhase::WaitCrossAck
                | CoordinatorPhase::WaitCrossLoad
                | CoordinatorPhase::WaitMemberAck,
                Message::Token(_),
            ) => {}

            (_, msg) => return Err(self.unexpected(from, &msg)),
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coordinator() -> CoordinatorFsm {
        let t = Thresholds::new(5, 10).unwrap();
        CoordinatorFsm::new(
            ClusterId(0),
            vec![NodeId(0), NodeId(1), NodeId(2)],
            ClusterId(1),
            t,
            vec![(ClusterId(0), Load(30)), (ClusterId(1), Load(30))],
        )
    }

    fn report(n: u32, load: u64) -> Event {
        Event::Delivered {
            from: ActorId::Node(NodeId(n)),
            msg: Message::NodeState { load: Load(load) },
        }
    }

    #[test]
    fn timer_polls_every_member_once() {
        let mut c = coordinator();
        let out = c.step(Event::Timeout).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|o| matches!(o.msg, Message::Poll)));
        assert_eq!(c.phase(), CoordinatorPhase::WaitPoll);

        // a second timer firing mid-round does nothing
        assert!(c.step(Event::Timeout).unwrap().is_empty());
    }

    #[test]
    fn balanced_cluster_plans_locally_and_ends() {
        let mut c = coordinator();
        c.step(Event::Timeout).unwrap();
        assert!(c.step(report(0, 13)).unwrap().is_empty());
        assert!(c.step(report(1, 10)).unwrap().is_empty());
        let out = c.step(report(2, 4)).unwrap();
        // one command for the donor, then the release
        assert_eq!(
            out[0],
            Outgoing {
                to: ActorId::Node(NodeId(0)),
                msg: Message::TransferCmd {
                    dest: TransferDest::Node(NodeId(2)),
                    amount: Load(3),
                },
            }
        );
        assert_eq!(
            out[1..]
                .iter()
                .filter(|o| matches!(o.msg, Message::End))
                .count(),
            3
        );
        assert!(c.is_idle());
        assert_eq!(c.cluster_total(), Load(27));
    }

    #[test]
    fn overloaded_cluster_originates_a_token() {
        let mut c = coordinator();
        c.step(Event::Timeout).unwrap();
        c.step(report(0, 15)).unwrap();
        c.step(report(1, 10)).unwrap();
        let out = c.step(report(2, 10)).unwrap();
        assert_eq!(
            out,
            vec![Outgoing {
                to: ActorId::Coord(ClusterId(1)),
                msg: Message::Token(TokenMsg {
                    origin: ClusterId(0),
                    entries: vec![(ClusterId(0), Load(35))],
                }),
            }]
        );
        assert_eq!(c.phase(), CoordinatorPhase::WaitGlobal);
    }

    #[test]
    fn unexpected_event_names_state_and_message() {
        let mut c = coordinator();
        let err = c
            .step(Event::Delivered {
                from: ActorId::Coord(ClusterId(1)),
                msg: Message::CrossAck,
            })
            .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("IDLE") && text.contains("CrossAck"), "{text}");
    }

    #[test]
    fn report_from_a_stranger_is_a_violation() {
        let mut c = coordinator();
        c.step(Event::Timeout).unwrap();
        let err = c.step(report(9, 10)).unwrap_err();
        assert!(matches!(err, ProtocolError::Violation { .. }));
    }
}

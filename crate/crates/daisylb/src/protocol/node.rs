//! The node-side state machine.
//!
//! A node answers polls with its load, ships load out when commanded, absorbs
//! load shipped in, and acknowledges every payload it receives. Four states:
//!
//! * `Idle` — between rounds.
//! * `WaitTransfer` — reported HIGH; awaiting transfer commands or `End`.
//! * `WaitLoad` — reported below the upper threshold; awaiting payloads or `End`.
//! * `WaitAck` — shipped a payload; awaiting its acknowledgment.
//!
//! Two realities of an asynchronous round shape the edges of the machine:
//! a coordinator may release its cluster while a node-to-node payload is
//! still in flight, so an `Idle` node still absorbs and acknowledges a late
//! `NodeLoad`, and a donor holding an unacknowledged shipment defers an `End`
//! until the acknowledgment lands. Commands that arrive while a shipment is
//! outstanding queue up and run one at a time.

use super::{ActorId, ClusterId, Event, Message, NodeId, Outgoing, ProtocolError, TransferDest};
use crate::load::{Load, Thresholds};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodePhase {
    Idle,
    WaitTransfer,
    WaitLoad,
    WaitAck,
}

impl NodePhase {
    fn name(self) -> &'static str {
        match self {
            NodePhase::Idle => "IDLE",
            NodePhase::WaitTransfer => "WAIT_TRANSFER",
            NodePhase::WaitLoad => "WAIT_LOAD",
            NodePhase::WaitAck => "WAIT_ACK",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeFsm {
    id: NodeId,
    coordinator: ClusterId,
    thresholds: Thresholds,
    phase: NodePhase,
    load: Load,
    pending_cmds: VecDeque<(TransferDest, Load)>,
    end_pending: bool,
}

impl NodeFsm {
    pub fn new(id: NodeId, coordinator: ClusterId, load: Load, thresholds: Thresholds) -> Self {
        NodeFsm {
            id,
            coordinator,
            thresholds,
            phase: NodePhase::Idle,
            load,
            pending_cmds: VecDeque::new(),
            end_pending: false,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn load(&self) -> Load {
        self.load
    }

    pub fn phase(&self) -> NodePhase {
        self.phase
    }

    pub fn is_idle(&self) -> bool {
        self.phase == NodePhase::Idle && self.pending_cmds.is_empty() && !self.end_pending
    }

    fn unexpected(&self, event: &Event) -> ProtocolError {
        ProtocolError::UnexpectedEvent {
            actor: ActorId::Node(self.id).to_string(),
            state: self.phase.name(),
            event: match event {
                Event::Timeout => "Timeout".to_string(),
                Event::Delivered { from, msg } => format!("{msg} from {from}"),
            },
        }
    }

    fn reply_to_poll(&mut self, out: &mut Vec<Outgoing>) {
        out.push(Outgoing {
            to: ActorId::Coord(self.coordinator),
            msg: Message::NodeState { load: self.load },
        });
    }

    fn absorb(&mut self, from: ActorId, amount: Load, out: &mut Vec<Outgoing>) {
        self.load += amount;
        out.push(Outgoing {
            to: from,
            msg: Message::NodeAck,
        });
    }

    fn ship(
        &mut self,
        dest: TransferDest,
        amount: Load,
        out: &mut Vec<Outgoing>,
    ) -> Result<(), ProtocolError> {
        if amount > self.load {
            return Err(ProtocolError::Violation {
                actor: ActorId::Node(self.id).to_string(),
                detail: format!("commanded to ship {amount} but holds only {}", self.load),
            });
        }
        self.load -= amount;
        match dest {
            TransferDest::Node(n) => out.push(Outgoing {
                to: ActorId::Node(n),
                msg: Message::NodeLoad { amount },
            }),
            TransferDest::Cluster(c) => out.push(Outgoing {
                to: ActorId::Coord(self.coordinator),
                msg: Message::CoordLoad { amount, dest: c },
            }),
        }
        self.phase = NodePhase::WaitAck;
        Ok(())
    }

    /// Consumes one event, returning the messages to send.
    pub fn step(&mut self, event: Event) -> Result<Vec<Outgoing>, ProtocolError> {
        let mut out = Vec::new();
        let (from, msg) = match event {
            Event::Delivered { from, msg } => (from, msg),
            Event::Timeout => return Err(self.unexpected(&Event::Timeout)),
        };
        match (self.phase, msg) {
            (NodePhase::Idle, Message::Poll) => {
                self.reply_to_poll(&mut out);
                self.phase = if self.load > self.thresholds.medium_max {
                    NodePhase::WaitTransfer
                } else if self.load == self.thresholds.medium_max {
                    NodePhase::Idle
                } else {
                    NodePhase::WaitLoad
                };
            }
            // late local payload: the coordinator released us before a
            // node-to-node shipment landed
            (NodePhase::Idle, Message::NodeLoad { amount }) => self.absorb(from, amount, &mut out),
            // a re-awakened coordinator ends its cluster a second time
            (NodePhase::Idle, Message::End) => {}

            (NodePhase::WaitLoad, Message::NodeLoad { amount }) => {
                self.absorb(from, amount, &mut out)
            }
            (NodePhase::WaitLoad, Message::End) => self.phase = NodePhase::Idle,

            (NodePhase::WaitTransfer, Message::TransferCmd { dest, amount }) => {
                self.ship(dest, amount, &mut out)?
            }
            (NodePhase::WaitTransfer, Message::End) => self.phase = NodePhase::Idle,

            (NodePhase::WaitAck, Message::NodeAck) => {
                if let Some((dest, amount)) = self.pending_cmds.pop_front() {
                    self.ship(dest, amount, &mut out)?;
                } else if self.end_pending {
                    self.end_pending = false;
                    self.phase = NodePhase::Idle;
                } else {
                    self.phase = NodePhase::WaitTransfer;
                }
            }
            (NodePhase::WaitAck, Message::TransferCmd { dest, amount }) => {
                self.pending_cmds.push_back((dest, amount));
            }
            (NodePhase::WaitAck, Message::End) => self.end_pending = true,
            // polled while a shipment is outstanding (the coordinator was
            // re-awakened by a token); report the load as it stands
            (NodePhase::WaitAck, Message::Poll) => self.reply_to_poll(&mut out),

            (phase, msg) => {
                self.phase = phase;
                return Err(self.unexpected(&Event::Delivered { from, msg }));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Thresholds {
        Thresholds::new(5, 10).unwrap()
    }

    fn node(load: u64) -> NodeFsm {
        NodeFsm::new(NodeId(1), ClusterId(0), Load(load), t())
    }

    fn poll() -> Event {
        Event::Delivered {
            from: ActorId::Coord(ClusterId(0)),
            msg: Message::Poll,
        }
    }

    #[test]
    fn poll_routes_by_load_against_upper_threshold() {
        let mut high = node(15);
        let out = high.step(poll()).unwrap();
        assert_eq!(out[0].msg, Message::NodeState { load: Load(15) });
        assert_eq!(high.phase(), NodePhase::WaitTransfer);

        let mut at_max = node(10);
        let out = at_max.step(poll()).unwrap();
        assert_eq!(out[0].msg, Message::NodeState { load: Load(10) });
        assert_eq!(at_max.phase(), NodePhase::Idle);

        let mut below = node(7);
        below.step(poll()).unwrap();
        assert_eq!(below.phase(), NodePhase::WaitLoad);
    }

    #[test]
    fn absorbs_and_acks_in_wait_load() {
        let mut n = node(7);
        n.step(poll()).unwrap();
        let donor = ActorId::Node(NodeId(3));
        let out = n
            .step(Event::Delivered {
                from: donor,
                msg: Message::NodeLoad { amount: Load(3) },
            })
            .unwrap();
        assert_eq!(n.load(), Load(10));
        assert_eq!(
            out,
            vec![Outgoing {
                to: donor,
                msg: Message::NodeAck
            }]
        );
        assert_eq!(n.phase(), NodePhase::WaitLoad);
    }

    #[test]
    fn local_ship_and_ack_cycle() {
        let mut n = node(15);
        n.step(poll()).unwrap();
        let out = n
            .step(Event::Delivered {
                from: ActorId::Coord(ClusterId(0)),
                msg: Message::TransferCmd {
                    dest: TransferDest::Node(NodeId(2)),
                    amount: Load(3),
                },
            })
            .unwrap();
        assert_eq!(n.load(), Load(12));
        assert_eq!(
            out,
            vec![Outgoing {
                to: ActorId::Node(NodeId(2)),
                msg: Message::NodeLoad { amount: Load(3) },
            }]
        );
        assert_eq!(n.phase(), NodePhase::WaitAck);

        let out = n
            .step(Event::Delivered {
                from: ActorId::Node(NodeId(2)),
                msg: Message::NodeAck,
            })
            .unwrap();
        assert!(out.is_empty());
        assert_eq!(n.phase(), NodePhase::WaitTransfer);
    }

    #[test]
    fn remote_ship_goes_through_own_coordinator() {
        let mut n = node(13);
        n.step(poll()).unwrap();
        let out = n
            .step(Event::Delivered {
                from: ActorId::Coord(ClusterId(0)),
                msg: Message::TransferCmd {
                    dest: TransferDest::Cluster(ClusterId(3)),
                    amount: Load(3),
                },
            })
            .unwrap();
        assert_eq!(
            out,
            vec![Outgoing {
                to: ActorId::Coord(ClusterId(0)),
                msg: Message::CoordLoad {
                    amount: Load(3),
                    dest: ClusterId(3),
                },
            }]
        );
    }

    #[test]
    fn queued_commands_run_after_each_ack() {
        let mut n = node(15);
        n.step(poll()).unwrap();
        let cmd = |to: u32, amount: u64| Event::Delivered {
            from: ActorId::Coord(ClusterId(0)),
            msg: Message::TransferCmd {
                dest: TransferDest::Node(NodeId(to)),
                amount: Load(amount),
            },
        };
        n.step(cmd(2, 3)).unwrap();
        assert!(n.step(cmd(4, 2)).unwrap().is_empty()); // queued
        let out = n
            .step(Event::Delivered {
                from: ActorId::Node(NodeId(2)),
                msg: Message::NodeAck,
            })
            .unwrap();
        assert_eq!(
            out,
            vec![Outgoing {
                to: ActorId::Node(NodeId(4)),
                msg: Message::NodeLoad { amount: Load(2) },
            }]
        );
        assert_eq!(n.load(), Load(10));
    }

    #[test]
    fn end_defers_until_outstanding_ack_lands() {
        let mut n = node(15);
        n.step(poll()).unwrap();
        n.step(Event::Delivered {
            from: ActorId::Coord(ClusterId(0)),
            msg: Message::TransferCmd {
                dest: TransferDest::Node(NodeId(2)),
                amount: Load(5),
            },
        })
        .unwrap();
        n.step(Event::Delivered {
            from: ActorId::Coord(ClusterId(0)),
            msg: Message::End,
        })
        .unwrap();
        assert_eq!(n.phase(), NodePhase::WaitAck);
        n.step(Event::Delivered {
            from: ActorId::Node(NodeId(2)),
            msg: Message::NodeAck,
        })
        .unwrap();
        assert!(n.is_idle());
    }

    #[test]
    fn idle_node_absorbs_straggler_payload() {
        let mut n = node(7);
        let donor = ActorId::Node(NodeId(9));
        let out = n
            .step(Event::Delivered {
                from: donor,
                msg: Message::NodeLoad { amount: Load(2) },
            })
            .unwrap();
        assert_eq!(n.load(), Load(9));
        assert_eq!(out[0].to, donor);
        assert!(n.is_idle());
    }

    #[test]
    fn unexpected_event_is_an_error_not_a_silent_drop() {
        let mut n = node(7);
        let err = n.step(Event::Delivered {
            from: ActorId::Coord(ClusterId(0)),
            msg: Message::NodeAck,
        });
        assert!(matches!(err, Err(ProtocolError::UnexpectedEvent { .. })));
    }
}

//! The protocol itself: message vocabulary, actor identities and the two
//! finite-state machines (coordinator and node) as deterministic transition
//! functions `(state, event) -> outgoing messages`.
//!
//! Actors never touch a clock or a network; they only consume delivered
//! messages and produce messages to send. Delivery order and latency are the
//! simulation engine's business, which keeps every transition replayable.

mod coordinator;
mod node;

pub use coordinator::{CoordinatorFsm, CoordinatorPhase};
pub use node::{NodeFsm, NodePhase};

use crate::load::Load;
use serde::{Deserialize, Serialize};
use std::fmt;

/// A node process. Numbered globally, in cluster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

/// A cluster, identified by its position on the coordinator ring. Ring order
/// follows ascending coordinator node id, so comparing `ClusterId`s agrees
/// with comparing their coordinators' node ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterId(pub u32);

/// Address of a protocol actor: a node process or a cluster's coordinator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorId {
    Node(NodeId),
    Coord(ClusterId),
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorId::Node(n) => write!(f, "n{}", n.0),
            ActorId::Coord(c) => write!(f, "C{}", c.0),
        }
    }
}

/// Where a commanded transfer should land: a node in the same cluster, or a
/// remote cluster (reached through the donor's own coordinator).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferDest {
    Node(NodeId),
    Cluster(ClusterId),
}

/// The ring token. It starts with its originator's entry and accumulates one
/// `(cluster, total load)` entry per coordinator it passes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMsg {
    pub origin: ClusterId,
    pub entries: Vec<(ClusterId, Load)>,
}

/// Everything the actors say to each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Coordinator asks every member for its load.
    Poll,
    /// Member replies with its current load.
    NodeState { load: Load },
    /// Coordinator tells a donor to ship `amount` to `dest`.
    TransferCmd { dest: TransferDest, amount: Load },
    /// Load payload addressed to a node (local transfer, or final delivery
    /// of an inter-cluster transfer).
    NodeLoad { amount: Load },
    /// Donor hands an outgoing inter-cluster payload to its own coordinator.
    CoordLoad { amount: Load, dest: ClusterId },
    /// Coordinator relays a payload to the destination cluster's coordinator.
    CrossLoad { amount: Load, from: ClusterId },
    /// A node acknowledges a received payload (or a coordinator relays that
    /// acknowledgment back to its donor).
    NodeAck,
    /// Destination coordinator acknowledges a `CrossLoad` to the sender.
    CrossAck,
    /// The circulating ring token.
    Token(TokenMsg),
    /// The complete per-cluster load vector, broadcast by the token's
    /// originator once its token has completed the circuit.
    LoadVector { entries: Vec<(ClusterId, Load)> },
    /// Coordinator releases its members; the round is over for this cluster.
    End,
}

impl Message {
    pub fn variant_name(&self) -> &'static str {
        match self {
            Message::Poll => "Poll",
            Message::NodeState { .. } => "NodeState",
            Message::TransferCmd { .. } => "TransferCmd",
            Message::NodeLoad { .. } => "NodeLoad",
            Message::CoordLoad { .. } => "CoordLoad",
            Message::CrossLoad { .. } => "CrossLoad",
            Message::NodeAck => "NodeAck",
            Message::CrossAck => "CrossAck",
            Message::Token(_) => "Token",
            Message::LoadVector { .. } => "LoadVector",
            Message::End => "End",
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Poll => write!(f, "Poll"),
            Message::NodeState { load } => write!(f, "NodeState(load={load})"),
            Message::TransferCmd { dest, amount } => match dest {
                TransferDest::Node(n) => write!(f, "TransferCmd(dest=n{}, amount={amount})", n.0),
                TransferDest::Cluster(c) => {
                    write!(f, "TransferCmd(dest=C{}, amount={amount})", c.0)
                }
            },
            Message::NodeLoad { amount } => write!(f, "NodeLoad(amount={amount})"),
            Message::CoordLoad { amount, dest } => {
                write!(f, "CoordLoad(amount={amount}, dest=C{})", dest.0)
            }
            Message::CrossLoad { amount, from } => {
                write!(f, "CrossLoad(amount={amount}, from=C{})", from.0)
            }
            Message::NodeAck => write!(f, "NodeAck"),
            Message::CrossAck => write!(f, "CrossAck"),
            Message::Token(t) => {
                write!(f, "Token(origin=C{}, entries=[", t.origin.0)?;
                for (i, (c, l)) in t.entries.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "C{}:{}", c.0, l)?;
                }
                write!(f, "])")
            }
            Message::LoadVector { entries } => {
                write!(f, "LoadVector([")?;
                for (i, (c, l)) in entries.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "C{}:{}", c.0, l)?;
                }
                write!(f, "])")
            }
            Message::End => write!(f, "End"),
        }
    }
}

/// A message the actor wants delivered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: ActorId,
    pub msg: Message,
}

/// What an actor consumes: a delivered message, or (coordinators only) the
/// periodic activation timer.
#[derive(Debug, Clone)]
pub enum Event {
    Timeout,
    Delivered { from: ActorId, msg: Message },
}

/// A protocol contract was broken. These surface bugs loudly instead of
/// dropping messages on the floor.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ProtocolError {
    #[error("{actor} in state {state} cannot handle {event}")]
    UnexpectedEvent {
        actor: String,
        state: &'static str,
        event: String,
    },
    #[error("{actor}: {detail}")]
    Violation { actor: String, detail: String },
    #[error("planner inconsistency at {actor}: {source}")]
    Planner {
        actor: String,
        source: crate::planner::AssignmentError,
    },
}

/// Outcome of offering a foreign token to a coordinator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenDisposition {
    /// Forward this (possibly extended) token to the next coordinator.
    Forward(TokenMsg),
    /// A smaller-originator token already went through here; kill this one.
    Drop,
}

/// The token forward/drop rule.
///
/// A coordinator forwards an incoming token only if its originator is smaller
/// than every token this coordinator has already originated or forwarded
/// (`min_seen`); the coordinator's own `(cluster, total)` entry is appended on
/// the way through. A token carrying our entry already has been here before,
/// which the protocol never allows.
pub fn token_merge(
    own: ClusterId,
    own_total: Load,
    min_seen: Option<ClusterId>,
    incoming: TokenMsg,
) -> Result<TokenDisposition, ProtocolError> {
    if let Some(seen) = min_seen {
        if incoming.origin >= seen {
            return Ok(TokenDisposition::Drop);
        }
    }
    let mut token = incoming;
    if token.entries.iter().any(|(c, _)| *c == own) {
        return Err(ProtocolError::Violation {
            actor: ActorId::Coord(own).to_string(),
            detail: format!("token from C{} already carries our entry", token.origin.0),
        });
    }
    token.entries.push((own, own_total));
    Ok(TokenDisposition::Forward(token))
}

//! Deterministic discrete-event simulation of the protocol: topology and
//! latency model, the event loop, per-round message accounting and the
//! line-oriented trace export.

mod engine;
mod topology;

pub use engine::{
    run_round, RoundResult, SimError, TimerSchedule, TraceEvent, TransferLeg, TransferLog,
    DEFAULT_EVENT_CEILING,
};
pub use topology::{build_topology, ClusterSpec, LoadTimeModel, Topology, TopologyError};

use crate::protocol::{ActorId, Message};
use std::collections::BTreeMap;
use std::io::{self, Write};

/// Per-variant delivery counts plus the ring-traffic tallies the complexity
/// bounds are stated over.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageCounts {
    pub per_variant: BTreeMap<&'static str, u64>,
    /// Every `Token` transmission, originations and self-deliveries included.
    pub token_sends: u64,
    /// `Token` transmissions by coordinators other than the originator, i.e.
    /// ring relays of someone else's token.
    pub token_forwards: u64,
    /// Tokens that returned to their originator (completed the circuit).
    pub token_completions: u64,
    /// `LoadVector` messages delivered.
    pub load_vectors: u64,
    /// Messages spent acquiring global knowledge: ring relays plus the
    /// load-vector broadcast.
    pub global_knowledge_msgs: u64,
    pub total: u64,
}

/// Tallies a finished round's trace.
pub fn message_counts(trace: &[TraceEvent]) -> MessageCounts {
    let mut counts = MessageCounts::default();
    for ev in trace {
        *counts.per_variant.entry(ev.msg.variant_name()).or_insert(0) += 1;
        counts.total += 1;
        match &ev.msg {
            Message::Token(tok) => {
                counts.token_sends += 1;
                if ev.src != ActorId::Coord(tok.origin) {
                    counts.token_forwards += 1;
                }
                if ev.dst == ActorId::Coord(tok.origin) {
                    counts.token_completions += 1;
                }
            }
            Message::LoadVector { .. } => counts.load_vectors += 1,
            _ => {}
        }
    }
    counts.global_knowledge_msgs = counts.token_forwards + counts.load_vectors;
    counts
}

/// Writes the round trace as line-delimited records:
/// `t=<time> <src> -> <dst> <message> [xfer=<id>]`.
pub fn write_trace(
    topology: &Topology,
    trace: &[TraceEvent],
    w: &mut impl Write,
) -> io::Result<()> {
    for ev in trace {
        write!(
            w,
            "t={:>6} {:>5} -> {:<5} {}",
            ev.deliver_at,
            topology.actor_name(ev.src),
            topology.actor_name(ev.dst),
            ev.msg
        )?;
        if let Some(id) = ev.transfer {
            write!(w, " xfer={id}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Renders the trace to a string (the golden-file format).
pub fn trace_to_string(topology: &Topology, trace: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_trace(topology, trace, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("trace lines are valid utf-8")
}

//! The 24-node, four-cluster walkthrough as a pinned fixture.
//!
//! Clusters of six with coordinators at nodes 0, 6, 12 and 18. After local
//! balancing, clusters 0 and 12 are overloaded and both launch tokens;
//! cluster 12's token dies at coordinator 0 while coordinator 0's completes
//! the circuit and triggers the load-vector broadcast. Cluster 0 then ships
//! one chunk to cluster 18, and cluster 12 ships its excess as three chunks
//! of 3, 3 and 2 — all landing on cluster 18's spare room. The delivered
//! message trace is frozen byte for byte.

use daisylb::load::{Load, Thresholds};
use daisylb::metrics::summarize;
use daisylb::protocol::{ClusterId, Message, TransferDest};
use daisylb::scenario::{run_scenario, ScenarioConfig};
use daisylb::sim::{message_counts, trace_to_string};
use std::path::Path;

fn fixture() -> ScenarioConfig {
    let text = include_str!("fixtures/golden_scenario.json");
    serde_json::from_str(text).expect("fixture parses")
}

#[test]
fn golden_round_matches_narrative() {
    let outcome = run_scenario(&fixture()).expect("golden round quiesces");
    let round = &outcome.round;

    assert_eq!(
        round.final_loads,
        [
            10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 7,
            10, 10,
        ]
        .iter()
        .map(|&x| Load(x))
        .collect::<Vec<Load>>()
    );

    // exactly one token circuit and one load-vector broadcast
    let counts = message_counts(&round.trace);
    assert_eq!(counts.token_completions, 1);
    assert_eq!(counts.load_vectors, 4);

    // coordinator 0's token makes the full circuit; coordinator 12's dies
    // after two hops (12 -> 18 -> 0, dropped on arrival)
    let sends_by_origin = |origin: u32| {
        round
            .trace
            .iter()
            .filter(|ev| matches!(&ev.msg, Message::Token(t) if t.origin == ClusterId(origin)))
            .count()
    };
    assert_eq!(sends_by_origin(0), 4);
    assert_eq!(sends_by_origin(2), 2);

    // inter-cluster shipments: one chunk of 2 from cluster 0, then 3+3+2
    // from cluster 12, all into cluster 18
    let remote: Vec<(u32, u32, u64)> = round
        .transfers
        .iter()
        .filter(|tr| tr.is_remote())
        .map(|tr| {
            let dest = match tr.dest {
                TransferDest::Cluster(c) => c.0,
                TransferDest::Node(_) => unreachable!(),
            };
            (tr.donor_cluster.0, dest, tr.amount.units())
        })
        .collect();
    assert_eq!(remote, vec![(0, 3, 2), (2, 3, 3), (2, 3, 3), (2, 3, 2)]);
    assert!(round.transfers.iter().all(|tr| tr.completed()));

    // the shipped aggregates equal what the planner derives standalone from
    // the post-local cluster totals
    let t = Thresholds::new(5, 10).unwrap();
    let totals: Vec<Load> = [62u64, 60, 68, 47].iter().map(|&x| Load(x)).collect();
    let caps = vec![t.cluster_capacity(6).cluster_medium_max; 4];
    let plan = daisylb::planner::global_balance_plan(&totals, &caps);
    for rec in &plan.transfers {
        let shipped: u64 = remote
            .iter()
            .filter(|(from, to, _)| *from as usize == rec.from && *to as usize == rec.to)
            .map(|(_, _, amount)| amount)
            .sum();
        assert_eq!(shipped, rec.amount.units(), "aggregate for {rec:?}");
    }

    // three local transfers in cluster 0 plus the four chunks
    let m = summarize(&round.initial_loads, &round.final_loads, &round.trace, &t);
    assert_eq!(m.transfers_completed, 7);
    assert_eq!(m.high_count_before, 5);
    assert_eq!(m.high_count_after, 0);

    // the handshake accounting is wait-free: even transfers that queued
    // behind others (a donor with two commands, payloads held at the
    // receiving coordinator) measure exactly their own legs
    let timings = daisylb::metrics::check_transfer_timing(&outcome.round, 1, 1, 1);
    assert_eq!(timings.len(), 7);
    for timing in &timings {
        let expected = if timing.remote { 6 } else { 5 };
        assert_eq!(
            timing.observed, expected,
            "transfer {} (remote: {})",
            timing.transfer_id, timing.remote
        );
        assert!(timing.pass);
    }
}

#[test]
fn golden_trace_is_frozen() {
    let outcome = run_scenario(&fixture()).expect("golden round quiesces");
    let rendered = trace_to_string(&outcome.topology, &outcome.round.trace);

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_trace.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &rendered).expect("write golden trace");
    }
    let frozen = std::fs::read_to_string(&path).expect("golden trace fixture exists");
    assert_eq!(
        rendered, frozen,
        "trace diverged from the frozen fixture (set UPDATE_GOLDEN=1 to re-bless)"
    );

    // and the run is bit-stable across repetitions
    let again = run_scenario(&fixture()).expect("golden round quiesces");
    assert_eq!(
        trace_to_string(&again.topology, &again.round.trace),
        rendered
    );
}

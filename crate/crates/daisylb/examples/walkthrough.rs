//! The four-cluster, 24-node round, narrated.
//!
//! Coordinators sit at nodes 0, 6, 12 and 18. Clusters 0 and 12 end up
//! overloaded after local balancing and both launch ring tokens; only the
//! smaller-id token survives the circuit. Its originator broadcasts the
//! load vector, cluster 0 ships one chunk and cluster 12 ships 3+3+2 into
//! cluster 18, and every coordinator releases its members.
//!
//! ```bash
//! cargo run -p daisylb --example walkthrough
//! ```

use daisylb::load::Thresholds;
use daisylb::metrics::summarize;
use daisylb::scenario::{run_scenario, ScenarioConfig};
use daisylb::sim::trace_to_string;

const CONFIG: &str = include_str!("../tests/fixtures/golden_scenario.json");

fn main() {
    let config: ScenarioConfig = serde_json::from_str(CONFIG).unwrap();
    let outcome = run_scenario(&config).expect("round quiesces");

    println!("initial loads per cluster:");
    print_clusters(&outcome.round.initial_loads, &config.cluster_sizes);

    println!("\ndelivered messages:");
    print!(
        "{}",
        trace_to_string(&outcome.topology, &outcome.round.trace)
    );

    println!("\nfinal loads per cluster:");
    print_clusters(&outcome.round.final_loads, &config.cluster_sizes);

    println!("\ncommanded transfers:");
    for tr in &outcome.round.transfers {
        let kind = if tr.is_remote() { "remote" } else { "local" };
        println!(
            "  #{:<2} {kind:<6} donor n{:<2} amount {} ({} legs)",
            tr.id,
            tr.donor.0,
            tr.amount,
            tr.legs.len()
        );
    }

    let t = Thresholds::new(5, 10).unwrap();
    let m = summarize(
        &outcome.round.initial_loads,
        &outcome.round.final_loads,
        &outcome.round.trace,
        &t,
    );
    println!(
        "\nhigh nodes {} -> {}, std dev {:.3} -> {:.3}, {} messages, t = {}",
        m.high_count_before,
        m.high_count_after,
        m.std_dev_before,
        m.std_dev_after,
        m.msgs_total,
        m.sim_time
    );
}

fn print_clusters(loads: &[daisylb::load::Load], sizes: &[usize]) {
    let mut at = 0;
    for (i, &s) in sizes.iter().enumerate() {
        let slice: Vec<u64> = loads[at..at + s].iter().map(|l| l.units()).collect();
        let total: u64 = slice.iter().sum();
        println!("  cluster {i}: {slice:?}  (total {total})");
        at += s;
    }
}

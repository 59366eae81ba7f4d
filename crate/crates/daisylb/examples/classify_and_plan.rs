//! Load classification and the greedy planners, standalone.
//!
//! ```bash
//! cargo run -p daisylb --example classify_and_plan
//! ```

use daisylb::load::{classify_cluster_load, classify_node_load, cluster_total, Load, Thresholds};
use daisylb::planner::{global_balance_plan, local_balance_plan};

fn main() {
    let t = Thresholds::new(5, 10).unwrap();

    println!("thresholds: low <= 5 < medium <= 10 < high");
    for load in [0u64, 5, 6, 10, 11, 15] {
        println!(
            "  load {load:>2} -> {:?}",
            classify_node_load(Load(load), &t)
        );
    }

    let loads: Vec<Load> = [15u64, 7, 10].iter().map(|&x| Load(x)).collect();
    println!("\nintra-cluster plan for {loads:?}:");
    let plan = local_balance_plan(&loads, &t);
    for tr in &plan.transfers {
        println!(
            "  move {} units: node {} -> node {}",
            tr.amount, tr.from, tr.to
        );
    }
    println!("  final loads: {:?}", plan.final_loads);
    println!(
        "  residual excess stays on the donor; total {} is conserved",
        cluster_total(&plan.final_loads)
    );

    let totals: Vec<Load> = [65u64, 60, 68, 50].iter().map(|&x| Load(x)).collect();
    let caps = vec![Load(60); 4];
    println!("\ninter-cluster plan for totals {totals:?} (capacity 60 each):");
    let cap = t.cluster_capacity(6);
    for (i, total) in totals.iter().enumerate() {
        println!(
            "  cluster {i}: total {total} -> {:?}",
            classify_cluster_load(*total, &cap)
        );
    }
    let plan = global_balance_plan(&totals, &caps);
    for tr in &plan.transfers {
        println!(
            "  ship {} units: cluster {} -> cluster {}",
            tr.amount, tr.from, tr.to
        );
    }
    println!("  final totals: {:?}", plan.final_loads);
}

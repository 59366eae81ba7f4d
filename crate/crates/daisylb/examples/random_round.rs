//! A seeded random scenario end to end: generate loads, run one round,
//! print the metrics as JSON.
//!
//! ```bash
//! cargo run -p daisylb --example random_round [seed]
//! ```

use daisylb::scenario::{
    run_scenario, ClassIntervals, GeneratorSpec, LoadSource, Profile, ScenarioConfig,
    ScheduleConfig, ThresholdConfig,
};
use daisylb::sim::LoadTimeModel;

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(7);

    let config = ScenarioConfig {
        cluster_sizes: vec![6; 8],
        thresholds: ThresholdConfig {
            low_max: 9,
            medium_max: 14,
        },
        diameter: 1,
        hop_time: 1,
        load_time: LoadTimeModel::Constant(1),
        loads: LoadSource::Generated(GeneratorSpec {
            profile: Profile::High,
            intervals: ClassIntervals::default(),
            seed,
            weights: None,
        }),
        timer_schedule: ScheduleConfig::Simultaneous,
        event_ceiling: 1_000_000,
    };

    let outcome = run_scenario(&config).expect("round quiesces");
    println!(
        "seed {seed}: {} actors, high {} -> {}, {} transfers, simulated time {}",
        outcome.metrics.n_actors,
        outcome.metrics.high_count_before,
        outcome.metrics.high_count_after,
        outcome.metrics.transfers_completed,
        outcome.metrics.sim_time
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome.metrics).unwrap()
    );
}

//! Single-transfer handshake timing against its closed-form bounds.
//!
//! A transfer's accounted handshake — load report, command, payload
//! delivery, acknowledgment — spans exactly 4dT+L when donor and recipient
//! share a cluster, and one ring hop more, (4d+1)T+L, when the recipient is
//! remote.
//!
//! ```bash
//! cargo run -p daisylb --example transfer_timing
//! ```

use daisylb::load::{Load, Thresholds};
use daisylb::metrics::check_transfer_timing;
use daisylb::sim::{build_topology, run_round, LoadTimeModel, TimerSchedule};

fn main() {
    let thresholds = Thresholds::new(5, 10).unwrap();
    println!(
        "{:>2} {:>2} {:>2}  {:>14} {:>14}",
        "d", "T", "L", "local (=4dT+L)", "remote (+1 hop)"
    );
    for d in [1u64, 2] {
        for t in [1u64, 3] {
            for l in [0u64, 7] {
                // donor n1 sheds 3 units into a clustermate
                let local = build_topology(&[3], d, t, LoadTimeModel::Constant(l)).unwrap();
                let round = run_round(
                    &local,
                    &thresholds,
                    &[Load(10), Load(13), Load(7)],
                    &TimerSchedule::Simultaneous,
                    100_000,
                )
                .unwrap();
                let local_timing = &check_transfer_timing(&round, d, t, l)[0];

                // donor n1 sheds 3 units into the neighbor cluster
                let remote = build_topology(&[2, 2], d, t, LoadTimeModel::Constant(l)).unwrap();
                let round = run_round(
                    &remote,
                    &thresholds,
                    &[Load(10), Load(13), Load(10), Load(7)],
                    &TimerSchedule::Simultaneous,
                    100_000,
                )
                .unwrap();
                let remote_timing = &check_transfer_timing(&round, d, t, l)[0];

                println!(
                    "{d:>2} {t:>2} {l:>2}  {:>6} in [{},{}] {:>6} in [{},{}]  {}",
                    local_timing.observed,
                    local_timing.lower,
                    local_timing.upper,
                    remote_timing.observed,
                    remote_timing.lower,
                    remote_timing.upper,
                    if local_timing.pass && remote_timing.pass {
                        "ok"
                    } else {
                        "VIOLATED"
                    }
                );
            }
        }
    }
}

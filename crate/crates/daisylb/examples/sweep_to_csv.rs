//! The experiment grid as CSV: per-seed rows plus per-configuration
//! averages, the data behind the high-count and standard-deviation plots.
//!
//! ```bash
//! cargo run --release -p daisylb --example sweep_to_csv > sweep.csv
//! ```

use daisylb::scenario::{run_sweep, SweepSpec};

fn main() {
    let spec = SweepSpec::default_grid();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = run_sweep(&spec, jobs);
    for (id, seed, err) in &out.failures {
        eprintln!("cell {id} seed {seed} failed: {err}");
    }
    print!("{}", out.to_csv());
    eprintln!(
        "{} rows, {} averages, {} failures",
        out.rows.len(),
        out.averages.len(),
        out.failures.len()
    );
}

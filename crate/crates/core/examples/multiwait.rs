//! One thread sweeps ten locks while fifteen others each take one lock at a
//! time, and the census reports how many threads ever waited on one word.
//!
//! ```text
//! cargo run --release --example multiwait
//! ```

use std::time::Duration;

use hemlock::bench::{self, BenchConfig, Mode};
use hemlock::locks::LockAlgorithm;

fn main() {
    for algo in [
        LockAlgorithm::HemlockCtr,
        LockAlgorithm::HemlockOverlap,
        LockAlgorithm::Mcs,
        LockAlgorithm::Clh,
        LockAlgorithm::Ticket,
    ] {
        let cfg = BenchConfig::new(Mode::Multiwait, algo, 16)
            .locks(10)
            .timed(Duration::from_millis(500))
            .runs(1);
        let report = bench::run(&cfg).unwrap();
        println!(
            "{:<16} leader sweeps {:>7}  max waiters per spin word {:>2} (bound {})  max held {}",
            algo.name(),
            report.runs[0].ops,
            report.max_waiters_per_cell(),
            cfg.waiter_bound(),
            report.max_locks_held()
        );
    }
}

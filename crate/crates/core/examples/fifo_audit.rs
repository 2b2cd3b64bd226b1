//! Random nested lock sets with doorstep logging, then a FIFO audit of
//! every acquisition.
//!
//! ```text
//! cargo run --release --example fifo_audit
//! ```

use hemlock::bench::{self, BenchConfig, Mode};
use hemlock::instrumentation::{fifo_audit, DoorstepRecord};
use hemlock::locks::LockAlgorithm;

fn main() {
    for algo in LockAlgorithm::ALL {
        let mut cfg = BenchConfig::new(Mode::Stress, algo, 6)
            .locks(4)
            .subset_max(3)
            .iterations(5_000)
            .runs(1);
        cfg.keep_doorsteps = true;
        let r = bench::run(&cfg).unwrap();
        let s = &r.runs[0];
        println!(
            "{:<16} {:>6} records, {} inversions, max waiters {}, max held {}, failures {:?}",
            algo.name(),
            s.doorsteps.len(),
            fifo_audit(&s.doorsteps).len(),
            s.max_waiters_per_cell,
            s.max_locks_held,
            s.failures
        );
    }

    // A hand-made log where the second arrival got in first.
    let log = [DoorstepRecord::point(0, 1, 4, 0), DoorstepRecord::point(0, 2, 3, 1)];
    println!("constructed inversion: {:?}", fifo_audit(&log));
}

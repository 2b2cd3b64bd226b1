//! Circulates one token around a ring of grant-cell mailboxes under each
//! wait policy.
//!
//! ```text
//! cargo run --release --example token_ring
//! ```

use std::time::Duration;

use hemlock::bench::{self, BenchConfig, Mode};
use hemlock::locks::{LockAlgorithm, WaitPolicy};

fn main() {
    let fixed = BenchConfig::new(Mode::Ring, LockAlgorithm::HemlockCtr, 4).iterations(10_000).runs(1);
    let r = bench::run(&fixed).unwrap();
    println!("handled per thread: {:?}, clean: {}", r.runs[0].per_thread_ops, r.integrity_ok());

    for policy in WaitPolicy::ALL {
        let cfg = BenchConfig::new(Mode::Ring, LockAlgorithm::HemlockCtr, 4)
            .policy(policy)
            .timed(Duration::from_millis(300))
            .runs(3);
        let r = bench::run(&cfg).unwrap();
        println!("{:<10} {:>12.0} circulations/s", policy.name(), r.median_ops_per_sec.unwrap_or(0.0));
    }
}

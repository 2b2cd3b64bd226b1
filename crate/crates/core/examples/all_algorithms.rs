//! Picks each of the nine algorithms at run time through `LockSet`.
//!
//! ```text
//! cargo run --example all_algorithms
//! ```

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Instant;

use hemlock::locks::{LockAlgorithm, LockSet, RawLock, Registry};

fn main() {
    let threads = 4;
    let per_thread = 20_000u64;
    for algo in LockAlgorithm::ALL {
        let registry = Registry::new();
        let locks = LockSet::new(algo, algo.default_policy(), 2);
        // Relaxed increments are fine: the lock orders them.
        let counter = AtomicU64::new(0);
        let start = Instant::now();
        thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| {
                    let ctx = registry.register().unwrap();
                    for i in 0..per_thread {
                        let l = &locks[(i % 2) as usize];
                        l.with(&ctx, || {
                            let v = counter.load(Ordering::Relaxed);
                            counter.store(v + 1, Ordering::Relaxed);
                        });
                    }
                });
            }
        });
        let total = counter.into_inner();
        println!(
            "{:<16} {:>8} acquisitions in {:>8.2?}, max {} waiting on one spin word",
            algo.name(),
            total,
            start.elapsed(),
            registry.census_snapshot().max_waiters_per_cell
        );
    }
}

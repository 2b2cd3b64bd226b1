//! Four threads sharing one Hemlock lock.
//!
//! ```text
//! cargo run --example basic_lock
//! ```

use std::cell::UnsafeCell;
use std::thread;

use hemlock::locks::{HemlockLock, RawLock, Registry};

struct Counter(UnsafeCell<u64>);

// SAFETY: only touched under LOCK.
unsafe impl Sync for Counter {}

static LOCK: HemlockLock = HemlockLock::new();
static COUNTER: Counter = Counter(UnsafeCell::new(0));

fn main() {
    let registry = Registry::new();
    let threads = 4;
    let per_thread = 50_000;

    thread::scope(|s| {
        for _ in 0..threads {
            let registry = &registry;
            s.spawn(move || {
                // Each thread registers once and gets its own grant cell.
                let ctx = registry.register().unwrap();
                for _ in 0..per_thread {
                    LOCK.with(&ctx, || unsafe { *COUNTER.0.get() += 1 });
                }
            });
        }
    });

    let total = unsafe { *COUNTER.0.get() };
    println!("counter = {total} (expected {})", threads * per_thread);
    assert_eq!(total, threads * per_thread);

    let census = registry.census_snapshot();
    println!(
        "max waiters on one grant cell: {}, max locks held: {}",
        census.max_waiters_per_cell, census.max_locks_held
    );
}

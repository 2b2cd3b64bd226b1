//! Short max-contention and moderate-contention runs for every algorithm,
//! printed as CSV.
//!
//! ```text
//! cargo run --release --example max_contention [threads]
//! ```

use std::io;
use std::time::Duration;

use hemlock::bench::{self, BenchConfig, Mode};
use hemlock::locks::LockAlgorithm;

fn main() -> io::Result<()> {
    let threads = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let out = io::stdout();
    let mut out = out.lock();
    bench::write_csv_header(&mut out)?;
    for mode in [Mode::MaxContention, Mode::Moderate] {
        for algo in LockAlgorithm::ALL {
            let cfg = BenchConfig::new(mode, algo, threads)
                .timed(Duration::from_millis(200))
                .runs(3);
            bench::write_csv(&mut out, &bench::run(&cfg).unwrap())?;
        }
    }
    Ok(())
}

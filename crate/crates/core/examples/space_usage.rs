//! Lock body and per-thread sizes, and the CLH dummy node.
//!
//! ```text
//! cargo run --example space_usage
//! ```

use hemlock::locks::{clh_node_stats, space_usage, ClhLock};

fn main() {
    for row in space_usage() {
        println!(
            "{:<8} lock {} word(s), per-thread {} word(s) ({} bytes padded), queue element {} word(s) ({} bytes padded)",
            row.family,
            row.lock_words,
            row.thread_words,
            row.thread_bytes_padded,
            row.element_words,
            row.element_bytes_padded
        );
    }

    let before = clh_node_stats();
    drop(ClhLock::new());
    let after = clh_node_stats();
    println!(
        "CLH create+destroy: {} node allocated, {} freed",
        after.allocated - before.allocated,
        after.freed - before.freed
    );
}

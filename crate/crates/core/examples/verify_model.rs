//! Exhaustive interleaving search over small configurations, a broken
//! encoding and a replayed counterexample.
//!
//! ```text
//! cargo run --release --example verify_model
//! ```

use hemlock::locks::{LockAlgorithm, WaitPolicy};
use hemlock::verifier::{encode, explore, verify, ModelConfig, Mutation};

fn main() {
    for algo in LockAlgorithm::ALL {
        let r = verify(&ModelConfig::leader_nested(algo, 3, 2)).unwrap();
        println!(
            "{:<16} nested 3x2: {:>6} states, {} violations, max waiters per cell {}",
            algo.name(),
            r.states_explored,
            r.violations.len(),
            r.max_waiters_per_cell
        );
    }

    // Admission orders do not depend on how waiters poll.
    let orders: Vec<_> = WaitPolicy::ALL
        .iter()
        .map(|&p| {
            let cfg = ModelConfig::uniform(LockAlgorithm::HemlockCtr, 3, 1, 1)
                .with_policy(p)
                .tracking_admissions();
            verify(&cfg).unwrap().admission_orders.unwrap()
        })
        .collect();
    println!("same admission orders under all policies: {}", orders.iter().all(|o| *o == orders[0]));

    let cfg = ModelConfig::uniform(LockAlgorithm::HemlockNaive, 2, 1, 2).with_mutation(Mutation::DropClearingStore);
    let machine = encode(&cfg).unwrap();
    let report = explore(&machine);
    for v in &report.violations {
        let replay = machine.replay(&v.trace).unwrap();
        println!("without the clearing store: {} after schedule {} (replayed: {:?})", v.property, v.trace, replay.violation);
    }
}

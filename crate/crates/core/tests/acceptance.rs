//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout.
//! Exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use hemlock::bench::{self, BenchConfig, Mode};
use hemlock::locks::{clh_node_stats, hardware_threads, space_usage, ClhLock, LockAlgorithm, WaitPolicy};
use hemlock::verifier::{verify, ModelConfig, Mutation, Property};

/// Wall-clock limit for one exhaustive verification.
const VERIFY_LIMIT: Duration = Duration::from_secs(120);
/// Operations per thread in the counter-integrity runs.
const INTEGRITY_K: u64 = 100_000;
/// Smallest number of audited acquisitions per algorithm.
const FIFO_MIN_ACQUISITIONS: u64 = 10_000;
const FIFO_THREADS: usize = 8;
const MULTIWAIT_THREADS: usize = 16;
const MULTIWAIT_LOCKS: usize = 10;
/// min(T - 1, N - 1) for T = 16, N = 10.
const MULTIWAIT_HEMLOCK_BOUND: usize = 9;
const RING_THREADS: usize = 4;
const RING_CIRCULATIONS: u64 = 100_000;
const PERF_THREADS: usize = 32;
const PERF_MIN_HW_THREADS: usize = 16;
const PERF_TICKET_RATIO: f64 = 1.2;

type Criterion = (&'static str, fn() -> Outcome);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("exhaustive verification", exhaustive_verification),
        ("mutation sensitivity", mutation_sensitivity),
        ("counter integrity", counter_integrity),
        ("fifo audit", fifo_audit),
        ("multi-waiting bounds", multiwait_bounds),
        ("space", space),
        ("policy equivalence", policy_equivalence),
        ("ring conservation", ring_conservation),
        ("directional performance", directional_performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {} {name}: {tag} ({secs:.1}s) {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn verdict(problems: Vec<String>, ok: String) -> Outcome {
    if problems.is_empty() {
        Outcome::Pass(ok)
    } else {
        Outcome::Fail(problems.join("; "))
    }
}

fn exhaustive_verification() -> Outcome {
    let checked = [
        Property::MutualExclusion,
        Property::Fifo,
        Property::Deadlock,
        Property::Lockout,
        Property::OneWaiter,
        Property::FereLocal,
    ];
    let mut problems = Vec::new();
    let mut states = 0;
    let mut slowest = Duration::ZERO;
    for algo in LockAlgorithm::ALL {
        let configs = [
            ("n=2 m=1 iters=2", ModelConfig::uniform(algo, 2, 1, 2)),
            ("n=3 m=1 iters=1", ModelConfig::uniform(algo, 3, 1, 1)),
            ("n=3 m=2 nested", ModelConfig::leader_nested(algo, 3, 2)),
        ];
        for (label, cfg) in configs {
            let start = Instant::now();
            let r = verify(&cfg).expect("valid configuration");
            let took = start.elapsed();
            slowest = slowest.max(took);
            states += r.states_explored;
            let bad: Vec<_> = r
                .violations
                .iter()
                .filter(|v| checked.contains(&v.property))
                .map(|v| format!("{} trace {}", v.property, v.trace))
                .collect();
            if !bad.is_empty() || r.exhausted || !r.violations.is_empty() {
                problems.push(format!("{algo} {label}: {bad:?} exhausted={}", r.exhausted));
            }
            if took > VERIFY_LIMIT {
                problems.push(format!("{algo} {label}: took {took:?}"));
            }
        }
    }
    verdict(
        problems,
        format!("27 configurations, {states} states, slowest {slowest:.2?}"),
    )
}

fn mutation_sensitivity() -> Outcome {
    let mut problems = Vec::new();
    let mut found = Vec::new();
    for algo in LockAlgorithm::HEMLOCK {
        for mutation in [Mutation::DropClearingStore, Mutation::DropUnlockCasGuard] {
            let r = verify(&ModelConfig::uniform(algo, 2, 1, 2).with_mutation(mutation)).unwrap();
            match r.violations.first() {
                Some(v) => found.push(v.property.to_string()),
                None => problems.push(format!("{algo} {mutation:?}: nothing reported")),
            }
        }
    }
    let kinds: BTreeSet<_> = found.into_iter().collect();
    verdict(problems, format!("12 mutants caught, kinds {kinds:?}"))
}

fn counter_integrity() -> Outcome {
    let mut counts: Vec<usize> = vec![1, 2, 4, 8, hardware_threads()];
    counts.sort_unstable();
    counts.dedup();
    let mut problems = Vec::new();
    for algo in LockAlgorithm::ALL {
        for &t in &counts {
            let cfg = BenchConfig::new(Mode::MaxContention, algo, t)
                .iterations(INTEGRITY_K)
                .runs(1);
            let r = bench::run(&cfg).unwrap();
            let ops = r.runs[0].ops;
            if !r.integrity_ok() || ops != t as u64 * INTEGRITY_K {
                problems.push(format!("{algo} T={t}: ops {ops}, {:?}", r.runs[0].failures));
            }
        }
    }
    verdict(problems, format!("T in {counts:?}, K={INTEGRITY_K}, all exact"))
}

fn fifo_audit() -> Outcome {
    let mut problems = Vec::new();
    let mut least = u64::MAX;
    for algo in LockAlgorithm::ALL {
        let mut duration = Duration::from_millis(250);
        // Lengthen the run until enough acquisitions were audited.
        loop {
            let cfg = BenchConfig::new(Mode::MaxContention, algo, FIFO_THREADS)
                .timed(duration)
                .runs(1)
                .audited();
            let r = bench::run(&cfg).unwrap();
            let s = &r.runs[0];
            if s.ops < FIFO_MIN_ACQUISITIONS && duration < Duration::from_secs(8) {
                duration *= 2;
                continue;
            }
            least = least.min(s.ops);
            if s.ops < FIFO_MIN_ACQUISITIONS {
                problems.push(format!("{algo}: only {} acquisitions", s.ops));
            }
            if s.fifo_inversions != 0 || !s.integrity_ok() {
                problems.push(format!("{algo}: {} inversions, {:?}", s.fifo_inversions, s.failures));
            }
            break;
        }
    }
    verdict(problems, format!("T={FIFO_THREADS}, at least {least} acquisitions each, zero inversions"))
}

fn multiwait_bounds() -> Outcome {
    let mut problems = Vec::new();
    let mut seen = Vec::new();
    let algos = LockAlgorithm::HEMLOCK
        .into_iter()
        .chain([LockAlgorithm::Mcs, LockAlgorithm::Clh]);
    for algo in algos {
        let cfg = BenchConfig::new(Mode::Multiwait, algo, MULTIWAIT_THREADS)
            .locks(MULTIWAIT_LOCKS)
            .timed(Duration::from_millis(750))
            .runs(1);
        let r = bench::run(&cfg).unwrap();
        let w = r.max_waiters_per_cell();
        let bound = if algo.is_hemlock() { MULTIWAIT_HEMLOCK_BOUND } else { 1 };
        seen.push(format!("{algo}={w}"));
        if w > bound {
            problems.push(format!("{algo} multiwait: {w} waiters > {bound}"));
        }
        if !r.integrity_ok() {
            problems.push(format!("{algo} multiwait: {:?}", r.runs[0].failures));
        }
    }
    for algo in LockAlgorithm::HEMLOCK {
        let cfg = BenchConfig::new(Mode::MaxContention, algo, 8)
            .timed(Duration::from_millis(200))
            .runs(1);
        let r = bench::run(&cfg).unwrap();
        if r.max_waiters_per_cell() > 1 {
            problems.push(format!("{algo} single lock: {} waiters", r.max_waiters_per_cell()));
        }
    }
    verdict(problems, format!("multiwait max waiters {}", seen.join(" ")))
}

fn space() -> Outcome {
    let [h, m, c, t] = space_usage();
    let mut problems = Vec::new();
    let mut expect = |what: &str, got: usize, want: usize| {
        if got != want {
            problems.push(format!("{what}: {got} words, expected {want}"));
        }
    };
    expect("hemlock lock", h.lock_words, 1);
    expect("hemlock per-thread", h.thread_words, 1);
    expect("mcs lock", m.lock_words, 2);
    expect("clh lock", c.lock_words, 2);
    expect("ticket lock", t.lock_words, 2);
    let before = clh_node_stats();
    drop(ClhLock::new());
    let after = clh_node_stats();
    let (alloc, freed) = (after.allocated - before.allocated, after.freed - before.freed);
    if (alloc, freed) != (1, 1) {
        problems.push(format!("clh create/destroy allocated {alloc}, freed {freed}"));
    }
    verdict(problems, "1/1/2/2/2 words, one CLH dummy allocated and reclaimed".to_owned())
}

fn policy_equivalence() -> Outcome {
    let mut problems = Vec::new();
    let mut orders_seen = 0;
    for algo in LockAlgorithm::HEMLOCK {
        for (label, base) in [
            ("n=3 m=1", ModelConfig::uniform(algo, 3, 1, 1)),
            ("n=3 m=2 nested", ModelConfig::leader_nested(algo, 3, 2)),
        ] {
            let orders: Vec<_> = WaitPolicy::ALL
                .iter()
                .map(|&p| {
                    let r = verify(&base.clone().with_policy(p).tracking_admissions()).unwrap();
                    (r.is_clean(), r.admission_orders.unwrap())
                })
                .collect();
            orders_seen += orders[0].1.len();
            if orders.iter().any(|o| !o.0 || o.1 != orders[0].1) {
                problems.push(format!("{algo} {label}: admission orders differ across policies"));
            }
        }
    }
    verdict(problems, format!("{orders_seen} distinct admission orders, identical under all 3 policies"))
}

fn ring_conservation() -> Outcome {
    let cfg = BenchConfig::new(Mode::Ring, LockAlgorithm::HemlockCtr, RING_THREADS)
        .iterations(RING_CIRCULATIONS)
        .runs(1);
    let r = bench::run(&cfg).unwrap();
    let s = &r.runs[0];
    let equal = s.per_thread_ops.iter().all(|&h| h == RING_CIRCULATIONS);
    if r.integrity_ok() && equal {
        Outcome::Pass(format!("{RING_THREADS} threads each handled {RING_CIRCULATIONS} tokens"))
    } else {
        Outcome::Fail(format!("handles {:?}, {:?}", s.per_thread_ops, s.failures))
    }
}

fn directional_performance() -> Outcome {
    let hw = hardware_threads();
    if !cfg!(target_arch = "x86_64") || hw < PERF_MIN_HW_THREADS {
        return Outcome::Skip(format!(
            "needs x86_64 with at least {PERF_MIN_HW_THREADS} hardware threads, found {hw} on {}",
            std::env::consts::ARCH
        ));
    }
    let median = |algo: LockAlgorithm| {
        let cfg = BenchConfig::new(Mode::MaxContention, algo, PERF_THREADS)
            .timed(BenchConfig::CI_DURATION)
            .runs(7);
        bench::run(&cfg).unwrap().median_ops_per_sec.unwrap_or(0.0)
    };
    let ctr = median(LockAlgorithm::HemlockCtr);
    let naive = median(LockAlgorithm::HemlockNaive);
    let ticket = median(LockAlgorithm::Ticket);
    let detail = format!("ctr {ctr:.0}/s, naive {naive:.0}/s, ticket {ticket:.0}/s");
    if ctr >= naive && ctr >= PERF_TICKET_RATIO * ticket {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

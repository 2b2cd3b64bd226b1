use proptest::prelude::*;

use hemlock::bench::{self, aggregate_median, BenchConfig, Mode};
use hemlock::instrumentation::{fifo_audit, DoorstepRecord};
use hemlock::locks::LockAlgorithm;
use hemlock::verifier::{verify, Action, ModelConfig, Trace};

fn algorithm() -> impl Strategy<Value = LockAlgorithm> {
    prop::sample::select(LockAlgorithm::ALL.to_vec())
}

/// One lock, or two locks nested in ascending order.
fn block(locks: usize) -> impl Strategy<Value = Vec<Action>> {
    (0..locks, 0..locks).prop_map(|(a, b)| {
        if a == b {
            vec![Action::Acquire(a), Action::Release(a)]
        } else {
            let (lo, hi) = (a.min(b), a.max(b));
            vec![Action::Acquire(lo), Action::Acquire(hi), Action::Release(hi), Action::Release(lo)]
        }
    })
}

fn model() -> impl Strategy<Value = ModelConfig> {
    (algorithm(), 1usize..=2, 2usize..=3).prop_flat_map(|(algo, locks, threads)| {
        let blocks = if threads == 2 { 1..=2usize } else { 1..=1 };
        prop::collection::vec(prop::collection::vec(block(locks), blocks), threads).prop_map(move |scripts| {
            ModelConfig::new(algo, locks, scripts.into_iter().map(|b| b.concat()).collect())
        })
    })
}

fn holds_one_at_a_time(cfg: &ModelConfig) -> bool {
    cfg.scripts.iter().all(|s| s.len() % 2 == 0 && s.chunks(2).all(|c| matches!(c, [Action::Acquire(a), Action::Release(b)] if a == b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_scripts_verify_clean(cfg in model()) {
        let r = verify(&cfg).unwrap();
        prop_assert!(r.is_clean(), "{}", r.to_json());
        prop_assert_eq!(&r, &verify(&cfg).unwrap());
        if matches!(cfg.algorithm, LockAlgorithm::Mcs | LockAlgorithm::Clh)
            || (cfg.algorithm.is_hemlock() && holds_one_at_a_time(&cfg))
        {
            prop_assert!(r.max_waiters_per_cell <= 1);
        }
    }
}

proptest! {
    #[test]
    fn median_is_middle_of_sorted(mut v in prop::collection::vec(-1e9f64..1e9, 0..20).prop_filter("odd", |v| v.len() % 2 == 1)) {
        let m = aggregate_median(&v).unwrap();
        v.sort_by(f64::total_cmp);
        prop_assert_eq!(m, v[v.len() / 2]);
        v.reverse();
        prop_assert_eq!(aggregate_median(&v).unwrap(), m);
    }

    #[test]
    fn trace_text_round_trips(steps in prop::collection::vec(0usize..4, 0..40)) {
        let t = Trace(steps);
        prop_assert_eq!(t.to_string().parse::<Trace>().unwrap(), t);
    }

    #[test]
    fn fifo_order_has_no_inversions(n in 1usize..60, locks in 1usize..4) {
        // Serial doorsteps admitted in doorstep order.
        let recs: Vec<_> = (0..n)
            .map(|i| DoorstepRecord::point(i % locks, 2 * i as u64, 1000 + i as u64, i % 5))
            .collect();
        prop_assert!(fifo_audit(&recs).is_empty());
    }

    #[test]
    fn fifo_audit_matches_pairwise_count(
        raw in prop::collection::vec((0usize..2, 0u64..50, 0u64..4, 0u64..1000), 0..40)
    ) {
        let recs: Vec<_> = raw
            .iter()
            .enumerate()
            .map(|(i, &(lock, start, len, entry))| DoorstepRecord {
                lock,
                doorstep_seq: start,
                doorstep_end: start + len,
                entry_seq: entry * 64 + i as u64,
                thread: i,
            })
            .collect();
        let mut expected = 0;
        for a in &recs {
            for b in &recs {
                if a.lock == b.lock && a.entry_seq < b.entry_seq && b.doorstep_end < a.doorstep_seq {
                    expected += 1;
                }
            }
        }
        prop_assert_eq!(fifo_audit(&recs).len(), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn moderate_runs_replay_the_shared_prng(algo in algorithm(), threads in 1usize..4, seed: u64, cs_steps in 0u32..7) {
        let mut cfg = BenchConfig::new(Mode::Moderate, algo, threads).iterations(300).runs(1).seed(seed);
        cfg.cs_steps = cs_steps;
        cfg.ncs_max = 50;
        let r = bench::run(&cfg).unwrap();
        prop_assert!(r.integrity_ok(), "{:?}", r.runs[0].failures);
        prop_assert_eq!(r.runs[0].ops, threads as u64 * 300);
    }

    #[test]
    fn stress_counters_and_census_hold(algo in algorithm(), threads in 1usize..5, locks in 2usize..5, subset in 1usize..3, seed: u64) {
        let cfg = BenchConfig::new(Mode::Stress, algo, threads)
            .locks(locks)
            .subset_max(subset.min(locks))
            .iterations(400)
            .runs(1)
            .seed(seed);
        let r = bench::run(&cfg).unwrap();
        prop_assert!(r.integrity_ok(), "{:?}", r.runs[0].failures);
        prop_assert!(r.max_waiters_per_cell() <= cfg.waiter_bound());
        prop_assert!(r.max_locks_held() <= cfg.subset_max);
    }
}

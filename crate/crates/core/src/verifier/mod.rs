//! Exhaustive interleaving verifier.
//!
//! A [`ModelConfig`] describes a handful of threads, each running a short
//! script of acquire/release actions against one of the lock algorithms.
//! [`encode`] compiles the algorithm into a step machine and [`explore`]
//! enumerates every interleaving of atomic steps, memoizing states, and
//! checks at every reachable state:
//!
//! * mutual exclusion: at most one thread in a lock's critical section;
//! * FIFO: critical-section entries follow entry-doorstep order;
//! * deadlock freedom: some thread can move while any is unfinished, and
//!   every reachable state can still run all scripts to completion;
//! * fere-local spinning: waiters on one grant cell never outnumber the
//!   locks its owner is associated with (one waiter per spin word for MCS
//!   and CLH);
//! * one waiter per (grant cell, lock) pair;
//! * the arrival swap never returns the caller's own identity;
//! * an EMPTY tail implies nobody is between entry and exit doorstep.
//!
//! The memory model is sequential consistency.

mod explore;
mod machine;
mod program;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::locks::{LockAlgorithm, WaitPolicy};

pub use explore::explore;
pub use machine::{Machine, ModelState, Replay, ReplayError};

pub const MAX_THREADS: usize = 4;
pub const MAX_LOCKS: usize = 3;
pub const MAX_ACTIONS: usize = 16;
pub const MAX_ITERATIONS: usize = 2;
pub const DEFAULT_MAX_STATES: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Action {
    Acquire(usize),
    Release(usize),
    /// Retries a single-attempt acquire until it succeeds.
    TryAcquire(usize),
}

impl Action {
    pub fn lock(self) -> usize {
        match self {
            Action::Acquire(k) | Action::Release(k) | Action::TryAcquire(k) => k,
        }
    }

    fn is_acquire(self) -> bool {
        !matches!(self, Action::Release(_))
    }
}

/// Deliberate breakage used to show the checks have teeth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// The successor never clears the predecessor's grant cell.
    DropClearingStore,
    /// Release stores EMPTY into the tail instead of CAS-ing it from self.
    DropUnlockCasGuard,
}

impl FromStr for Mutation {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop-clearing-store" => Ok(Mutation::DropClearingStore),
            "drop-unlock-cas-guard" => Ok(Mutation::DropUnlockCasGuard),
            _ => Err(ConfigError::UnknownMutation(s.to_owned())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub algorithm: LockAlgorithm,
    /// Only meaningful for Hemlock algorithms.
    pub policy: WaitPolicy,
    pub locks: usize,
    pub scripts: Vec<Vec<Action>>,
    pub mutation: Option<Mutation>,
    pub max_states: usize,
    /// Keep each lock's admission history in the state so the report can
    /// list every admission order reached at termination.
    pub track_admissions: bool,
}

impl ModelConfig {
    pub fn new(algorithm: LockAlgorithm, locks: usize, scripts: Vec<Vec<Action>>) -> Self {
        Self {
            algorithm,
            policy: algorithm.default_policy(),
            locks,
            scripts,
            mutation: None,
            max_states: DEFAULT_MAX_STATES,
            track_admissions: false,
        }
    }

    /// Every thread acquires and releases lock `t % locks`, `iterations` times.
    pub fn uniform(algorithm: LockAlgorithm, threads: usize, locks: usize, iterations: usize) -> Self {
        let scripts = (0..threads)
            .map(|t| {
                let k = t % locks.max(1);
                (0..iterations)
                    .flat_map(|_| [Action::Acquire(k), Action::Release(k)])
                    .collect()
            })
            .collect();
        Self::new(algorithm, locks, scripts)
    }

    /// Thread 0 acquires every lock in ascending order and releases them in
    /// descending order; thread `i > 0` acquires and releases lock
    /// `(i - 1) % locks`.
    pub fn leader_nested(algorithm: LockAlgorithm, threads: usize, locks: usize) -> Self {
        let mut scripts = Vec::with_capacity(threads);
        let mut leader: Vec<Action> = (0..locks).map(Action::Acquire).collect();
        leader.extend((0..locks).rev().map(Action::Release));
        scripts.push(leader);
        for i in 1..threads {
            let k = (i - 1) % locks.max(1);
            scripts.push(vec![Action::Acquire(k), Action::Release(k)]);
        }
        Self::new(algorithm, locks, scripts)
    }

    pub fn with_policy(mut self, policy: WaitPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_mutation(mut self, mutation: Mutation) -> Self {
        self.mutation = Some(mutation);
        self
    }

    pub fn with_max_states(mut self, max_states: usize) -> Self {
        self.max_states = max_states;
        self
    }

    pub fn tracking_admissions(mut self) -> Self {
        self.track_admissions = true;
        self
    }

    pub fn threads(&self) -> usize {
        self.scripts.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.threads();
        if !(1..=MAX_THREADS).contains(&n) {
            return Err(ConfigError::Threads(n));
        }
        if !(1..=MAX_LOCKS).contains(&self.locks) {
            return Err(ConfigError::Locks(self.locks));
        }
        let total: usize = self.scripts.iter().map(Vec::len).sum();
        if total > MAX_ACTIONS {
            return Err(ConfigError::TooManyActions(total));
        }
        if self.mutation.is_some() && !self.algorithm.is_hemlock() {
            return Err(ConfigError::Unsupported {
                algorithm: self.algorithm,
                what: "mutations",
            });
        }
        for (t, script) in self.scripts.iter().enumerate() {
            let mut held = vec![false; self.locks];
            let mut acquired = vec![0usize; self.locks];
            for &a in script {
                let k = a.lock();
                if k >= self.locks {
                    return Err(ConfigError::Script {
                        thread: t,
                        reason: format!("lock {k} out of range"),
                    });
                }
                if matches!(a, Action::TryAcquire(_)) && self.algorithm == LockAlgorithm::Clh {
                    return Err(ConfigError::Unsupported {
                        algorithm: self.algorithm,
                        what: "try-acquire",
                    });
                }
                if a.is_acquire() {
                    if held[k] {
                        return Err(ConfigError::Script {
                            thread: t,
                            reason: format!("recursive acquire of lock {k}"),
                        });
                    }
                    held[k] = true;
                    acquired[k] += 1;
                    if acquired[k] > MAX_ITERATIONS {
                        return Err(ConfigError::Script {
                            thread: t,
                            reason: format!("more than {MAX_ITERATIONS} iterations on lock {k}"),
                        });
                    }
                } else {
                    if !held[k] {
                        return Err(ConfigError::Script {
                            thread: t,
                            reason: format!("release of lock {k} not held"),
                        });
                    }
                    held[k] = false;
                }
            }
            if let Some(k) = held.iter().position(|&h| h) {
                return Err(ConfigError::Script {
                    thread: t,
                    reason: format!("lock {k} still held at end of script"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("thread count {0} outside 1..={MAX_THREADS}")]
    Threads(usize),
    #[error("lock count {0} outside 1..={MAX_LOCKS}")]
    Locks(usize),
    #[error("{0} actions in total; at most {MAX_ACTIONS} allowed")]
    TooManyActions(usize),
    #[error("script of thread {thread}: {reason}")]
    Script { thread: usize, reason: String },
    #[error("{what} not supported for {algorithm}")]
    Unsupported {
        algorithm: LockAlgorithm,
        what: &'static str,
    },
    #[error("unknown mutation `{0}`")]
    UnknownMutation(String),
}

/// Checked properties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    MutualExclusion,
    Fifo,
    Deadlock,
    Lockout,
    FereLocal,
    OneWaiter,
    SwapReturnedSelf,
    TailNull,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Property::MutualExclusion => "mutual-exclusion",
            Property::Fifo => "fifo",
            Property::Deadlock => "deadlock",
            Property::Lockout => "lockout",
            Property::FereLocal => "fere-local",
            Property::OneWaiter => "one-waiter",
            Property::SwapReturnedSelf => "swap-returned-self",
            Property::TailNull => "tail-null",
        };
        f.write_str(s)
    }
}

/// A schedule: the thread index taking each successive step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Trace(pub Vec<usize>);

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for Trace {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Trace::default());
        }
        s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>().map(Trace)
    }
}

impl Serialize for Trace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: Property,
    /// Replays from the initial state to the first violating state found.
    pub trace: Trace,
    /// Number of times the property was found violated.
    pub occurrences: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExplorationReport {
    pub algorithm: LockAlgorithm,
    pub policy: WaitPolicy,
    pub threads: usize,
    pub locks: usize,
    pub mutation: Option<Mutation>,
    pub states_explored: usize,
    pub transitions: usize,
    pub terminal_states: usize,
    pub deadlocked_states: usize,
    pub max_waiters_per_cell: usize,
    pub violations: Vec<Violation>,
    /// The state budget ran out before the search finished.
    pub exhausted: bool,
    /// With admission tracking: every distinct per-lock admission order
    /// (thread indices) seen at termination, sorted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admission_orders: Option<Vec<Vec<Vec<usize>>>>,
}

impl ExplorationReport {
    /// No violation found and the search completed.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && !self.exhausted
    }

    pub fn violated(&self, property: Property) -> bool {
        self.violations.iter().any(|v| v.property == property)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Compiles `config` into a step machine.
pub fn encode(config: &ModelConfig) -> Result<Machine, ConfigError> {
    config.validate()?;
    Ok(Machine::new(config.clone()))
}

/// [`encode`] followed by [`explore`].
pub fn verify(config: &ModelConfig) -> Result<ExplorationReport, ConfigError> {
    Ok(explore(&encode(config)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trips() {
        let t: Trace = "0,1, 1,0".parse().unwrap();
        assert_eq!(t.0, vec![0, 1, 1, 0]);
        assert_eq!(t.to_string(), "0,1,1,0");
        assert_eq!("".parse::<Trace>().unwrap(), Trace::default());
        assert!("0,x".parse::<Trace>().is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let a = LockAlgorithm::HemlockCtr;
        assert_eq!(ModelConfig::uniform(a, 5, 1, 1).validate(), Err(ConfigError::Threads(5)));
        assert_eq!(ModelConfig::uniform(a, 2, 4, 1).validate(), Err(ConfigError::Locks(4)));
        assert_eq!(
            ModelConfig::uniform(a, 4, 1, 3).validate(),
            Err(ConfigError::TooManyActions(24))
        );
        let unbalanced = ModelConfig::new(a, 1, vec![vec![Action::Acquire(0)]]);
        assert!(matches!(unbalanced.validate(), Err(ConfigError::Script { .. })));
        let recursive = ModelConfig::new(
            a,
            1,
            vec![vec![Action::Acquire(0), Action::Acquire(0), Action::Release(0)]],
        );
        assert!(matches!(recursive.validate(), Err(ConfigError::Script { .. })));
        let clh_try = ModelConfig::new(
            LockAlgorithm::Clh,
            1,
            vec![vec![Action::TryAcquire(0), Action::Release(0)]],
        );
        assert!(matches!(clh_try.validate(), Err(ConfigError::Unsupported { .. })));
        let mcs_mut = ModelConfig::uniform(LockAlgorithm::Mcs, 2, 1, 1).with_mutation(Mutation::DropClearingStore);
        assert!(matches!(mcs_mut.validate(), Err(ConfigError::Unsupported { .. })));
        assert!(ModelConfig::leader_nested(a, 3, 2).validate().is_ok());
    }

    fn clean(report: &ExplorationReport) {
        assert!(report.is_clean(), "{}", report.to_json());
    }

    #[test]
    fn single_thread_is_a_linear_path() {
        for algo in LockAlgorithm::ALL {
            let r = verify(&ModelConfig::uniform(algo, 1, 1, 1)).unwrap();
            clean(&r);
            assert!((5..=9).contains(&r.states_explored), "{algo}: {}", r.states_explored);
            assert_eq!(r.transitions, r.states_explored - 1);
            assert_eq!(r.terminal_states, 1);
            if algo.is_hemlock() || algo == LockAlgorithm::Mcs {
                assert_eq!(r.max_waiters_per_cell, 0);
            }
        }
    }

    #[test]
    fn two_thread_naive_state_count_is_stable() {
        let r = verify(&ModelConfig::uniform(LockAlgorithm::HemlockNaive, 2, 1, 1)).unwrap();
        clean(&r);
        assert_eq!((r.states_explored, r.transitions, r.terminal_states), (55, 76, 3));
    }

    #[test]
    fn every_hemlock_variant_is_clean_for_two_threads() {
        for algo in LockAlgorithm::HEMLOCK {
            for policy in WaitPolicy::ALL {
                let r = verify(&ModelConfig::uniform(algo, 2, 1, 2).with_policy(policy)).unwrap();
                clean(&r);
                assert_eq!(r.max_waiters_per_cell, 1);
            }
        }
    }

    #[test]
    fn nested_leader_gets_two_waiters_never_three() {
        for algo in LockAlgorithm::HEMLOCK {
            let r = verify(&ModelConfig::leader_nested(algo, 3, 2)).unwrap();
            clean(&r);
            assert_eq!(r.max_waiters_per_cell, 2, "{algo}");
        }
    }

    #[test]
    fn queue_locks_spin_locally_everywhere() {
        for algo in [LockAlgorithm::Mcs, LockAlgorithm::Clh] {
            for cfg in [ModelConfig::uniform(algo, 3, 1, 1), ModelConfig::leader_nested(algo, 3, 2)] {
                let r = verify(&cfg).unwrap();
                clean(&r);
                assert!(r.max_waiters_per_cell <= 1);
            }
        }
    }

    #[test]
    fn mutations_are_caught_and_traces_replay() {
        for algo in LockAlgorithm::HEMLOCK {
            for mutation in [Mutation::DropClearingStore, Mutation::DropUnlockCasGuard] {
                let cfg = ModelConfig::uniform(algo, 2, 1, 2).with_mutation(mutation);
                let machine = encode(&cfg).unwrap();
                let r = explore(&machine);
                assert!(!r.violations.is_empty(), "{algo} {mutation:?}");
                for v in &r.violations {
                    let replay = machine.replay(&v.trace).unwrap();
                    assert_eq!(replay.violation, Some(v.property));
                    assert_eq!(replay.steps, v.trace.0.len());
                }
            }
        }
    }

    #[test]
    fn exploration_is_deterministic() {
        let cfg = ModelConfig::leader_nested(LockAlgorithm::HemlockOho1, 3, 2);
        assert_eq!(verify(&cfg).unwrap(), verify(&cfg).unwrap());
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let r = verify(&ModelConfig::uniform(LockAlgorithm::Mcs, 3, 1, 1).with_max_states(50)).unwrap();
        assert!(r.exhausted);
        assert!(!r.is_clean());
    }

    #[test]
    fn policies_admit_in_the_same_orders() {
        for algo in LockAlgorithm::HEMLOCK {
            let orders: Vec<_> = WaitPolicy::ALL
                .iter()
                .map(|&p| {
                    verify(&ModelConfig::uniform(algo, 3, 1, 1).with_policy(p).tracking_admissions())
                        .unwrap()
                        .admission_orders
                        .unwrap()
                })
                .collect();
            // Three threads on one lock can be admitted in any of 3! orders.
            assert_eq!(orders[0].len(), 6);
            assert!(orders.iter().all(|o| *o == orders[0]));
        }
    }

    #[test]
    fn admission_tracking_only_observes() {
        let plain = ModelConfig::uniform(LockAlgorithm::HemlockCtr, 2, 1, 1);
        let tracked = plain.clone().tracking_admissions();
        let trace: Trace = "1,1,0,1,1,1,0,0,1,0,0".parse().unwrap();
        let a = encode(&plain).unwrap().replay(&trace).unwrap();
        let mb = encode(&tracked).unwrap();
        let b = mb.replay(&trace).unwrap();
        assert_eq!(a.violation, None);
        assert_eq!(b.violation, None);
        assert_eq!(a.state.as_bytes(), &b.state.as_bytes()[..a.state.as_bytes().len()]);
        assert!(mb.is_terminal(&b.state));
        assert_eq!(mb.admissions(&b.state), vec![vec![1, 0]]);
    }

    #[test]
    fn try_acquire_scripts_are_clean() {
        for algo in LockAlgorithm::ALL.into_iter().filter(|&a| a != LockAlgorithm::Clh) {
            let cfg = ModelConfig::new(
                algo,
                1,
                vec![
                    vec![Action::TryAcquire(0), Action::Release(0)],
                    vec![Action::Acquire(0), Action::Release(0)],
                ],
            );
            clean(&verify(&cfg).unwrap());
        }
    }

    #[test]
    fn replay_rejects_impossible_steps() {
        let m = encode(&ModelConfig::uniform(LockAlgorithm::HemlockCtr, 2, 1, 1)).unwrap();
        assert_eq!(
            m.replay(&Trace(vec![2])).unwrap_err(),
            ReplayError::NoSuchThread { step: 0, thread: 2 }
        );
        // Thread 1 swaps in behind thread 0 and must wait.
        assert_eq!(
            m.replay(&Trace(vec![0, 1, 1, 1])).unwrap_err(),
            ReplayError::Disabled { step: 3, thread: 1 }
        );
    }
}

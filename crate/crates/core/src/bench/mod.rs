//! Benchmark harness.
//!
//! Five workloads, each run `runs` times on fresh locks and a fresh
//! [`Registry`](crate::locks::Registry):
//!
//! * `max-contention`: one lock, empty critical and non-critical sections;
//! * `moderate`: one lock, a shared PRNG stepped inside the critical
//!   section and a random amount of private work outside it;
//! * `multiwait`: thread 0 sweeps all locks in ascending order, the other
//!   threads each take one random lock at a time;
//! * `ring`: a token passed around a ring of mailboxes;
//! * `stress`: random ascending subsets of locks with full auditing.
//!
//! A run is either timed or does a fixed number of operations per thread.
//! Every run checks the integrity of what it protected.

mod csv;
mod harness;
mod workloads;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::instrumentation::DoorstepRecord;
use crate::locks::{LockAlgorithm, WaitPolicy};

pub use csv::{write_csv, write_csv_header, CSV_COLUMNS, CSV_VERSION};
pub use harness::pin_to_cpu;
pub use workloads::ring_token;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MaxContention,
    Moderate,
    Multiwait,
    Ring,
    Stress,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::MaxContention, Mode::Moderate, Mode::Multiwait, Mode::Ring, Mode::Stress];

    pub fn name(self) -> &'static str {
        match self {
            Mode::MaxContention => "max-contention",
            Mode::Moderate => "moderate",
            Mode::Multiwait => "multiwait",
            Mode::Ring => "ring",
            Mode::Stress => "stress",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::UnknownMode(s.to_owned()))
    }
}

/// How long each run lasts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Length {
    /// Until the deadline; every thread completes at least one operation.
    Timed(Duration),
    /// This many operations per thread. In `multiwait` only the leader
    /// counts; the others run until it is done.
    Iterations(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchConfig {
    pub mode: Mode,
    pub algorithm: LockAlgorithm,
    pub policy: WaitPolicy,
    pub threads: usize,
    pub length: Length,
    pub runs: usize,
    pub cs_steps: u32,
    pub ncs_max: u32,
    pub num_locks: usize,
    /// Largest lock subset taken at once in `stress`.
    pub subset_max: usize,
    pub seed: u64,
    pub pin: bool,
    /// Record doorstep and entry samples and audit them for FIFO order.
    /// Always on in `stress`.
    pub audit_fifo: bool,
    /// Keep the raw doorstep records in each [`RunSample`].
    pub keep_doorsteps: bool,
}

impl BenchConfig {
    pub const DEFAULT_DURATION: Duration = Duration::from_secs(10);
    pub const CI_DURATION: Duration = Duration::from_secs(2);

    pub fn new(mode: Mode, algorithm: LockAlgorithm, threads: usize) -> Self {
        Self {
            mode,
            algorithm,
            policy: algorithm.default_policy(),
            threads,
            length: Length::Timed(Self::DEFAULT_DURATION),
            runs: 7,
            cs_steps: 5,
            ncs_max: 400,
            num_locks: if matches!(mode, Mode::Multiwait | Mode::Stress) { 10 } else { 1 },
            subset_max: 2,
            seed: 0x5eed,
            pin: false,
            audit_fifo: mode == Mode::Stress,
            keep_doorsteps: false,
        }
    }

    pub fn timed(mut self, duration: Duration) -> Self {
        self.length = Length::Timed(duration);
        self
    }

    pub fn iterations(mut self, per_thread: u64) -> Self {
        self.length = Length::Iterations(per_thread);
        self
    }

    pub fn runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn policy(mut self, policy: WaitPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn locks(mut self, num_locks: usize) -> Self {
        self.num_locks = num_locks;
        self
    }

    pub fn subset_max(mut self, subset_max: usize) -> Self {
        self.subset_max = subset_max;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn audited(mut self) -> Self {
        self.audit_fifo = true;
        self
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.runs == 0 || self.runs.is_multiple_of(2) {
            return Err(BenchError::EvenRuns(self.runs));
        }
        let min_threads = match self.mode {
            Mode::Multiwait | Mode::Ring => 2,
            _ => 1,
        };
        if self.threads < min_threads {
            return Err(BenchError::Threads {
                mode: self.mode,
                min: min_threads,
                got: self.threads,
            });
        }
        if matches!(self.mode, Mode::Multiwait | Mode::Stress) && self.num_locks < 2 {
            return Err(BenchError::Locks {
                mode: self.mode,
                got: self.num_locks,
            });
        }
        if self.mode == Mode::Stress && !(1..=self.num_locks).contains(&self.subset_max) {
            return Err(BenchError::Subset {
                subset_max: self.subset_max,
                locks: self.num_locks,
            });
        }
        Ok(())
    }

    /// Most locks one thread may hold at once in this workload.
    pub fn held_bound(&self) -> usize {
        match self.mode {
            Mode::MaxContention | Mode::Moderate => 1,
            Mode::Multiwait => self.num_locks,
            Mode::Stress => self.subset_max,
            Mode::Ring => 0,
        }
    }

    /// Worst-case number of threads waiting on one spin word.
    ///
    /// For Hemlock a cell's waiters are bounded by the locks its owner holds
    /// or is waiting for, since a thread waiting for its last lock can
    /// already have a successor queued behind it on that lock. An Overlap
    /// owner may also still carry one unacknowledged hand-over of a lock
    /// it has released, which only adds a waiter when it has moved on to a
    /// different lock.
    pub fn waiter_bound(&self) -> usize {
        let others = self.threads.saturating_sub(1);
        let per_owner = match self.algorithm {
            LockAlgorithm::Mcs | LockAlgorithm::Clh => 1,
            LockAlgorithm::Ticket => others,
            LockAlgorithm::HemlockOverlap if self.mode == Mode::Stress => self.subset_max + 1,
            _ => self.held_bound(),
        };
        per_owner.min(others)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("runs must be odd and positive, got {0}")]
    EvenRuns(usize),
    #[error("{mode} needs at least {min} threads, got {got}")]
    Threads { mode: Mode, min: usize, got: usize },
    #[error("{mode} needs at least 2 locks, got {got}")]
    Locks { mode: Mode, got: usize },
    #[error("subset size {subset_max} outside 1..={locks}")]
    Subset { subset_max: usize, locks: usize },
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("median of no samples")]
    NoSamples,
    #[error("median of an even number ({0}) of samples")]
    EvenSamples(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSample {
    pub run: usize,
    /// Completed operations: acquisitions, leader sweeps in `multiwait`,
    /// circulations in `ring`.
    pub ops: u64,
    pub elapsed_secs: f64,
    pub ops_per_sec: f64,
    pub per_thread_ops: Vec<u64>,
    pub max_waiters_per_cell: usize,
    pub max_locks_held: usize,
    pub fifo_inversions: usize,
    /// Empty when every check passed.
    pub failures: Vec<String>,
    #[serde(skip)]
    pub doorsteps: Vec<DoorstepRecord>,
}

impl RunSample {
    pub fn integrity_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub runs: Vec<RunSample>,
    /// Median of the runs' rates; `None` if any run failed its checks.
    pub median_ops_per_sec: Option<f64>,
    pub median_ops: Option<f64>,
}

impl BenchReport {
    pub fn integrity_ok(&self) -> bool {
        self.runs.iter().all(RunSample::integrity_ok)
    }

    pub fn max_waiters_per_cell(&self) -> usize {
        self.runs.iter().map(|r| r.max_waiters_per_cell).max().unwrap_or(0)
    }

    pub fn max_locks_held(&self) -> usize {
        self.runs.iter().map(|r| r.max_locks_held).max().unwrap_or(0)
    }
}

/// Middle order statistic of an odd number of samples.
pub fn aggregate_median(samples: &[f64]) -> Result<f64, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::NoSamples);
    }
    if samples.len().is_multiple_of(2) {
        return Err(BenchError::EvenSamples(samples.len()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[v.len() / 2])
}

/// Runs every configured repetition of the workload.
pub fn run(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let runs: Vec<RunSample> = (0..cfg.runs).map(|i| workloads::run_once(cfg, i)).collect();
    let clean = runs.iter().all(RunSample::integrity_ok);
    let median = |f: fn(&RunSample) -> f64| -> Option<f64> {
        clean.then(|| aggregate_median(&runs.iter().map(f).collect::<Vec<_>>()).expect("odd run count"))
    };
    let median_ops_per_sec = median(|r| r.ops_per_sec);
    let median_ops = median(|r| r.ops as f64);
    Ok(BenchReport {
        config: cfg.clone(),
        runs,
        median_ops_per_sec,
        median_ops,
    })
}

fn expect_mode(cfg: &BenchConfig, mode: Mode) -> Result<BenchReport, BenchError> {
    assert_eq!(cfg.mode, mode, "configuration is for {}", cfg.mode);
    run(cfg)
}

pub fn run_max_contention(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    expect_mode(cfg, Mode::MaxContention)
}

pub fn run_moderate(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    expect_mode(cfg, Mode::Moderate)
}

pub fn run_multiwait(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    expect_mode(cfg, Mode::Multiwait)
}

pub fn run_ring(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    expect_mode(cfg, Mode::Ring)
}

pub fn run_stress(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    expect_mode(cfg, Mode::Stress)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_the_middle_order_statistic() {
        assert_eq!(aggregate_median(&[1.0, 2.0, 3.0]), Ok(2.0));
        assert_eq!(aggregate_median(&[5.0]), Ok(5.0));
        assert_eq!(aggregate_median(&[7.0, 1.0, 4.0, 6.0, 2.0, 5.0, 3.0]), Ok(4.0));
        assert_eq!(aggregate_median(&[]), Err(BenchError::NoSamples));
        assert_eq!(aggregate_median(&[1.0, 2.0]), Err(BenchError::EvenSamples(2)));
    }

    #[test]
    fn config_validation() {
        let c = BenchConfig::new(Mode::MaxContention, LockAlgorithm::Mcs, 1);
        assert!(c.validate().is_ok());
        assert_eq!(c.clone().runs(4).validate(), Err(BenchError::EvenRuns(4)));
        assert!(matches!(
            BenchConfig::new(Mode::Ring, LockAlgorithm::Mcs, 1).validate(),
            Err(BenchError::Threads { .. })
        ));
        assert!(matches!(
            BenchConfig::new(Mode::Multiwait, LockAlgorithm::Mcs, 4).locks(1).validate(),
            Err(BenchError::Locks { .. })
        ));
        assert!(matches!(
            BenchConfig::new(Mode::Stress, LockAlgorithm::Mcs, 4).locks(2).subset_max(3).validate(),
            Err(BenchError::Subset { .. })
        ));
        assert_eq!("ring".parse::<Mode>(), Ok(Mode::Ring));
        assert!("rings".parse::<Mode>().is_err());
    }

    #[test]
    fn waiter_bounds() {
        let mw = |a| BenchConfig::new(Mode::Multiwait, a, 16).locks(10);
        assert_eq!(mw(LockAlgorithm::HemlockCtr).waiter_bound(), 10);
        assert_eq!(mw(LockAlgorithm::Mcs).waiter_bound(), 1);
        assert_eq!(mw(LockAlgorithm::Ticket).waiter_bound(), 15);
        assert_eq!(BenchConfig::new(Mode::Multiwait, LockAlgorithm::HemlockCtr, 4).waiter_bound(), 3);
        assert_eq!(BenchConfig::new(Mode::MaxContention, LockAlgorithm::HemlockCtr, 1).waiter_bound(), 0);
        let st = BenchConfig::new(Mode::Stress, LockAlgorithm::HemlockOverlap, 8).subset_max(1);
        assert_eq!(st.waiter_bound(), 2);
    }
}

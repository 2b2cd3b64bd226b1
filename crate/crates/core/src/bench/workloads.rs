use std::cell::UnsafeCell;
use std::hint::black_box;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::harness::{drive, Driven, Until};
use super::{BenchConfig, Length, Mode, RunSample};
use crate::instrumentation::fifo_audit;
use crate::locks::{GrantCell, LockSet, RawLock, SpinConfig, Spinner, WaitPolicy, EMPTY};

/// Value circulating through the ring mailboxes.
pub const fn ring_token() -> usize {
    1
}

/// Data protected by a lock from the workload, not by its own type.
struct Guarded<T>(UnsafeCell<T>);

// SAFETY: every access happens while holding the lock that guards it.
unsafe impl<T: Send> Sync for Guarded<T> {}

impl<T> Guarded<T> {
    fn new(v: T) -> Self {
        Self(UnsafeCell::new(v))
    }

    /// # Safety
    ///
    /// The caller holds the guarding lock.
    #[allow(clippy::mut_from_ref)]
    unsafe fn get(&self) -> &mut T {
        &mut *self.0.get()
    }

    fn into_inner(self) -> T {
        self.0.into_inner()
    }
}

/// Independent PRNG stream `index` derived from `seed`.
///
/// Stream 0 is the shared critical-section generator; thread `i` uses
/// stream `2i + 1` to choose amounts or locks and `2i + 2` for the
/// non-critical work itself. Streams are separated by xoshiro jumps of
/// 2^128 steps.
pub(crate) fn stream(seed: u64, index: usize) -> Xoshiro256PlusPlus {
    let mut r = Xoshiro256PlusPlus::seed_from_u64(seed);
    for _ in 0..index {
        r.jump();
    }
    r
}

pub(crate) fn run_once(cfg: &BenchConfig, run: usize) -> RunSample {
    match cfg.mode {
        Mode::MaxContention | Mode::Moderate => single_lock(cfg, run),
        Mode::Multiwait => multiwait(cfg, run),
        Mode::Ring => ring(cfg, run),
        Mode::Stress => stress(cfg, run),
    }
}

/// Common bookkeeping: op totals, census bounds, FIFO audit, panics.
fn sample<T>(cfg: &BenchConfig, run: usize, driven: &Driven<T>, ops: Option<u64>) -> RunSample {
    let mut failures = Vec::new();
    let mut per_thread_ops = Vec::with_capacity(driven.workers.len());
    let mut records = Vec::new();
    for (i, w) in driven.workers.iter().enumerate() {
        match w {
            Ok(w) => {
                per_thread_ops.push(w.ops);
                records.extend_from_slice(&w.records);
            }
            Err(_) => {
                per_thread_ops.push(0);
                failures.push(format!("worker {i} panicked"));
            }
        }
    }
    let ops = ops.unwrap_or_else(|| per_thread_ops.iter().sum());
    let inversions = fifo_audit(&records);
    if !inversions.is_empty() {
        failures.push(format!("fifo: {} doorstep/entry inversions", inversions.len()));
    }
    let census = driven.registry.census_snapshot();
    if cfg!(feature = "instrument") {
        if census.max_waiters_per_cell > cfg.waiter_bound() {
            failures.push(format!(
                "census: {} waiters on one spin word, bound {}",
                census.max_waiters_per_cell,
                cfg.waiter_bound()
            ));
        }
        if census.max_locks_held > cfg.held_bound() {
            failures.push(format!(
                "census: {} locks held at once, bound {}",
                census.max_locks_held,
                cfg.held_bound()
            ));
        }
        if !census.balanced() {
            failures.push("census: grant-cell gauge arrivals and departures differ".to_owned());
        }
    }
    let secs = driven.elapsed.as_secs_f64();
    RunSample {
        run,
        ops,
        elapsed_secs: secs,
        ops_per_sec: if secs > 0.0 { ops as f64 / secs } else { 0.0 },
        per_thread_ops,
        max_waiters_per_cell: census.max_waiters_per_cell,
        max_locks_held: census.max_locks_held,
        fifo_inversions: inversions.len(),
        failures,
        doorsteps: if cfg.keep_doorsteps { records } else { Vec::new() },
    }
}

fn single_lock(cfg: &BenchConfig, run: usize) -> RunSample {
    let locks = LockSet::new(cfg.algorithm, cfg.policy, 1);
    let lock = &locks[0];
    let id = lock.identity();
    let counter = Guarded::new(0u64);
    let shared = Guarded::new(stream(cfg.seed, 0));
    let moderate = cfg.mode == Mode::Moderate;
    let driven = drive(cfg, |i, ctx, until| {
        let mut amount = stream(cfg.seed, 2 * i + 1);
        let mut work = stream(cfg.seed, 2 * i + 2);
        let mut sink = 0u64;
        let mut done = 0;
        while until.more(done) {
            lock.lock(ctx);
            ctx.record_entry(id, 0);
            // SAFETY: `lock` is held.
            unsafe {
                *counter.get() += 1;
                if moderate {
                    let r = shared.get();
                    for _ in 0..cfg.cs_steps {
                        r.next_u64();
                    }
                }
                lock.unlock(ctx);
            }
            done += 1;
            if moderate && cfg.ncs_max > 0 {
                for _ in 0..amount.gen_range(0..cfg.ncs_max) {
                    sink = sink.wrapping_add(work.next_u64());
                }
            }
        }
        black_box(sink);
        (done, ())
    });
    let mut s = sample(cfg, run, &driven, None);
    let count = counter.into_inner();
    if count != s.ops {
        s.failures
            .push(format!("counter: {count} after {} acquisitions", s.ops));
    }
    if moderate {
        let mut replay = stream(cfg.seed, 0);
        for _ in 0..s.ops * u64::from(cfg.cs_steps) {
            replay.next_u64();
        }
        if shared.into_inner() != replay {
            s.failures
                .push("shared PRNG state differs from sequential replay".to_owned());
        }
    }
    s
}

fn multiwait(cfg: &BenchConfig, run: usize) -> RunSample {
    let n = cfg.num_locks;
    let locks = LockSet::new(cfg.algorithm, cfg.policy, n);
    let counters: Vec<Guarded<u64>> = (0..n).map(|_| Guarded::new(0)).collect();
    let driven = drive(cfg, |i, ctx, until| {
        let mut acquisitions = 0u64;
        let mut done = 0;
        if i == 0 {
            while until.more(done) {
                for (k, l) in locks.iter().enumerate() {
                    l.lock(ctx);
                    ctx.record_entry(l.identity(), k);
                    // SAFETY: lock `k` is held.
                    unsafe { *counters[k].get() += 1 };
                }
                for l in locks.iter().rev() {
                    // SAFETY: acquired above.
                    unsafe { l.unlock(ctx) };
                }
                acquisitions += n as u64;
                done += 1;
            }
            until.stop();
        } else {
            let mut pick = stream(cfg.seed, 2 * i + 1);
            while until.until_stopped(done) {
                let k = pick.gen_range(0..n);
                let l = &locks[k];
                l.lock(ctx);
                ctx.record_entry(l.identity(), k);
                // SAFETY: lock `k` is held.
                unsafe {
                    *counters[k].get() += 1;
                    l.unlock(ctx);
                }
                acquisitions += 1;
                done += 1;
            }
        }
        (done, acquisitions)
    });
    let leader = driven.workers[0].as_ref().map_or(0, |w| w.ops);
    let mut s = sample(cfg, run, &driven, Some(leader));
    let expected: u64 = driven.workers.iter().flatten().map(|w| w.extra).sum();
    let total: u64 = counters.into_iter().map(Guarded::into_inner).sum();
    if total != expected {
        s.failures
            .push(format!("counters: {total} increments after {expected} acquisitions"));
    }
    s
}

/// Takes the token from `cell`. Returns false if `bail` says to give up first.
fn take(cell: &GrantCell, policy: WaitPolicy, spin: SpinConfig, bail: impl Fn() -> bool) -> bool {
    let token = ring_token();
    let mut spin = Spinner::new(spin);
    loop {
        let got = match policy {
            WaitPolicy::NaiveLoad => cell.value.load(Ordering::Acquire) == token,
            WaitPolicy::CtrCas => cell
                .value
                .compare_exchange_weak(token, EMPTY, Ordering::AcqRel, Ordering::Relaxed)
                .is_ok(),
            WaitPolicy::CtrFaa0 => cell.value.fetch_add(0, Ordering::Acquire) == token,
        };
        if got {
            if policy != WaitPolicy::CtrCas {
                cell.value.store(EMPTY, Ordering::Relaxed);
            }
            return true;
        }
        if bail() {
            return false;
        }
        spin.spin();
    }
}

fn ring(cfg: &BenchConfig, run: usize) -> RunSample {
    let t = cfg.threads;
    let boxes: Vec<GrantCell> = (0..t).map(|_| GrantCell::new()).collect();
    boxes[0].value.store(ring_token(), Ordering::Relaxed);
    let holders = AtomicUsize::new(0);
    let errors = Mutex::new(Vec::new());
    let timed = matches!(cfg.length, Length::Timed(_));
    let driven = drive(cfg, |i, ctx, until: &Until<'_>| {
        let (me, next) = (&boxes[i], &boxes[(i + 1) % t]);
        let mut done = 0;
        while until.more(done) {
            if !take(me, cfg.policy, ctx.spin_config(), || timed && until.stopped()) {
                break;
            }
            if holders.fetch_add(1, Ordering::AcqRel) != 0 {
                errors.lock().unwrap().push(format!("thread {i}: token duplicated"));
            }
            if next.value.load(Ordering::Acquire) != EMPTY {
                errors
                    .lock()
                    .unwrap()
                    .push(format!("thread {i}: successor mailbox already full"));
            }
            holders.fetch_sub(1, Ordering::AcqRel);
            next.value.store(ring_token(), Ordering::Release);
            done += 1;
        }
        (done, ())
    });
    let passes: u64 = driven.workers.iter().flatten().map(|w| w.ops).sum();
    let mut s = sample(cfg, run, &driven, Some(passes / t as u64));
    s.failures.extend(errors.into_inner().unwrap());
    let full = boxes
        .iter()
        .filter(|b| b.value.load(Ordering::Relaxed) != EMPTY)
        .count();
    if full != 1 || holders.load(Ordering::Relaxed) != 0 {
        s.failures
            .push(format!("ring: {full} tokens in mailboxes after the run"));
    }
    if let Length::Iterations(k) = cfg.length {
        if s.per_thread_ops.iter().any(|&h| h != k) {
            s.failures
                .push(format!("ring: unequal handle counts {:?}", s.per_thread_ops));
        }
    }
    s
}

fn stress(cfg: &BenchConfig, run: usize) -> RunSample {
    let n = cfg.num_locks;
    let locks = LockSet::new(cfg.algorithm, cfg.policy, n);
    let counters: Vec<Guarded<u64>> = (0..n).map(|_| Guarded::new(0)).collect();
    let driven = drive(cfg, |i, ctx, until| {
        let mut pick = stream(cfg.seed, 2 * i + 1);
        let mut per_lock = vec![0u64; n];
        let mut done = 0;
        while until.more(done) {
            let size = pick.gen_range(1..=cfg.subset_max);
            let mut subset = index::sample(&mut pick, n, size).into_vec();
            subset.sort_unstable();
            for &k in &subset {
                locks[k].lock(ctx);
                ctx.record_entry(locks[k].identity(), k);
                // SAFETY: lock `k` is held.
                unsafe { *counters[k].get() += 1 };
                per_lock[k] += 1;
            }
            for &k in subset.iter().rev() {
                // SAFETY: acquired above.
                unsafe { locks[k].unlock(ctx) };
            }
            done += 1;
        }
        (done, per_lock)
    });
    let mut s = sample(cfg, run, &driven, None);
    for (k, c) in counters.into_iter().enumerate() {
        let expected: u64 = driven.workers.iter().flatten().map(|w| w.extra[k]).sum();
        let got = c.into_inner();
        if got != expected {
            s.failures
                .push(format!("counter of lock {k}: {got} after {expected} acquisitions"));
        }
    }
    s
}

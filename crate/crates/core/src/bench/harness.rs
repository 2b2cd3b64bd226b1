use std::any::Any;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use super::{BenchConfig, Length};
use crate::instrumentation::{DoorstepLog, DoorstepRecord};
use crate::locks::{Registry, SpinConfig, ThreadContext};

/// Binds the calling thread to one CPU.
#[cfg(target_os = "linux")]
pub fn pin_to_cpu(cpu: usize) -> std::io::Result<()> {
    // SAFETY: cpu_set_t is plain data; the call only reads it.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu % libc::CPU_SETSIZE as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(std::io::Error::last_os_error());
        }
    }
    Ok(())
}

#[cfg(not(target_os = "linux"))]
pub fn pin_to_cpu(_cpu: usize) -> std::io::Result<()> {
    Err(std::io::Error::new(std::io::ErrorKind::Unsupported, "pinning needs Linux"))
}

/// Loop control handed to each worker.
pub(crate) struct Until<'a> {
    stop: &'a AtomicBool,
    limit: Option<u64>,
}

impl Until<'_> {
    /// Whether to start operation number `done + 1`.
    #[inline]
    pub fn more(&self, done: u64) -> bool {
        match self.limit {
            Some(k) => done < k,
            None => done == 0 || !self.stop.load(Ordering::Relaxed),
        }
    }

    /// Loop condition for threads that run until told to stop, whatever
    /// the run length.
    #[inline]
    pub fn until_stopped(&self, done: u64) -> bool {
        done == 0 || !self.stop.load(Ordering::Relaxed)
    }

    #[inline]
    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

pub(crate) struct WorkerOut<T> {
    pub ops: u64,
    pub records: Vec<DoorstepRecord>,
    pub extra: T,
}

pub(crate) struct Driven<T> {
    pub elapsed: Duration,
    pub workers: Vec<Result<WorkerOut<T>, Box<dyn Any + Send>>>,
    pub registry: Registry,
}

/// Spawns one worker per thread, releases them together and, in timed
/// mode, raises the stop flag at the deadline.
pub(crate) fn drive<T, F>(cfg: &BenchConfig, body: F) -> Driven<T>
where
    T: Send,
    F: Fn(usize, &ThreadContext, &Until<'_>) -> (u64, T) + Sync,
{
    let registry = Registry::new();
    let spin = SpinConfig::for_threads(cfg.threads);
    let gate = Barrier::new(cfg.threads + 1);
    let stop = AtomicBool::new(false);
    let log = (cfg.audit_fifo && cfg!(feature = "instrument")).then(DoorstepLog::new);
    let limit = match cfg.length {
        Length::Iterations(k) => Some(k),
        Length::Timed(_) => None,
    };
    let (elapsed, workers) = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|i| {
                let registry = &registry;
                let gate = &gate;
                let stop = &stop;
                let log = log.as_ref().map(Arc::clone);
                let body = &body;
                s.spawn(move || {
                    let ctx = registry.register_with(spin).expect("fresh thread");
                    if cfg.pin {
                        // Best effort: an unpinned run is still a valid run.
                        let _ = pin_to_cpu(i);
                    }
                    if let Some(log) = log {
                        ctx.arm_doorstep_log(log);
                    }
                    gate.wait();
                    let until = Until { stop, limit };
                    let (ops, extra) = body(i, &ctx, &until);
                    WorkerOut {
                        ops,
                        records: ctx.take_doorstep_records(),
                        extra,
                    }
                })
            })
            .collect();
        gate.wait();
        let start = Instant::now();
        if let Length::Timed(d) = cfg.length {
            thread::sleep(d);
            stop.store(true, Ordering::Relaxed);
        }
        let workers: Vec<_> = handles.into_iter().map(|h| h.join()).collect();
        (start.elapsed(), workers)
    });
    Driven {
        elapsed,
        workers,
        registry,
    }
}

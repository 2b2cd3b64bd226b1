use std::hint;
use std::thread;

/// Busy-wait configuration carried by a [`ThreadContext`](super::ThreadContext).
///
/// Every iteration issues a processor spin hint. There is no backoff. When
/// more threads run than there are hardware threads, a waiter whose
/// predecessor is descheduled would otherwise burn its whole timeslice, so
/// after `yield_after` consecutive iterations each further iteration also
/// yields the processor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    pub yield_after: Option<u32>,
}

impl SpinConfig {
    /// Pure spinning.
    pub const SPIN: SpinConfig = SpinConfig { yield_after: None };

    /// Default iteration budget before yielding when oversubscribed.
    pub const OVERSUBSCRIBED_BUDGET: u32 = 64;

    /// Pure spinning if `threads` fit on the machine, spin-then-yield otherwise.
    pub fn for_threads(threads: usize) -> SpinConfig {
        if threads <= hardware_threads() {
            SpinConfig::SPIN
        } else {
            SpinConfig {
                yield_after: Some(Self::OVERSUBSCRIBED_BUDGET),
            }
        }
    }
}

impl Default for SpinConfig {
    /// Spin-then-yield unless the machine has at least 16 hardware threads.
    fn default() -> Self {
        SpinConfig::for_threads(16)
    }
}

pub fn hardware_threads() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// One busy-wait loop.
#[derive(Debug)]
pub struct Spinner {
    count: u32,
    yield_after: u32,
}

impl Spinner {
    #[inline]
    pub fn new(cfg: SpinConfig) -> Self {
        Self {
            count: 0,
            yield_after: cfg.yield_after.unwrap_or(u32::MAX),
        }
    }

    #[inline]
    pub fn spin(&mut self) {
        hint::spin_loop();
        if self.count >= self.yield_after {
            thread::yield_now();
        } else {
            self.count += 1;
        }
    }
}

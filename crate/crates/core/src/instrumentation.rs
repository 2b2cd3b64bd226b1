//! Runtime gauges and audit logs.
//!
//! Three things are measured while locks run:
//!
//! * how many threads are busy-waiting on one spin word at the same time
//!   ([`WaiterGauge`], rolled up into a registry-wide [`Census`]);
//! * how many locks one thread holds at the same time;
//! * the order in which threads pass the entry doorstep of a lock compared
//!   to the order in which they enter its critical section ([`DoorstepLog`],
//!   checked by [`fifo_audit`]).
//!
//! With the `instrument` feature disabled the gauge methods compile to
//! nothing and doorstep recording is never armed.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use serde::Serialize;

/// Waiter gauge attached to one spin word (a grant cell or a queue node).
#[derive(Debug, Default)]
pub struct WaiterGauge {
    current: AtomicUsize,
    high: AtomicUsize,
    enters: AtomicU64,
    leaves: AtomicU64,
}

impl WaiterGauge {
    pub const fn new() -> Self {
        Self {
            current: AtomicUsize::new(0),
            high: AtomicUsize::new(0),
            enters: AtomicU64::new(0),
            leaves: AtomicU64::new(0),
        }
    }

    /// Registers one more waiter. Returns the number of waiters including
    /// the caller.
    #[inline]
    pub fn enter(&self) -> usize {
        if !cfg!(feature = "instrument") {
            return 0;
        }
        let now = self.current.fetch_add(1, Ordering::Relaxed) + 1;
        self.enters.fetch_add(1, Ordering::Relaxed);
        self.high.fetch_max(now, Ordering::Relaxed);
        now
    }

    #[inline]
    pub fn leave(&self) {
        if !cfg!(feature = "instrument") {
            return;
        }
        self.current.fetch_sub(1, Ordering::Relaxed);
        self.leaves.fetch_add(1, Ordering::Relaxed);
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    pub fn high_water(&self) -> usize {
        self.high.load(Ordering::Relaxed)
    }

    pub fn enters(&self) -> u64 {
        self.enters.load(Ordering::Relaxed)
    }

    pub fn leaves(&self) -> u64 {
        self.leaves.load(Ordering::Relaxed)
    }
}

/// Registry-wide high-water marks.
#[derive(Debug, Default)]
pub struct Census {
    max_waiters_per_cell: AtomicUsize,
    max_locks_held: AtomicUsize,
}

impl Census {
    pub const fn new() -> Self {
        Self {
            max_waiters_per_cell: AtomicUsize::new(0),
            max_locks_held: AtomicUsize::new(0),
        }
    }

    #[inline]
    pub fn observe_waiters(&self, waiters: usize) {
        if cfg!(feature = "instrument") {
            self.max_waiters_per_cell.fetch_max(waiters, Ordering::Relaxed);
        }
    }

    #[inline]
    pub fn observe_held(&self, held: usize) {
        if cfg!(feature = "instrument") {
            self.max_locks_held.fetch_max(held, Ordering::Relaxed);
        }
    }

    pub fn max_waiters_per_cell(&self) -> usize {
        self.max_waiters_per_cell.load(Ordering::Relaxed)
    }

    pub fn max_locks_held(&self) -> usize {
        self.max_locks_held.load(Ordering::Relaxed)
    }
}

/// Per-context figures in a [`CensusSnapshot`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CellCensus {
    pub thread: usize,
    pub max_waiters: usize,
    pub current_waiters: usize,
    pub enters: u64,
    pub leaves: u64,
    pub max_locks_held: usize,
}

/// Quiescent summary of a registry's gauges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CensusSnapshot {
    pub contexts: usize,
    pub max_waiters_per_cell: usize,
    pub max_locks_held: usize,
    pub cells: Vec<CellCensus>,
}

impl CensusSnapshot {
    /// Every grant-cell gauge saw as many departures as arrivals.
    pub fn balanced(&self) -> bool {
        self.cells
            .iter()
            .all(|c| c.enters == c.leaves && c.current_waiters == 0)
    }
}

/// One acquisition observed by the doorstep log.
///
/// The doorstep is bracketed by two samples of the log's sequence counter,
/// one taken just before the arrival atomic and one just after it, because
/// the arrival itself happens on a different word than the counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DoorstepRecord {
    pub lock: usize,
    pub doorstep_seq: u64,
    pub doorstep_end: u64,
    pub entry_seq: u64,
    pub thread: usize,
}

impl DoorstepRecord {
    /// Record whose doorstep is a single instant.
    pub fn point(lock: usize, doorstep_seq: u64, entry_seq: u64, thread: usize) -> Self {
        Self {
            lock,
            doorstep_seq,
            doorstep_end: doorstep_seq,
            entry_seq,
            thread,
        }
    }
}

/// Shared sequence counter for doorstep and entry samples.
#[derive(Debug, Default)]
pub struct DoorstepLog {
    seq: AtomicU64,
}

impl DoorstepLog {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    #[inline]
    pub fn tick(&self) -> u64 {
        self.seq.fetch_add(1, Ordering::SeqCst)
    }
}

/// Per-thread append buffer feeding a [`DoorstepLog`].
#[derive(Debug)]
pub struct DoorstepRecorder {
    log: Arc<DoorstepLog>,
    thread: usize,
    pending: Vec<(usize, u64, u64)>,
    records: Vec<DoorstepRecord>,
}

impl DoorstepRecorder {
    pub fn new(log: Arc<DoorstepLog>, thread: usize) -> Self {
        Self {
            log,
            thread,
            pending: Vec::new(),
            records: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn before_doorstep(&self) -> u64 {
        self.log.tick()
    }

    #[inline]
    pub(crate) fn after_doorstep(&mut self, lock: usize, begin: u64) {
        let end = self.log.tick();
        self.pending.push((lock, begin, end));
    }

    /// Attempted doorstep that did not enqueue (failed try-lock).
    #[inline]
    pub(crate) fn cancel_doorstep(&mut self, lock: usize) {
        if let Some(i) = self.pending.iter().rposition(|p| p.0 == lock) {
            self.pending.swap_remove(i);
        }
    }

    /// Called from inside the critical section of `lock`, under `key`.
    pub fn record_entry(&mut self, lock: usize, key: usize) {
        let entry = self.log.tick();
        if let Some(i) = self.pending.iter().rposition(|p| p.0 == lock) {
            let (_, begin, end) = self.pending.swap_remove(i);
            self.records.push(DoorstepRecord {
                lock: key,
                doorstep_seq: begin,
                doorstep_end: end,
                entry_seq: entry,
                thread: self.thread,
            });
        }
    }

    pub fn into_records(self) -> Vec<DoorstepRecord> {
        self.records
    }
}

/// A pair of acquisitions of one lock admitted out of doorstep order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FifoInversion {
    pub lock: usize,
    /// Entered first.
    pub earlier: DoorstepRecord,
    /// Entered second although its doorstep finished before `earlier`'s began.
    pub later: DoorstepRecord,
}

/// Returns every pair of acquisitions of the same lock whose entry order
/// contradicts their doorstep order.
///
/// A pair counts only when the doorsteps are strictly ordered: the later
/// entrant's doorstep interval ended before the earlier entrant's began.
pub fn fifo_audit(records: &[DoorstepRecord]) -> Vec<FifoInversion> {
    let mut by_lock: BTreeMap<usize, Vec<&DoorstepRecord>> = BTreeMap::new();
    for r in records {
        by_lock.entry(r.lock).or_default().push(r);
    }
    let mut out = Vec::new();
    for (lock, mut recs) in by_lock {
        recs.sort_by_key(|r| r.entry_seq);
        // doorstep_seq -> records already admitted
        let mut admitted: BTreeMap<u64, Vec<&DoorstepRecord>> = BTreeMap::new();
        for later in recs {
            for (_, earlier) in admitted.range(later.doorstep_end + 1..) {
                for e in earlier {
                    out.push(FifoInversion {
                        lock,
                        earlier: **e,
                        later: *later,
                    });
                }
            }
            admitted.entry(later.doorstep_seq).or_default().push(later);
        }
    }
    out
}

/// Writes the newline-delimited dump `lock,doorstep_seq,entry_seq,thread,doorstep_end`.
pub fn write_doorstep_log<W: Write>(mut out: W, records: &[DoorstepRecord]) -> io::Result<()> {
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.lock, r.doorstep_seq, r.entry_seq, r.thread, r.doorstep_end
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_order_log_is_clean() {
        let recs: Vec<_> = (1..=3).map(|i| DoorstepRecord::point(0, i, i, 0)).collect();
        assert!(fifo_audit(&recs).is_empty());
    }

    #[test]
    fn swapped_entries_give_one_inversion() {
        let recs = [DoorstepRecord::point(0, 1, 2, 0), DoorstepRecord::point(0, 2, 1, 1)];
        let inv = fifo_audit(&recs);
        assert_eq!(inv.len(), 1);
        assert_eq!(inv[0].earlier.thread, 1);
        assert_eq!(inv[0].later.thread, 0);
    }

    #[test]
    fn overlapping_doorsteps_are_not_inversions() {
        let a = DoorstepRecord {
            lock: 0,
            doorstep_seq: 1,
            doorstep_end: 4,
            entry_seq: 9,
            thread: 0,
        };
        let b = DoorstepRecord {
            lock: 0,
            doorstep_seq: 2,
            doorstep_end: 3,
            entry_seq: 8,
            thread: 1,
        };
        assert!(fifo_audit(&[a, b]).is_empty());
    }

    #[test]
    fn locks_are_audited_separately() {
        let recs = [DoorstepRecord::point(0, 1, 2, 0), DoorstepRecord::point(1, 2, 1, 1)];
        assert!(fifo_audit(&recs).is_empty());
    }

    #[test]
    fn gauge_tracks_high_water() {
        let g = WaiterGauge::new();
        g.enter();
        g.enter();
        g.leave();
        g.enter();
        g.leave();
        g.leave();
        if cfg!(feature = "instrument") {
            assert_eq!(g.high_water(), 2);
            assert_eq!(g.enters(), g.leaves());
        }
        assert_eq!(g.current(), 0);
    }

    #[test]
    fn idle_census_reads_zero() {
        let c = Census::new();
        assert_eq!(c.max_waiters_per_cell(), 0);
        assert_eq!(c.max_locks_held(), 0);
    }

    #[test]
    fn dump_format() {
        let mut buf = Vec::new();
        write_doorstep_log(&mut buf, &[DoorstepRecord::point(3, 10, 12, 1)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3,10,12,1,10\n");
    }
}

use std::cell::{Cell, OnceCell, RefCell};
use std::collections::HashSet;
use std::marker::PhantomData;
use std::ptr::NonNull;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::{self, ThreadId};

use super::clh::ClhNode;
use super::grant::{GrantCell, EMPTY};
use super::mcs::McsNode;
use super::spin::{SpinConfig, Spinner};
use super::LockError;
use crate::instrumentation::{
    CellCensus, Census, CensusSnapshot, DoorstepLog, DoorstepRecord, DoorstepRecorder, WaiterGauge,
};

#[cfg_attr(not(feature = "pad128"), repr(C, align(64)))]
#[cfg_attr(feature = "pad128", repr(C, align(128)))]
#[derive(Debug, Default)]
pub(crate) struct PaddedGauge(pub(crate) WaiterGauge);

/// Shared part of a thread's registration. The grant cell comes first so a
/// grant-cell identity is also the address of its slot.
#[repr(C)]
#[derive(Debug)]
pub(crate) struct Slot {
    pub(crate) grant: GrantCell,
    pub(crate) gauge: PaddedGauge,
    id: usize,
    max_held: AtomicUsize,
}

impl Slot {
    /// # Safety
    ///
    /// `identity` must come from [`ThreadContext::grant_identity`] of a
    /// context whose registry is still alive.
    #[inline]
    pub(crate) unsafe fn from_identity<'a>(identity: usize) -> &'a Slot {
        &*(identity as *const Slot)
    }
}

#[derive(Debug)]
struct RegistryInner {
    slots: Mutex<Vec<Arc<Slot>>>,
    live: Mutex<HashSet<ThreadId>>,
    next_id: AtomicUsize,
    census: Census,
}

/// Registry of thread contexts.
///
/// A registry keeps every grant cell it handed out alive until the
/// registry itself is dropped, so a cell is never reused while some lock
/// might still point at it. Threads that share locks should register with
/// the same registry.
#[derive(Clone, Debug)]
pub struct Registry {
    inner: Arc<RegistryInner>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(RegistryInner {
                slots: Mutex::new(Vec::new()),
                live: Mutex::new(HashSet::new()),
                next_id: AtomicUsize::new(0),
                census: Census::new(),
            }),
        }
    }

    /// Process-wide registry used by [`with_current`].
    pub fn global() -> &'static Registry {
        static GLOBAL: OnceLock<Registry> = OnceLock::new();
        GLOBAL.get_or_init(Registry::new)
    }

    pub fn register(&self) -> Result<ThreadContext, LockError> {
        self.register_with(SpinConfig::default())
    }

    pub fn register_with(&self, spin: SpinConfig) -> Result<ThreadContext, LockError> {
        let me = thread::current().id();
        if !self.inner.live.lock().unwrap().insert(me) {
            return Err(LockError::AlreadyRegistered);
        }
        let slot = Arc::new(Slot {
            grant: GrantCell::new(),
            gauge: PaddedGauge::default(),
            id: self.inner.next_id.fetch_add(1, Ordering::Relaxed),
            max_held: AtomicUsize::new(0),
        });
        self.inner.slots.lock().unwrap().push(Arc::clone(&slot));
        Ok(ThreadContext {
            slot,
            registry: self.clone(),
            spin,
            held: RefCell::new(Vec::new()),
            held_count: Cell::new(0),
            mcs_free: RefCell::new(Vec::new()),
            mcs_live: Cell::new(0),
            mcs_high: Cell::new(0),
            clh_free: RefCell::new(Vec::new()),
            recorder: RefCell::new(None),
            recording: Cell::new(false),
            _not_send: PhantomData,
        })
    }

    /// Number of contexts ever registered.
    pub fn contexts(&self) -> usize {
        self.inner.slots.lock().unwrap().len()
    }

    pub fn census(&self) -> &Census {
        &self.inner.census
    }

    pub fn census_snapshot(&self) -> CensusSnapshot {
        let slots = self.inner.slots.lock().unwrap();
        let cells: Vec<CellCensus> = slots
            .iter()
            .map(|s| CellCensus {
                thread: s.id,
                max_waiters: s.gauge.0.high_water(),
                current_waiters: s.gauge.0.current(),
                enters: s.gauge.0.enters(),
                leaves: s.gauge.0.leaves(),
                max_locks_held: s.max_held.load(Ordering::Relaxed),
            })
            .collect();
        CensusSnapshot {
            contexts: cells.len(),
            max_waiters_per_cell: self.inner.census.max_waiters_per_cell(),
            max_locks_held: self.inner.census.max_locks_held(),
            cells,
        }
    }
}

/// A thread's registration: its grant cell plus thread-private lock state.
///
/// Bound to the thread that registered it.
pub struct ThreadContext {
    slot: Arc<Slot>,
    registry: Registry,
    spin: SpinConfig,
    held: RefCell<Vec<usize>>,
    held_count: Cell<usize>,
    pub(super) mcs_free: RefCell<Vec<NonNull<McsNode>>>,
    pub(super) mcs_live: Cell<usize>,
    pub(super) mcs_high: Cell<usize>,
    pub(super) clh_free: RefCell<Vec<NonNull<ClhNode>>>,
    recorder: RefCell<Option<DoorstepRecorder>>,
    recording: Cell<bool>,
    _not_send: PhantomData<*mut ()>,
}

impl std::fmt::Debug for ThreadContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThreadContext")
            .field("id", &self.slot.id)
            .field("grant", &self.grant_value())
            .finish_non_exhaustive()
    }
}

impl ThreadContext {
    pub fn id(&self) -> usize {
        self.slot.id
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn spin_config(&self) -> SpinConfig {
        self.spin
    }

    #[inline]
    pub(crate) fn spinner(&self) -> Spinner {
        Spinner::new(self.spin)
    }

    /// The word published into a Hemlock lock's tail by this thread.
    #[inline]
    pub fn grant_identity(&self) -> usize {
        &self.slot.grant as *const GrantCell as usize
    }

    #[inline]
    pub fn grant(&self) -> &GrantCell {
        &self.slot.grant
    }

    pub fn grant_value(&self) -> usize {
        self.slot.grant.value.load(Ordering::Acquire)
    }

    pub fn gauge(&self) -> &WaiterGauge {
        &self.slot.gauge.0
    }

    #[inline]
    pub(crate) fn census(&self) -> &Census {
        self.registry.census()
    }

    /// Locks currently held by this thread.
    pub fn held(&self) -> usize {
        self.held_count.get()
    }

    /// MCS queue nodes this thread has allocated and not yet freed.
    pub fn mcs_nodes_allocated(&self) -> usize {
        self.mcs_live.get()
    }

    pub fn mcs_nodes_high_water(&self) -> usize {
        self.mcs_high.get()
    }

    #[inline]
    pub(crate) fn check_acquire(&self, lock: usize) {
        if cfg!(debug_assertions) {
            let held = self.held.borrow();
            assert!(
                !held.contains(&lock),
                "recursive acquisition of lock {lock:#x} by thread {}",
                self.slot.id
            );
        }
    }

    #[inline]
    pub(crate) fn note_acquired(&self, lock: usize) {
        if cfg!(debug_assertions) {
            self.held.borrow_mut().push(lock);
        }
        let n = self.held_count.get() + 1;
        self.held_count.set(n);
        if cfg!(feature = "instrument") {
            self.slot.max_held.fetch_max(n, Ordering::Relaxed);
            self.census().observe_held(n);
        }
    }

    #[inline]
    pub(crate) fn note_released(&self, lock: usize) {
        if cfg!(debug_assertions) {
            let mut held = self.held.borrow_mut();
            let at = held.iter().rposition(|&l| l == lock);
            match at {
                Some(i) => {
                    held.swap_remove(i);
                }
                None => {
                    drop(held);
                    panic!("release of lock {lock:#x} not held by thread {}", self.slot.id);
                }
            }
        }
        self.held_count.set(self.held_count.get().saturating_sub(1));
    }

    /// Starts recording doorstep and entry samples into `log`.
    pub fn arm_doorstep_log(&self, log: Arc<DoorstepLog>) {
        if cfg!(feature = "instrument") {
            *self.recorder.borrow_mut() = Some(DoorstepRecorder::new(log, self.slot.id));
            self.recording.set(true);
        }
    }

    /// Stops recording and returns what was recorded.
    pub fn take_doorstep_records(&self) -> Vec<DoorstepRecord> {
        self.recording.set(false);
        self.recorder
            .borrow_mut()
            .take()
            .map(DoorstepRecorder::into_records)
            .unwrap_or_default()
    }

    /// Brackets the arrival atomic of `lock` with doorstep samples.
    #[inline]
    pub(crate) fn doorstep<R>(&self, lock: usize, f: impl FnOnce() -> R) -> R {
        if !self.recording.get() {
            return f();
        }
        let begin = self.recorder.borrow().as_ref().map(|r| r.before_doorstep());
        let r = f();
        if let (Some(begin), Some(rec)) = (begin, self.recorder.borrow_mut().as_mut()) {
            rec.after_doorstep(lock, begin);
        }
        r
    }

    #[inline]
    pub(crate) fn cancel_doorstep(&self, lock: usize) {
        if self.recording.get() {
            if let Some(rec) = self.recorder.borrow_mut().as_mut() {
                rec.cancel_doorstep(lock);
            }
        }
    }

    /// Records critical-section entry for the lock with identity `lock`,
    /// logged under `key`. Call while holding the lock.
    #[inline]
    pub fn record_entry(&self, lock: usize, key: usize) {
        if self.recording.get() {
            if let Some(rec) = self.recorder.borrow_mut().as_mut() {
                rec.record_entry(lock, key);
            }
        }
    }
}

impl Drop for ThreadContext {
    fn drop(&mut self) {
        if !thread::panicking() {
            debug_assert_eq!(self.held_count.get(), 0, "thread context dropped while holding locks");
        }
        // A tardy successor may still have to acknowledge a hand-over.
        let mut spin = self.spinner();
        while self.slot.grant.value.load(Ordering::Acquire) != EMPTY {
            spin.spin();
        }
        for node in self.mcs_free.get_mut().drain(..) {
            // SAFETY: nodes on the free stack are owned by this context.
            unsafe { McsNode::free(node) };
        }
        for node in self.clh_free.get_mut().drain(..) {
            // SAFETY: as above; migrated nodes belong to whoever recovered them.
            unsafe { ClhNode::free(node) };
        }
        self.registry
            .inner
            .live
            .lock()
            .unwrap()
            .remove(&thread::current().id());
    }
}

thread_local! {
    static CURRENT: OnceCell<ThreadContext> = const { OnceCell::new() };
}

/// Runs `f` with this thread's context in the global registry, registering
/// on first use.
pub fn with_current<R>(f: impl FnOnce(&ThreadContext) -> R) -> R {
    CURRENT.with(|cell| {
        let ctx = cell.get_or_init(|| {
            Registry::global()
                .register()
                .expect("thread already registered with the global registry")
        });
        f(ctx)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_context_has_empty_grant() {
        let reg = Registry::new();
        let ctx = reg.register().unwrap();
        assert_eq!(ctx.grant_value(), EMPTY);
        assert_eq!(ctx.held(), 0);
    }

    #[test]
    fn double_registration_is_rejected() {
        let reg = Registry::new();
        let _ctx = reg.register().unwrap();
        assert_eq!(reg.register().unwrap_err(), LockError::AlreadyRegistered);
        // a different registry is fine
        assert!(Registry::new().register().is_ok());
    }

    #[test]
    fn registration_is_released_on_drop() {
        let reg = Registry::new();
        drop(reg.register().unwrap());
        assert!(reg.register().is_ok());
        assert_eq!(reg.contexts(), 2);
    }

    #[test]
    fn identities_are_distinct_and_even() {
        let reg = Registry::new();
        let ids: Vec<usize> = (0..2)
            .map(|_| {
                let reg = reg.clone();
                thread::spawn(move || reg.register().unwrap().grant_identity())
                    .join()
                    .unwrap()
            })
            .collect();
        // slots stay alive in the registry, so addresses cannot be recycled
        assert_ne!(ids[0], ids[1]);
        assert!(ids.iter().all(|id| id % 2 == 0));
    }

    #[test]
    fn census_counts_registrations() {
        let reg = Registry::new();
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let reg = reg.clone();
                thread::spawn(move || drop(reg.register().unwrap()))
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let snap = reg.census_snapshot();
        assert_eq!(snap.contexts, 8);
        assert!(snap.balanced());
        assert_eq!(snap.max_waiters_per_cell, 0);
    }

    #[test]
    fn current_context_is_reused() {
        let a = with_current(|c| c.grant_identity());
        let b = with_current(|c| c.grant_identity());
        assert_eq!(a, b);
    }
}

//! The Hemlock lock and its variants.
//!
//! A Hemlock lock is one word, `tail`, holding the grant-cell identity of
//! the most recently arrived thread or EMPTY. An arriving thread swaps its
//! own identity into `tail`; if the previous value was not EMPTY it waits
//! for the lock's identity to appear in the predecessor's grant cell and
//! then clears that cell, which acknowledges the hand-over. A departing
//! owner first tries to swing `tail` from itself back to EMPTY; if another
//! thread has arrived it instead publishes the lock identity in its own
//! grant cell and waits for the acknowledgment.
//!
//! A grant cell is shared by all locks its owner holds, so several waiters
//! (one per lock) may watch the same cell. Each of them matches only its
//! own lock's identity.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::context::{Slot, ThreadContext};
use super::grant::{GrantCell, EMPTY};
use super::{RawLock, WaitPolicy};

/// Unlock-path variants of Hemlock.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HemlockVariant {
    /// CAS the tail, then publish and wait for the acknowledgment.
    Base,
    /// Publish without waiting; the wait moves to the next use of the cell.
    Overlap,
    /// Publish before the tail CAS. Touches the lock after a possible
    /// hand-over, so only for locks that are never freed.
    AggressiveHandOver,
    /// Successors flag their presence in the predecessor's cell (`L|1`),
    /// letting the owner hand over without touching the tail.
    OptimizedHandOver1,
    /// Load the tail first and CAS only when no successor is visible.
    OptimizedHandOver2,
}

const SUCCESSOR_FLAG: usize = 1;

/// A Hemlock lock: a single word.
#[derive(Debug, Default)]
pub struct HemlockLock {
    tail: AtomicUsize,
}

impl HemlockLock {
    pub const fn new() -> Self {
        Self {
            tail: AtomicUsize::new(EMPTY),
        }
    }

    /// The word published into grant cells to hand this lock over.
    #[inline]
    pub fn identity(&self) -> usize {
        self as *const Self as usize
    }

    /// Current tail value (EMPTY when unlocked).
    pub fn tail(&self) -> usize {
        self.tail.load(Ordering::Acquire)
    }

    pub fn is_locked(&self) -> bool {
        self.tail() != EMPTY
    }

    pub fn acquire(&self, ctx: &ThreadContext, variant: HemlockVariant, policy: WaitPolicy) {
        let lock = self.identity();
        ctx.check_acquire(lock);
        let own = ctx.grant();
        if variant == HemlockVariant::Overlap {
            // A residual hand-over of this very lock must be collected first,
            // or the next arrival would mistake it for its own grant.
            let mut spin = ctx.spinner();
            while own.value.load(Ordering::Acquire) == lock {
                spin.spin();
            }
        }
        let me = ctx.grant_identity();
        let pred = ctx.doorstep(lock, || self.tail.swap(me, Ordering::AcqRel));
        debug_assert_ne!(pred, me, "tail swap returned the caller's own identity");
        if pred != EMPTY {
            // SAFETY: `pred` is queued ahead of us on this lock, so its
            // context (and registry) is alive until it has handed over.
            let slot = unsafe { Slot::from_identity(pred) };
            if variant == HemlockVariant::OptimizedHandOver1 {
                // Announce ourselves; a hint only, so a busy cell is left alone.
                let _ = slot.grant.value.compare_exchange(
                    EMPTY,
                    lock | SUCCESSOR_FLAG,
                    Ordering::AcqRel,
                    Ordering::Relaxed,
                );
            }
            let waiters = slot.gauge.0.enter();
            ctx.census().observe_waiters(waiters);
            grant_wait(&slot.grant, lock, policy, ctx);
            slot.gauge.0.leave();
        }
        ctx.note_acquired(lock);
    }

    /// Single attempt; never waits and never queues.
    pub fn try_acquire(&self, ctx: &ThreadContext, variant: HemlockVariant) -> bool {
        let lock = self.identity();
        ctx.check_acquire(lock);
        if variant == HemlockVariant::Overlap && ctx.grant().value.load(Ordering::Acquire) == lock {
            return false;
        }
        let me = ctx.grant_identity();
        let ok = ctx.doorstep(lock, || {
            self.tail
                .compare_exchange(EMPTY, me, Ordering::AcqRel, Ordering::Relaxed)
                .is_ok()
        });
        if ok {
            ctx.note_acquired(lock);
        } else {
            ctx.cancel_doorstep(lock);
        }
        ok
    }

    /// # Safety
    ///
    /// The caller must hold the lock through `ctx`. Must not be used with
    /// [`HemlockVariant::AggressiveHandOver`]; see
    /// [`release_aggressive`](Self::release_aggressive).
    pub unsafe fn release(&self, ctx: &ThreadContext, variant: HemlockVariant, policy: WaitPolicy) {
        debug_assert_ne!(variant, HemlockVariant::AggressiveHandOver);
        self.release_any(ctx, variant, policy)
    }

    /// Aggressive hand-over release: publishes the grant before trying the
    /// tail. The `'static` bound is what makes this sound.
    ///
    /// # Safety
    ///
    /// The caller must hold the lock through `ctx`.
    pub unsafe fn release_aggressive(&'static self, ctx: &ThreadContext, policy: WaitPolicy) {
        self.release_any(ctx, HemlockVariant::AggressiveHandOver, policy)
    }

    /// # Safety
    ///
    /// As [`release`](Self::release); for the aggressive variant the lock
    /// must additionally outlive every thread that may still be inside
    /// `release_any` on it.
    pub(crate) unsafe fn release_any(
        &self,
        ctx: &ThreadContext,
        variant: HemlockVariant,
        policy: WaitPolicy,
    ) {
        let lock = self.identity();
        ctx.note_released(lock);
        let me = ctx.grant_identity();
        let grant = ctx.grant();
        match variant {
            HemlockVariant::Base => {
                if self.release_uncontended(me) {
                    return;
                }
                debug_assert!(is_idle(grant.value.load(Ordering::Relaxed)));
                grant.value.store(lock, Ordering::Release);
                await_ack(grant, policy, ctx, |v| v != lock);
            }
            HemlockVariant::Overlap => {
                if self.release_uncontended(me) {
                    return;
                }
                await_ack(grant, policy, ctx, is_idle);
                grant.value.store(lock, Ordering::Release);
            }
            HemlockVariant::AggressiveHandOver => {
                grant.value.store(lock, Ordering::Release);
                if self.release_uncontended(me) {
                    grant.value.store(EMPTY, Ordering::Relaxed);
                    return;
                }
                // The successor may already have come and gone, leaving the
                // tail EMPTY; the acknowledgment has then happened too.
                await_ack(grant, policy, ctx, |v| v != lock);
            }
            HemlockVariant::OptimizedHandOver1 => {
                if grant.value.load(Ordering::Acquire) == lock | SUCCESSOR_FLAG {
                    grant.value.store(lock, Ordering::Release);
                } else {
                    if self.release_uncontended(me) {
                        return;
                    }
                    // May overwrite another lock's successor flag; that only
                    // costs that lock its fast path.
                    grant.value.store(lock, Ordering::Release);
                }
                // Once acknowledged, another successor may flag the cell, so
                // wait for "no longer ours" rather than for EMPTY.
                await_ack(grant, policy, ctx, |v| v != lock);
            }
            HemlockVariant::OptimizedHandOver2 => {
                if self.tail.load(Ordering::Relaxed) == me && self.release_uncontended(me) {
                    return;
                }
                grant.value.store(lock, Ordering::Release);
                await_ack(grant, policy, ctx, |v| v != lock);
            }
        }
    }

    #[inline]
    fn release_uncontended(&self, me: usize) -> bool {
        self.tail
            .compare_exchange(me, EMPTY, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
    }
}

/// EMPTY, or only carrying an oho1 successor flag.
#[inline]
fn is_idle(v: usize) -> bool {
    v == EMPTY || v & SUCCESSOR_FLAG != 0
}

/// Waits until `cell` holds `want`, then empties it.
///
/// At most one thread may wait on any one `(cell, want)` pair at a time.
#[inline]
pub fn grant_wait(cell: &GrantCell, want: usize, policy: WaitPolicy, ctx: &ThreadContext) {
    let mut spin = ctx.spinner();
    match policy {
        WaitPolicy::NaiveLoad => {
            while cell.value.load(Ordering::Acquire) != want {
                spin.spin();
            }
            cell.value.store(EMPTY, Ordering::Release);
        }
        WaitPolicy::CtrCas => {
            while cell
                .value
                .compare_exchange_weak(want, EMPTY, Ordering::AcqRel, Ordering::Relaxed)
                .is_err()
            {
                spin.spin();
            }
        }
        WaitPolicy::CtrFaa0 => {
            while cell.value.fetch_add(0, Ordering::Acquire) != want {
                spin.spin();
            }
            cell.value.store(EMPTY, Ordering::Release);
        }
    }
}

/// Owner-side wait on its own cell. Under the CTR policies the cell is
/// polled with fetch-and-add of zero so it stays writable for the next
/// publish.
///
/// The acknowledgment is the successor replacing the published identity
/// with EMPTY. Waiting for "no longer the published identity" instead of
/// "EMPTY" is the same thing unless hemlock-oho1 successors share the cell,
/// in which case a fresh successor flag may follow the acknowledgment.
#[inline]
fn await_ack(
    grant: &GrantCell,
    policy: WaitPolicy,
    ctx: &ThreadContext,
    done: impl Fn(usize) -> bool,
) {
    let mut spin = ctx.spinner();
    loop {
        let v = match policy {
            WaitPolicy::NaiveLoad => grant.value.load(Ordering::Acquire),
            WaitPolicy::CtrCas | WaitPolicy::CtrFaa0 => grant.value.fetch_add(0, Ordering::Acquire),
        };
        if done(v) {
            return;
        }
        spin.spin();
    }
}

impl RawLock for HemlockLock {
    fn lock(&self, ctx: &ThreadContext) {
        self.acquire(ctx, HemlockVariant::Base, WaitPolicy::CtrCas)
    }

    unsafe fn unlock(&self, ctx: &ThreadContext) {
        self.release(ctx, HemlockVariant::Base, WaitPolicy::CtrCas)
    }
}

use std::cell::UnsafeCell;
use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicBool, AtomicPtr, Ordering};

use super::context::ThreadContext;
use super::RawLock;
use crate::instrumentation::WaiterGauge;

#[cfg_attr(not(feature = "pad128"), repr(C, align(64)))]
#[cfg_attr(feature = "pad128", repr(C, align(128)))]
#[derive(Debug)]
pub(crate) struct McsNode {
    next: AtomicPtr<McsNode>,
    locked: AtomicBool,
    gauge: WaiterGauge,
}

impl McsNode {
    fn alloc() -> NonNull<McsNode> {
        let node = Box::new(McsNode {
            next: AtomicPtr::new(ptr::null_mut()),
            locked: AtomicBool::new(false),
            gauge: WaiterGauge::new(),
        });
        NonNull::from(Box::leak(node))
    }

    /// # Safety
    ///
    /// `node` came from [`McsNode::alloc`] and is no longer referenced.
    pub(crate) unsafe fn free(node: NonNull<McsNode>) {
        drop(Box::from_raw(node.as_ptr()));
    }
}

impl ThreadContext {
    fn mcs_pop(&self) -> NonNull<McsNode> {
        if let Some(node) = self.mcs_free.borrow_mut().pop() {
            return node;
        }
        let live = self.mcs_live.get() + 1;
        self.mcs_live.set(live);
        self.mcs_high.set(self.mcs_high.get().max(live));
        McsNode::alloc()
    }

    fn mcs_push(&self, node: NonNull<McsNode>) {
        self.mcs_free.borrow_mut().push(node);
    }
}

/// Mellor-Crummey–Scott queue lock.
///
/// The owner's queue node is kept in `head` so `unlock` needs no token.
/// Nodes come from a per-thread free stack.
#[derive(Debug)]
pub struct McsLock {
    tail: AtomicPtr<McsNode>,
    head: UnsafeCell<*mut McsNode>,
}

// SAFETY: `head` is only touched by the current owner.
unsafe impl Send for McsLock {}
unsafe impl Sync for McsLock {}

impl Default for McsLock {
    fn default() -> Self {
        Self::new()
    }
}

impl McsLock {
    pub const fn new() -> Self {
        Self {
            tail: AtomicPtr::new(ptr::null_mut()),
            head: UnsafeCell::new(ptr::null_mut()),
        }
    }

    fn identity(&self) -> usize {
        self as *const Self as usize
    }

    pub fn is_locked(&self) -> bool {
        !self.tail.load(Ordering::Acquire).is_null()
    }

    pub fn try_lock(&self, ctx: &ThreadContext) -> bool {
        let id = self.identity();
        ctx.check_acquire(id);
        let node = ctx.mcs_pop();
        // SAFETY: popped nodes are exclusively ours.
        unsafe {
            let n = node.as_ref();
            n.next.store(ptr::null_mut(), Ordering::Relaxed);
            n.locked.store(true, Ordering::Relaxed);
        }
        let ok = ctx.doorstep(id, || {
            self.tail
                .compare_exchange(ptr::null_mut(), node.as_ptr(), Ordering::AcqRel, Ordering::Relaxed)
                .is_ok()
        });
        if ok {
            // SAFETY: we own the lock.
            unsafe { *self.head.get() = node.as_ptr() };
            ctx.note_acquired(id);
        } else {
            ctx.cancel_doorstep(id);
            ctx.mcs_push(node);
        }
        ok
    }
}

impl RawLock for McsLock {
    fn lock(&self, ctx: &ThreadContext) {
        let id = self.identity();
        ctx.check_acquire(id);
        let node = ctx.mcs_pop();
        // SAFETY: popped nodes are exclusively ours until published below.
        let n = unsafe { node.as_ref() };
        n.next.store(ptr::null_mut(), Ordering::Relaxed);
        n.locked.store(true, Ordering::Relaxed);
        let pred = ctx.doorstep(id, || self.tail.swap(node.as_ptr(), Ordering::AcqRel));
        debug_assert_ne!(pred, node.as_ptr());
        if !pred.is_null() {
            // SAFETY: the predecessor cannot recycle its node before it has
            // seen this link.
            unsafe { (*pred).next.store(node.as_ptr(), Ordering::Release) };
            let waiters = n.gauge.enter();
            ctx.census().observe_waiters(waiters);
            let mut spin = ctx.spinner();
            while n.locked.load(Ordering::Acquire) {
                spin.spin();
            }
            n.gauge.leave();
        }
        // SAFETY: we own the lock.
        unsafe { *self.head.get() = node.as_ptr() };
        ctx.note_acquired(id);
    }

    unsafe fn unlock(&self, ctx: &ThreadContext) {
        ctx.note_released(self.identity());
        let node = *self.head.get();
        let n = &*node;
        let mut next = n.next.load(Ordering::Acquire);
        if next.is_null() {
            if self
                .tail
                .compare_exchange(node, ptr::null_mut(), Ordering::AcqRel, Ordering::Relaxed)
                .is_ok()
            {
                ctx.mcs_push(NonNull::new_unchecked(node));
                return;
            }
            // A successor swapped in but has not linked itself yet.
            let mut spin = ctx.spinner();
            loop {
                next = n.next.load(Ordering::Acquire);
                if !next.is_null() {
                    break;
                }
                spin.spin();
            }
        }
        (*next).locked.store(false, Ordering::Release);
        ctx.mcs_push(NonNull::new_unchecked(node));
    }
}

impl Drop for McsLock {
    fn drop(&mut self) {
        debug_assert!(self.tail.get_mut().is_null(), "MCS lock dropped while held");
    }
}

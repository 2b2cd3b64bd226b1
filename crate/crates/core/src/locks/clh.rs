use std::cell::{Cell, UnsafeCell};
use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicBool, AtomicPtr, Ordering};

use super::context::ThreadContext;
use super::RawLock;
use crate::instrumentation::WaiterGauge;

#[cfg_attr(not(feature = "pad128"), repr(C, align(64)))]
#[cfg_attr(feature = "pad128", repr(C, align(128)))]
#[derive(Debug)]
pub(crate) struct ClhNode {
    succ_must_wait: AtomicBool,
    gauge: WaiterGauge,
}

thread_local! {
    static ALLOCATED: Cell<usize> = const { Cell::new(0) };
    static FREED: Cell<usize> = const { Cell::new(0) };
}

/// CLH node allocations and frees performed by the calling thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClhNodeStats {
    pub allocated: usize,
    pub freed: usize,
}

pub fn clh_node_stats() -> ClhNodeStats {
    ClhNodeStats {
        allocated: ALLOCATED.with(Cell::get),
        freed: FREED.with(Cell::get),
    }
}

impl ClhNode {
    fn alloc(must_wait: bool) -> NonNull<ClhNode> {
        ALLOCATED.with(|c| c.set(c.get() + 1));
        let node = Box::new(ClhNode {
            succ_must_wait: AtomicBool::new(must_wait),
            gauge: WaiterGauge::new(),
        });
        NonNull::from(Box::leak(node))
    }

    /// # Safety
    ///
    /// `node` came from [`ClhNode::alloc`] and is no longer referenced.
    pub(crate) unsafe fn free(node: NonNull<ClhNode>) {
        FREED.with(|c| c.set(c.get() + 1));
        drop(Box::from_raw(node.as_ptr()));
    }
}

/// CLH queue lock with a standard (context-free) interface.
///
/// Waiters spin on their predecessor's node. After acquiring, a thread
/// adopts the predecessor's node as a spare, so nodes migrate between
/// threads and locks. The lock starts with a dummy node that is freed
/// together with the lock.
#[derive(Debug)]
pub struct ClhLock {
    tail: AtomicPtr<ClhNode>,
    head: UnsafeCell<*mut ClhNode>,
}

// SAFETY: `head` is only touched by the current owner.
unsafe impl Send for ClhLock {}
unsafe impl Sync for ClhLock {}

impl Default for ClhLock {
    fn default() -> Self {
        Self::new()
    }
}

impl ClhLock {
    pub fn new() -> Self {
        Self {
            tail: AtomicPtr::new(ClhNode::alloc(false).as_ptr()),
            head: UnsafeCell::new(ptr::null_mut()),
        }
    }

    fn identity(&self) -> usize {
        self as *const Self as usize
    }

    pub fn is_locked(&self) -> bool {
        // SAFETY: the tail always points at a live node.
        unsafe { (*self.tail.load(Ordering::Acquire)).succ_must_wait.load(Ordering::Acquire) }
    }
}

impl RawLock for ClhLock {
    fn lock(&self, ctx: &ThreadContext) {
        let id = self.identity();
        ctx.check_acquire(id);
        let node = ctx.clh_free.borrow_mut().pop().unwrap_or_else(|| ClhNode::alloc(true));
        // SAFETY: spare nodes are exclusively ours until published.
        unsafe { node.as_ref().succ_must_wait.store(true, Ordering::Relaxed) };
        let pred = ctx.doorstep(id, || self.tail.swap(node.as_ptr(), Ordering::AcqRel));
        // SAFETY: the predecessor's node stays alive until its successor
        // (us) adopts it.
        let p = unsafe { &*pred };
        if p.succ_must_wait.load(Ordering::Acquire) {
            let waiters = p.gauge.enter();
            ctx.census().observe_waiters(waiters);
            let mut spin = ctx.spinner();
            while p.succ_must_wait.load(Ordering::Acquire) {
                spin.spin();
            }
            p.gauge.leave();
        }
        // SAFETY: nobody else references `pred` any more.
        ctx.clh_free
            .borrow_mut()
            .push(unsafe { NonNull::new_unchecked(pred) });
        unsafe { *self.head.get() = node.as_ptr() };
        ctx.note_acquired(id);
    }

    unsafe fn unlock(&self, ctx: &ThreadContext) {
        ctx.note_released(self.identity());
        let node = *self.head.get();
        (*node).succ_must_wait.store(false, Ordering::Release);
    }
}

impl Drop for ClhLock {
    fn drop(&mut self) {
        let node = *self.tail.get_mut();
        // SAFETY: with no holder or waiter the tail node is the lock's own dummy.
        unsafe {
            debug_assert!(!(*node).succ_must_wait.load(Ordering::Relaxed), "CLH lock dropped while held");
            ClhNode::free(NonNull::new_unchecked(node));
        }
    }
}

use std::sync::atomic::{AtomicUsize, Ordering};

use super::context::ThreadContext;
use super::RawLock;

/// Ticket lock: two counters, admission in strict ticket order.
#[derive(Debug, Default)]
pub struct TicketLock {
    next_ticket: AtomicUsize,
    now_serving: AtomicUsize,
}

impl TicketLock {
    pub const fn new() -> Self {
        Self {
            next_ticket: AtomicUsize::new(0),
            now_serving: AtomicUsize::new(0),
        }
    }

    fn identity(&self) -> usize {
        self as *const Self as usize
    }

    /// Tickets handed out but not yet retired: 1 for a held lock with no waiters.
    ///
    /// Under concurrent use this may undercount but never overcounts: the
    /// ticket counter is read before the serving counter.
    pub fn outstanding(&self) -> usize {
        let next = self.next_ticket.load(Ordering::Acquire);
        let serving = self.now_serving.load(Ordering::Acquire);
        let n = next.wrapping_sub(serving);
        if n > usize::MAX / 2 {
            0
        } else {
            n
        }
    }

    pub fn try_lock(&self, ctx: &ThreadContext) -> bool {
        let id = self.identity();
        ctx.check_acquire(id);
        let serving = self.now_serving.load(Ordering::Acquire);
        let ok = ctx.doorstep(id, || {
            self.next_ticket
                .compare_exchange(serving, serving.wrapping_add(1), Ordering::AcqRel, Ordering::Relaxed)
                .is_ok()
        });
        if ok {
            ctx.note_acquired(id);
        } else {
            ctx.cancel_doorstep(id);
        }
        ok
    }
}

impl RawLock for TicketLock {
    fn lock(&self, ctx: &ThreadContext) {
        let id = self.identity();
        ctx.check_acquire(id);
        let ticket = ctx.doorstep(id, || self.next_ticket.fetch_add(1, Ordering::AcqRel));
        if self.now_serving.load(Ordering::Acquire) != ticket {
            if cfg!(feature = "instrument") {
                // Everyone holding a ticket except the owner spins on `now_serving`.
                let waiting = self.outstanding().saturating_sub(1);
                ctx.census().observe_waiters(waiting);
            }
            let mut spin = ctx.spinner();
            while self.now_serving.load(Ordering::Acquire) != ticket {
                spin.spin();
            }
        }
        ctx.note_acquired(id);
    }

    unsafe fn unlock(&self, ctx: &ThreadContext) {
        ctx.note_released(self.identity());
        let serving = self.now_serving.load(Ordering::Relaxed);
        self.now_serving.store(serving.wrapping_add(1), Ordering::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locks::Registry;

    #[test]
    fn uncontended_ticket_goes_from_zero_to_one() {
        let reg = Registry::new();
        let ctx = reg.register().unwrap();
        let lock = TicketLock::new();
        assert_eq!(lock.outstanding(), 0);
        lock.lock(&ctx);
        assert_eq!(lock.outstanding(), 1);
        unsafe { lock.unlock(&ctx) };
        assert_eq!(lock.outstanding(), 0);
    }

    #[test]
    fn try_lock_fails_when_held() {
        let reg = Registry::new();
        let ctx = reg.register().unwrap();
        let lock = TicketLock::new();
        assert!(lock.try_lock(&ctx));
        let other = TicketLock::new();
        assert!(other.try_lock(&ctx));
        unsafe {
            other.unlock(&ctx);
            lock.unlock(&ctx);
        }
        assert_eq!(lock.outstanding(), 0);
    }
}

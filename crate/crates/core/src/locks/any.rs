use std::ops::Deref;
use std::sync::Arc;

use super::context::ThreadContext;
use super::hemlock::{HemlockLock, HemlockVariant};
use super::{ClhLock, LockAlgorithm, LockError, McsLock, RawLock, TicketLock, WaitPolicy};

/// Any of the nine algorithms, selected at run time.
#[derive(Debug)]
pub enum AnyLock {
    Hemlock {
        lock: HemlockLock,
        variant: HemlockVariant,
        policy: WaitPolicy,
    },
    Mcs(McsLock),
    Clh(ClhLock),
    Ticket(TicketLock),
}

impl AnyLock {
    /// Builds a lock of the given algorithm. `policy` only affects Hemlock.
    ///
    /// Fails for `hemlock-ah`, which needs [`AnyLock::new_static`].
    pub fn new(algorithm: LockAlgorithm, policy: WaitPolicy) -> Result<Self, LockError> {
        if algorithm.requires_static_lifetime() {
            return Err(LockError::RequiresStaticLifetime(algorithm));
        }
        Ok(Self::build(algorithm, policy))
    }

    /// Builds a lock that is never freed. Allowed for every algorithm.
    pub fn new_static(algorithm: LockAlgorithm, policy: WaitPolicy) -> &'static Self {
        Box::leak(Box::new(Self::build(algorithm, policy)))
    }

    fn build(algorithm: LockAlgorithm, policy: WaitPolicy) -> Self {
        match algorithm.hemlock_variant() {
            Some(variant) => AnyLock::Hemlock {
                lock: HemlockLock::new(),
                variant,
                policy,
            },
            None => match algorithm {
                LockAlgorithm::Mcs => AnyLock::Mcs(McsLock::new()),
                LockAlgorithm::Clh => AnyLock::Clh(ClhLock::new()),
                _ => AnyLock::Ticket(TicketLock::new()),
            },
        }
    }

    /// Identity used by held-sets and doorstep logs.
    pub fn identity(&self) -> usize {
        match self {
            AnyLock::Hemlock { lock, .. } => lock.identity(),
            AnyLock::Mcs(l) => l as *const McsLock as usize,
            AnyLock::Clh(l) => l as *const ClhLock as usize,
            AnyLock::Ticket(l) => l as *const TicketLock as usize,
        }
    }

    /// `None` for CLH, which has no single-attempt acquire.
    pub fn try_lock(&self, ctx: &ThreadContext) -> Option<bool> {
        match self {
            AnyLock::Hemlock { lock, variant, .. } => Some(lock.try_acquire(ctx, *variant)),
            AnyLock::Mcs(l) => Some(l.try_lock(ctx)),
            AnyLock::Clh(_) => None,
            AnyLock::Ticket(l) => Some(l.try_lock(ctx)),
        }
    }
}

impl RawLock for AnyLock {
    #[inline]
    fn lock(&self, ctx: &ThreadContext) {
        match self {
            AnyLock::Hemlock { lock, variant, policy } => lock.acquire(ctx, *variant, *policy),
            AnyLock::Mcs(l) => l.lock(ctx),
            AnyLock::Clh(l) => l.lock(ctx),
            AnyLock::Ticket(l) => l.lock(ctx),
        }
    }

    #[inline]
    unsafe fn unlock(&self, ctx: &ThreadContext) {
        match self {
            // An aggressive-hand-over lock can only be built by `new_static`.
            AnyLock::Hemlock { lock, variant, policy } => lock.release_any(ctx, *variant, *policy),
            AnyLock::Mcs(l) => l.unlock(ctx),
            AnyLock::Clh(l) => l.unlock(ctx),
            AnyLock::Ticket(l) => l.unlock(ctx),
        }
    }
}

/// A set of locks of one algorithm, shareable across threads.
///
/// Sets of `hemlock-ah` locks are leaked so they stay valid for the rest of
/// the process.
#[derive(Clone, Debug)]
pub enum LockSet {
    Owned(Arc<[AnyLock]>),
    Static(&'static [AnyLock]),
}

impl LockSet {
    pub fn new(algorithm: LockAlgorithm, policy: WaitPolicy, count: usize) -> Self {
        let locks = (0..count).map(|_| AnyLock::build(algorithm, policy));
        if algorithm.requires_static_lifetime() {
            LockSet::Static(Box::leak(locks.collect::<Vec<_>>().into_boxed_slice()))
        } else {
            LockSet::Owned(locks.collect())
        }
    }
}

impl Deref for LockSet {
    type Target = [AnyLock];

    fn deref(&self) -> &[AnyLock] {
        match self {
            LockSet::Owned(l) => l,
            LockSet::Static(l) => l,
        }
    }
}

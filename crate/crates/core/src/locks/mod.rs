//! Lock algorithms.
//!
//! Every lock here is *context-free*: nothing has to be carried from a
//! `lock` call to the matching `unlock`. The per-thread state each
//! algorithm needs lives in a [`ThreadContext`] obtained from a
//! [`Registry`].

mod any;
mod clh;
mod context;
mod grant;
mod hemlock;
mod mcs;
mod space;
mod spin;
mod ticket;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

pub use any::{AnyLock, LockSet};
pub use clh::{clh_node_stats, ClhLock, ClhNodeStats};
pub use context::{with_current, Registry, ThreadContext};
pub use grant::{GrantCell, CELL_ALIGN, EMPTY};
pub use hemlock::{grant_wait, HemlockLock, HemlockVariant};
pub use mcs::McsLock;
pub use space::{space_usage, SpaceUsage};
pub use spin::{hardware_threads, SpinConfig, Spinner};
pub use ticket::TicketLock;

/// How a waiter polls a mailbox word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaitPolicy {
    /// Plain loads; the successor then clears the word with a store.
    NaiveLoad,
    /// Poll with compare-and-swap from the awaited value to EMPTY.
    CtrCas,
    /// Poll with fetch-and-add of zero, then clear with a store.
    CtrFaa0,
}

impl WaitPolicy {
    pub const ALL: [WaitPolicy; 3] = [WaitPolicy::NaiveLoad, WaitPolicy::CtrCas, WaitPolicy::CtrFaa0];

    pub fn name(self) -> &'static str {
        match self {
            WaitPolicy::NaiveLoad => "naive-load",
            WaitPolicy::CtrCas => "ctr-cas",
            WaitPolicy::CtrFaa0 => "ctr-faa0",
        }
    }
}

/// The nine lock algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LockAlgorithm {
    HemlockNaive,
    HemlockCtr,
    HemlockOverlap,
    HemlockAh,
    HemlockOho1,
    HemlockOho2,
    Mcs,
    Clh,
    Ticket,
}

impl LockAlgorithm {
    pub const ALL: [LockAlgorithm; 9] = [
        LockAlgorithm::HemlockNaive,
        LockAlgorithm::HemlockCtr,
        LockAlgorithm::HemlockOverlap,
        LockAlgorithm::HemlockAh,
        LockAlgorithm::HemlockOho1,
        LockAlgorithm::HemlockOho2,
        LockAlgorithm::Mcs,
        LockAlgorithm::Clh,
        LockAlgorithm::Ticket,
    ];

    pub const HEMLOCK: [LockAlgorithm; 6] = [
        LockAlgorithm::HemlockNaive,
        LockAlgorithm::HemlockCtr,
        LockAlgorithm::HemlockOverlap,
        LockAlgorithm::HemlockAh,
        LockAlgorithm::HemlockOho1,
        LockAlgorithm::HemlockOho2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LockAlgorithm::HemlockNaive => "hemlock-naive",
            LockAlgorithm::HemlockCtr => "hemlock-ctr",
            LockAlgorithm::HemlockOverlap => "hemlock-overlap",
            LockAlgorithm::HemlockAh => "hemlock-ah",
            LockAlgorithm::HemlockOho1 => "hemlock-oho1",
            LockAlgorithm::HemlockOho2 => "hemlock-oho2",
            LockAlgorithm::Mcs => "mcs",
            LockAlgorithm::Clh => "clh",
            LockAlgorithm::Ticket => "ticket",
        }
    }

    pub fn hemlock_variant(self) -> Option<HemlockVariant> {
        Some(match self {
            LockAlgorithm::HemlockNaive => HemlockVariant::Base,
            LockAlgorithm::HemlockCtr => HemlockVariant::Base,
            LockAlgorithm::HemlockOverlap => HemlockVariant::Overlap,
            LockAlgorithm::HemlockAh => HemlockVariant::AggressiveHandOver,
            LockAlgorithm::HemlockOho1 => HemlockVariant::OptimizedHandOver1,
            LockAlgorithm::HemlockOho2 => HemlockVariant::OptimizedHandOver2,
            _ => return None,
        })
    }

    pub fn is_hemlock(self) -> bool {
        self.hemlock_variant().is_some()
    }

    /// The policy a Hemlock algorithm runs with when none is given:
    /// `hemlock-naive` polls with loads, every other variant with CAS.
    pub fn default_policy(self) -> WaitPolicy {
        match self {
            LockAlgorithm::HemlockNaive => WaitPolicy::NaiveLoad,
            _ => WaitPolicy::CtrCas,
        }
    }

    /// The aggressive hand-over variant touches the lock after ownership may
    /// already have moved on, so the lock must never be freed.
    pub fn requires_static_lifetime(self) -> bool {
        self == LockAlgorithm::HemlockAh
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unknown lock algorithm `{0}`")]
    Algorithm(String),
    #[error("unknown wait policy `{0}`")]
    Policy(String),
}

impl FromStr for LockAlgorithm {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LockAlgorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ParseError::Algorithm(s.to_owned()))
    }
}

impl FromStr for WaitPolicy {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WaitPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ParseError::Policy(s.to_owned()))
    }
}

impl fmt::Display for LockAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for WaitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LockError {
    #[error("thread is already registered with this registry")]
    AlreadyRegistered,
    #[error("{0} may touch the lock after handing it over; build it with a 'static lifetime")]
    RequiresStaticLifetime(LockAlgorithm),
}

/// A mutual-exclusion lock driven through a per-thread context.
pub trait RawLock: Send + Sync {
    fn lock(&self, ctx: &ThreadContext);

    /// # Safety
    ///
    /// The calling thread must hold the lock, acquired through `ctx`.
    unsafe fn unlock(&self, ctx: &ThreadContext);

    /// Runs `f` with the lock held.
    fn with<R>(&self, ctx: &ThreadContext, f: impl FnOnce() -> R) -> R
    where
        Self: Sized,
    {
        self.lock(ctx);
        let r = f();
        // SAFETY: acquired just above on the same context.
        unsafe { self.unlock(ctx) };
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in LockAlgorithm::ALL {
            assert_eq!(a.name().parse::<LockAlgorithm>().unwrap(), a);
        }
        for p in WaitPolicy::ALL {
            assert_eq!(p.name().parse::<WaitPolicy>().unwrap(), p);
        }
        assert!("hemlock".parse::<LockAlgorithm>().is_err());
        assert!("ctr".parse::<WaitPolicy>().is_err());
    }

    #[test]
    fn only_ah_needs_static_locks() {
        let gated: Vec<_> = LockAlgorithm::ALL
            .into_iter()
            .filter(|a| a.requires_static_lifetime())
            .collect();
        assert_eq!(gated, vec![LockAlgorithm::HemlockAh]);
    }
}

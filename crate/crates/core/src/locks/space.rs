use std::mem::size_of;
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicUsize};

use serde::Serialize;

use super::clh::ClhNode;
use super::grant::GrantCell;
use super::mcs::McsNode;
use super::{ClhLock, HemlockLock, LockAlgorithm, McsLock, TicketLock};

const WORD: usize = size_of::<usize>();

/// Memory footprint of one lock family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpaceUsage {
    pub family: &'static str,
    /// Lock body, unpadded.
    pub lock_words: usize,
    pub lock_bytes: usize,
    /// Per-thread state reserved for locking, unpadded and as allocated.
    pub thread_words: usize,
    pub thread_bytes_padded: usize,
    /// Queue element, unpadded and as allocated; zero if there is none.
    pub element_words: usize,
    pub element_bytes_padded: usize,
    /// Queue elements a fresh lock owns.
    pub initial_elements: usize,
}

/// Rows for Hemlock, MCS, CLH and Ticket, measured from the types.
pub fn space_usage() -> [SpaceUsage; 4] {
    let words = |bytes: usize| bytes.div_ceil(WORD);
    let mcs_element = size_of::<AtomicPtr<McsNode>>() + size_of::<AtomicBool>();
    [
        SpaceUsage {
            family: "hemlock",
            lock_words: words(size_of::<HemlockLock>()),
            lock_bytes: size_of::<HemlockLock>(),
            thread_words: words(size_of::<AtomicUsize>()),
            thread_bytes_padded: size_of::<GrantCell>(),
            element_words: 0,
            element_bytes_padded: 0,
            initial_elements: 0,
        },
        SpaceUsage {
            family: "mcs",
            lock_words: words(size_of::<McsLock>()),
            lock_bytes: size_of::<McsLock>(),
            thread_words: 0,
            thread_bytes_padded: 0,
            element_words: words(mcs_element),
            element_bytes_padded: size_of::<McsNode>(),
            initial_elements: 0,
        },
        SpaceUsage {
            family: "clh",
            lock_words: words(size_of::<ClhLock>()),
            lock_bytes: size_of::<ClhLock>(),
            thread_words: 0,
            thread_bytes_padded: 0,
            element_words: words(size_of::<AtomicBool>()),
            element_bytes_padded: size_of::<ClhNode>(),
            initial_elements: 1,
        },
        SpaceUsage {
            family: "ticket",
            lock_words: words(size_of::<TicketLock>()),
            lock_bytes: size_of::<TicketLock>(),
            thread_words: 0,
            thread_bytes_padded: 0,
            element_words: 0,
            element_bytes_padded: 0,
            initial_elements: 0,
        },
    ]
}

impl SpaceUsage {
    pub fn of(algorithm: LockAlgorithm) -> SpaceUsage {
        let rows = space_usage();
        match algorithm {
            LockAlgorithm::Mcs => rows[1],
            LockAlgorithm::Clh => rows[2],
            LockAlgorithm::Ticket => rows[3],
            _ => rows[0],
        }
    }
}

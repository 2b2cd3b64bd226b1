use std::sync::atomic::AtomicUsize;

/// The empty mailbox / unlocked tail value.
pub const EMPTY: usize = 0;

/// Size of the isolation unit grant cells and queue nodes are padded to.
#[cfg(not(feature = "pad128"))]
pub const CELL_ALIGN: usize = 64;
#[cfg(feature = "pad128")]
pub const CELL_ALIGN: usize = 128;

/// A thread's mailbox: one atomic word, sole occupant of its cache line.
///
/// Holds EMPTY, the identity of a lock being handed over, or (hemlock-oho1
/// only) a lock identity with the low bit set, meaning "a successor for
/// this lock is waiting".
#[cfg_attr(not(feature = "pad128"), repr(C, align(64)))]
#[cfg_attr(feature = "pad128", repr(C, align(128)))]
#[derive(Debug, Default)]
pub struct GrantCell {
    pub value: AtomicUsize,
}

impl GrantCell {
    pub const fn new() -> Self {
        Self {
            value: AtomicUsize::new(EMPTY),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::mem;

    #[test]
    fn cell_fills_an_isolation_unit() {
        assert_eq!(mem::size_of::<GrantCell>(), CELL_ALIGN);
        assert_eq!(mem::align_of::<GrantCell>(), CELL_ALIGN);
        assert_eq!(mem::size_of::<AtomicUsize>(), mem::size_of::<usize>());
    }
}

//! Step-machine encodings of the lock algorithms.
//!
//! Each acquire or release is compiled into a short program for a tiny
//! register machine. Every instruction is one atomic step under sequential
//! consistency. Busy-wait loops are a single guarded [`Op::Await`] that is
//! enabled only once the awaited condition holds.

use super::{Action, Mutation};
use crate::locks::{HemlockVariant, LockAlgorithm, WaitPolicy};

pub(crate) type Reg = u8;
pub(crate) const PRED: Reg = 0;
pub(crate) const V: Reg = 1;
pub(crate) const NODE: Reg = 2;
pub(crate) const NEXT: Reg = 3;
pub(crate) const NREGS: usize = 4;

/// Operand values. Identities are small integers; see the machine layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Val {
    Empty,
    One,
    /// Identity of the lock the action is about.
    Lock,
    /// Lock identity with the successor flag set (oho1).
    LockFlagged,
    /// The acting thread's grant-cell identity.
    Me,
    /// The acting thread's MCS node for this lock.
    MyNode,
    Reg(Reg),
    RegPlusOne(Reg),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Addr {
    Tail,
    Serving,
    OwnGrant,
    /// Grant cell of the thread whose identity is in the register.
    GrantOf(Reg),
    /// MCS `next` field of the node in the register.
    NextOf(Reg),
    /// MCS `locked` field of the node in the register.
    LockedOf(Reg),
    /// CLH `succ_must_wait` flag of the node in the register.
    FlagOf(Reg),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cond {
    Eq(Val),
    Ne(Val),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Op {
    Swap { at: Addr, val: Val, dst: Reg },
    Cas { at: Addr, expect: Val, new: Val, dst: Reg },
    FetchInc { at: Addr, dst: Reg },
    Load { at: Addr, dst: Reg },
    Store { at: Addr, val: Val },
    /// Enabled iff `cond` holds for the word; then optionally stores into it
    /// in the same step.
    Await { at: Addr, cond: Cond, then_store: Option<Val> },
    /// Jump to `target` if `lhs` satisfies `cond`.
    Branch { lhs: Val, cond: Cond, target: u8 },
    PopNode { dst: Reg },
    PushNode { src: Reg },
}

/// Observation points attached to instructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mark {
    None,
    /// Entry doorstep (arrival atomic).
    Doorstep,
    /// Entry doorstep if the CAS succeeded.
    DoorstepIfOk,
    /// Exit doorstep: ownership released or conveyed.
    Exit,
    ExitIfOk,
    /// Acquire-side busy-wait on a shared word.
    Wait,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Instr {
    pub op: Op,
    pub mark: Mark,
}

/// Jump target meaning "end of program".
pub(crate) const END: u8 = u8::MAX;

#[derive(Default)]
struct Builder {
    code: Vec<Instr>,
}

impl Builder {
    fn push(&mut self, op: Op) -> &mut Self {
        self.code.push(Instr { op, mark: Mark::None });
        self
    }

    fn mark(&mut self, mark: Mark) -> &mut Self {
        self.code.last_mut().expect("mark on empty program").mark = mark;
        self
    }

    fn here(&self) -> u8 {
        self.code.len() as u8
    }

    fn finish(self) -> Vec<Instr> {
        let len = self.code.len() as u8;
        self.code
            .into_iter()
            .map(|mut i| {
                if let Op::Branch { target, .. } = &mut i.op {
                    if *target == END {
                        *target = len;
                    }
                }
                i
            })
            .collect()
    }
}

pub(crate) fn compile(
    algorithm: LockAlgorithm,
    policy: WaitPolicy,
    action: Action,
    mutation: Option<Mutation>,
) -> Vec<Instr> {
    let mut b = Builder::default();
    match (algorithm.hemlock_variant(), action) {
        (Some(variant), Action::Acquire(_)) => hemlock_acquire(&mut b, variant, policy, mutation),
        (Some(variant), Action::TryAcquire(_)) => hemlock_try(&mut b, variant),
        (Some(variant), Action::Release(_)) => hemlock_release(&mut b, variant, policy, mutation),
        (None, a) => match (algorithm, a) {
            (LockAlgorithm::Mcs, Action::Acquire(_)) => mcs_acquire(&mut b),
            (LockAlgorithm::Mcs, Action::TryAcquire(_)) => mcs_try(&mut b),
            (LockAlgorithm::Mcs, Action::Release(_)) => mcs_release(&mut b),
            (LockAlgorithm::Clh, Action::Acquire(_)) => clh_acquire(&mut b),
            (LockAlgorithm::Clh, Action::Release(_)) => clh_release(&mut b),
            (LockAlgorithm::Ticket, Action::Acquire(_)) => ticket_acquire(&mut b),
            (LockAlgorithm::Ticket, Action::TryAcquire(_)) => ticket_try(&mut b),
            (LockAlgorithm::Ticket, Action::Release(_)) => ticket_release(&mut b),
            (algo, a) => unreachable!("{a:?} for {algo} rejected by validation"),
        },
    }
    b.finish()
}

fn hemlock_acquire(b: &mut Builder, variant: HemlockVariant, policy: WaitPolicy, mutation: Option<Mutation>) {
    if variant == HemlockVariant::Overlap {
        b.push(Op::Await {
            at: Addr::OwnGrant,
            cond: Cond::Ne(Val::Lock),
            then_store: None,
        });
    }
    b.push(Op::Swap {
        at: Addr::Tail,
        val: Val::Me,
        dst: PRED,
    })
    .mark(Mark::Doorstep);
    b.push(Op::Branch {
        lhs: Val::Reg(PRED),
        cond: Cond::Eq(Val::Empty),
        target: END,
    });
    if variant == HemlockVariant::OptimizedHandOver1 {
        b.push(Op::Cas {
            at: Addr::GrantOf(PRED),
            expect: Val::Empty,
            new: Val::LockFlagged,
            dst: V,
        });
    }
    let clear = mutation != Some(Mutation::DropClearingStore);
    match policy {
        WaitPolicy::CtrCas => {
            b.push(Op::Await {
                at: Addr::GrantOf(PRED),
                cond: Cond::Eq(Val::Lock),
                then_store: clear.then_some(Val::Empty),
            })
            .mark(Mark::Wait);
        }
        // In a sequentially consistent model fetch-and-add of zero is a read.
        WaitPolicy::NaiveLoad | WaitPolicy::CtrFaa0 => {
            b.push(Op::Await {
                at: Addr::GrantOf(PRED),
                cond: Cond::Eq(Val::Lock),
                then_store: None,
            })
            .mark(Mark::Wait);
            if clear {
                b.push(Op::Store {
                    at: Addr::GrantOf(PRED),
                    val: Val::Empty,
                });
            }
        }
    }
}

fn hemlock_try(b: &mut Builder, variant: HemlockVariant) {
    let top = b.here();
    if variant == HemlockVariant::Overlap {
        // Residual hand-over of this lock: the attempt fails; retry.
        b.push(Op::Load {
            at: Addr::OwnGrant,
            dst: V,
        });
        b.push(Op::Branch {
            lhs: Val::Reg(V),
            cond: Cond::Eq(Val::Lock),
            target: top,
        });
    }
    b.push(Op::Cas {
        at: Addr::Tail,
        expect: Val::Empty,
        new: Val::Me,
        dst: V,
    })
    .mark(Mark::DoorstepIfOk);
    b.push(Op::Branch {
        lhs: Val::Reg(V),
        cond: Cond::Ne(Val::Empty),
        target: top,
    });
}

/// Uncontended release attempt: CAS the tail from `Me` to EMPTY and finish
/// on success. With the guard mutation the CAS becomes an unconditional
/// store of EMPTY and the release always finishes there.
fn release_cas(b: &mut Builder, mutation: Option<Mutation>, on_success: Option<Op>) {
    if mutation == Some(Mutation::DropUnlockCasGuard) {
        b.push(Op::Store {
            at: Addr::Tail,
            val: Val::Empty,
        })
        .mark(Mark::Exit);
        if let Some(op) = on_success {
            b.push(op);
        }
        b.push(Op::Branch {
            lhs: Val::Empty,
            cond: Cond::Eq(Val::Empty),
            target: END,
        });
        return;
    }
    b.push(Op::Cas {
        at: Addr::Tail,
        expect: Val::Me,
        new: Val::Empty,
        dst: V,
    })
    .mark(Mark::ExitIfOk);
    match on_success {
        None => {
            b.push(Op::Branch {
                lhs: Val::Reg(V),
                cond: Cond::Eq(Val::Me),
                target: END,
            });
        }
        Some(op) => {
            let skip = b.here() + 3;
            b.push(Op::Branch {
                lhs: Val::Reg(V),
                cond: Cond::Ne(Val::Me),
                target: skip,
            });
            b.push(op);
            b.push(Op::Branch {
                lhs: Val::Empty,
                cond: Cond::Eq(Val::Empty),
                target: END,
            });
        }
    }
}

fn await_ack(b: &mut Builder, cond: Cond) {
    b.push(Op::Await {
        at: Addr::OwnGrant,
        cond,
        then_store: None,
    });
}

fn publish(b: &mut Builder) {
    b.push(Op::Store {
        at: Addr::OwnGrant,
        val: Val::Lock,
    })
    .mark(Mark::Exit);
}

fn hemlock_release(b: &mut Builder, variant: HemlockVariant, _policy: WaitPolicy, mutation: Option<Mutation>) {
    match variant {
        HemlockVariant::Base => {
            release_cas(b, mutation, None);
            publish(b);
            await_ack(b, Cond::Eq(Val::Empty));
        }
        HemlockVariant::Overlap => {
            release_cas(b, mutation, None);
            await_ack(b, Cond::Eq(Val::Empty));
            publish(b);
        }
        HemlockVariant::AggressiveHandOver => {
            publish(b);
            release_cas(
                b,
                mutation,
                Some(Op::Store {
                    at: Addr::OwnGrant,
                    val: Val::Empty,
                }),
            );
            await_ack(b, Cond::Eq(Val::Empty));
        }
        HemlockVariant::OptimizedHandOver1 => {
            b.push(Op::Load {
                at: Addr::OwnGrant,
                dst: NEXT,
            });
            let slow = b.here() + 4;
            b.push(Op::Branch {
                lhs: Val::Reg(NEXT),
                cond: Cond::Ne(Val::LockFlagged),
                target: slow,
            });
            publish(b);
            await_ack(b, Cond::Ne(Val::Lock));
            b.push(Op::Branch {
                lhs: Val::Empty,
                cond: Cond::Eq(Val::Empty),
                target: END,
            });
            debug_assert_eq!(b.here(), slow);
            release_cas(b, mutation, None);
            publish(b);
            await_ack(b, Cond::Ne(Val::Lock));
        }
        HemlockVariant::OptimizedHandOver2 => {
            if mutation != Some(Mutation::DropUnlockCasGuard) {
                b.push(Op::Load { at: Addr::Tail, dst: V });
                let contended = b.here() + 3;
                b.push(Op::Branch {
                    lhs: Val::Reg(V),
                    cond: Cond::Ne(Val::Me),
                    target: contended,
                });
                release_cas(b, mutation, None);
                debug_assert_eq!(b.here(), contended);
            } else {
                release_cas(b, mutation, None);
            }
            publish(b);
            await_ack(b, Cond::Eq(Val::Empty));
        }
    }
}

fn mcs_init_node(b: &mut Builder) {
    b.push(Op::Store {
        at: Addr::NextOf(NODE),
        val: Val::Empty,
    });
    b.push(Op::Store {
        at: Addr::LockedOf(NODE),
        val: Val::One,
    });
}

fn mcs_acquire(b: &mut Builder) {
    // NODE holds MyNode from the start; see the machine's register init.
    mcs_init_node(b);
    b.push(Op::Swap {
        at: Addr::Tail,
        val: Val::MyNode,
        dst: PRED,
    })
    .mark(Mark::Doorstep);
    b.push(Op::Branch {
        lhs: Val::Reg(PRED),
        cond: Cond::Eq(Val::Empty),
        target: END,
    });
    b.push(Op::Store {
        at: Addr::NextOf(PRED),
        val: Val::MyNode,
    });
    b.push(Op::Await {
        at: Addr::LockedOf(NODE),
        cond: Cond::Eq(Val::Empty),
        then_store: None,
    })
    .mark(Mark::Wait);
}

fn mcs_try(b: &mut Builder) {
    let top = b.here();
    mcs_init_node(b);
    b.push(Op::Cas {
        at: Addr::Tail,
        expect: Val::Empty,
        new: Val::MyNode,
        dst: V,
    })
    .mark(Mark::DoorstepIfOk);
    b.push(Op::Branch {
        lhs: Val::Reg(V),
        cond: Cond::Ne(Val::Empty),
        target: top,
    });
}

fn mcs_release(b: &mut Builder) {
    b.push(Op::Load {
        at: Addr::NextOf(NODE),
        dst: NEXT,
    });
    let hand = b.here() + 4;
    b.push(Op::Branch {
        lhs: Val::Reg(NEXT),
        cond: Cond::Ne(Val::Empty),
        target: hand,
    });
    b.push(Op::Cas {
        at: Addr::Tail,
        expect: Val::MyNode,
        new: Val::Empty,
        dst: V,
    })
    .mark(Mark::ExitIfOk);
    b.push(Op::Branch {
        lhs: Val::Reg(V),
        cond: Cond::Eq(Val::MyNode),
        target: END,
    });
    // A successor swapped in but has not linked itself yet.
    b.push(Op::Await {
        at: Addr::NextOf(NODE),
        cond: Cond::Ne(Val::Empty),
        then_store: None,
    });
    debug_assert_eq!(b.here(), hand);
    b.push(Op::Load {
        at: Addr::NextOf(NODE),
        dst: NEXT,
    });
    b.push(Op::Store {
        at: Addr::LockedOf(NEXT),
        val: Val::Empty,
    })
    .mark(Mark::Exit);
}

fn clh_acquire(b: &mut Builder) {
    b.push(Op::PopNode { dst: NODE });
    b.push(Op::Store {
        at: Addr::FlagOf(NODE),
        val: Val::One,
    });
    b.push(Op::Swap {
        at: Addr::Tail,
        val: Val::Reg(NODE),
        dst: PRED,
    })
    .mark(Mark::Doorstep);
    b.push(Op::Await {
        at: Addr::FlagOf(PRED),
        cond: Cond::Eq(Val::Empty),
        then_store: None,
    })
    .mark(Mark::Wait);
    b.push(Op::PushNode { src: PRED });
}

fn clh_release(b: &mut Builder) {
    b.push(Op::Store {
        at: Addr::FlagOf(NODE),
        val: Val::Empty,
    })
    .mark(Mark::Exit);
}

fn ticket_acquire(b: &mut Builder) {
    b.push(Op::FetchInc {
        at: Addr::Tail,
        dst: PRED,
    })
    .mark(Mark::Doorstep);
    b.push(Op::Await {
        at: Addr::Serving,
        cond: Cond::Eq(Val::Reg(PRED)),
        then_store: None,
    })
    .mark(Mark::Wait);
}

fn ticket_try(b: &mut Builder) {
    let top = b.here();
    b.push(Op::Load {
        at: Addr::Serving,
        dst: NEXT,
    });
    b.push(Op::Cas {
        at: Addr::Tail,
        expect: Val::Reg(NEXT),
        new: Val::RegPlusOne(NEXT),
        dst: V,
    })
    .mark(Mark::DoorstepIfOk);
    b.push(Op::Branch {
        lhs: Val::Reg(V),
        cond: Cond::Ne(Val::Reg(NEXT)),
        target: top,
    });
}

fn ticket_release(b: &mut Builder) {
    b.push(Op::Load {
        at: Addr::Serving,
        dst: V,
    });
    b.push(Op::Store {
        at: Addr::Serving,
        val: Val::RegPlusOne(V),
    })
    .mark(Mark::Exit);
}

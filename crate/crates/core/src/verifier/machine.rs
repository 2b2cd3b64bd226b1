//! State layout and the single-step transition function.
//!
//! A state is a flat byte string:
//!
//! ```text
//! memory  | tail[m] | serving[m] | grant[n] | nodes...
//! threads | action pc holds inq assoc free_len free[2] regs[m * 4]   (x n)
//! locks   | pending[n]                                                (x m)
//! log     | admissions[acquires on k]                     (x m, optional)
//! ```
//!
//! Identities: thread `t` is `t + 1`; lock `k` is `2 (k + 1)`, with the
//! low bit as the successor flag; MCS node `(t, k)` is `1 + t m + k`; CLH
//! node `j` is `j + 1`, where lock `k` starts with dummy `k` and thread `t`
//! with spare `m + t`. Zero is EMPTY everywhere.

use std::fmt;

use thiserror::Error;

use super::program::{compile, Addr, Cond, Instr, Mark, Op, Reg, Val, NODE, NREGS};
use super::{Action, ModelConfig, Property, Trace};
use crate::locks::LockAlgorithm;

const ACTION: usize = 0;
const PC: usize = 1;
const HOLDS: usize = 2;
const INQ: usize = 3;
const ASSOC: usize = 4;
const FREE_LEN: usize = 5;
const FREE: usize = 6;
const FREE_CAP: usize = 2;
const REGS: usize = FREE + FREE_CAP;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Hemlock,
    Mcs,
    Clh,
    Ticket,
}

/// A reachable configuration of memory and thread control state.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ModelState(pub(crate) Box<[u8]>);

impl ModelState {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for ModelState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelState({:?})", &self.0[..])
    }
}

pub(crate) struct Successor {
    pub state: Box<[u8]>,
    pub violation: Option<Property>,
}

/// Outcome of replaying a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    pub state: ModelState,
    pub steps: usize,
    /// First property violated along the trace, if any.
    pub violation: Option<Property>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("step {step}: no thread {thread}")]
    NoSuchThread { step: usize, thread: usize },
    #[error("step {step}: thread {thread} cannot move")]
    Disabled { step: usize, thread: usize },
}

/// A model compiled from a [`ModelConfig`].
pub struct Machine {
    pub(crate) config: ModelConfig,
    family: Family,
    pub(crate) n: usize,
    pub(crate) m: usize,
    programs: Vec<Vec<Vec<Instr>>>,
    serving0: usize,
    grant0: usize,
    node0: usize,
    thread0: usize,
    stride: usize,
    pending0: usize,
    log_off: Vec<usize>,
    log_cap: Vec<usize>,
    len: usize,
}

impl Machine {
    pub(crate) fn new(config: ModelConfig) -> Self {
        let n = config.threads();
        let m = config.locks;
        let family = match config.algorithm {
            LockAlgorithm::Mcs => Family::Mcs,
            LockAlgorithm::Clh => Family::Clh,
            LockAlgorithm::Ticket => Family::Ticket,
            _ => Family::Hemlock,
        };
        let programs = config
            .scripts
            .iter()
            .map(|script| {
                script
                    .iter()
                    .map(|&a| compile(config.algorithm, config.policy, a, config.mutation))
                    .collect()
            })
            .collect();
        let serving0 = m;
        let grant0 = 2 * m;
        let node0 = grant0 + n;
        let nodes = match family {
            Family::Mcs => 2 * n * m,
            Family::Clh => m + n,
            _ => 0,
        };
        let thread0 = node0 + nodes;
        let stride = REGS + m * NREGS;
        let pending0 = thread0 + n * stride;
        let mut next = pending0 + m * n;
        let mut log_off = vec![0; m];
        let mut log_cap = vec![0; m];
        if config.track_admissions {
            for k in 0..m {
                let acquires = config
                    .scripts
                    .iter()
                    .flatten()
                    .filter(|a| a.lock() == k && !matches!(a, Action::Release(_)))
                    .count();
                log_off[k] = next;
                log_cap[k] = acquires;
                next += acquires;
            }
        }
        Self {
            config,
            family,
            n,
            m,
            programs,
            serving0,
            grant0,
            node0,
            thread0,
            stride,
            pending0,
            log_off,
            log_cap,
            len: next,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn initial(&self) -> ModelState {
        let mut s = vec![0u8; self.len];
        for t in 0..self.n {
            let th = self.th(t);
            match self.family {
                Family::Mcs => {
                    for k in 0..self.m {
                        s[th + REGS + k * NREGS + NODE as usize] = self.mcs_node(t, k);
                    }
                }
                Family::Clh => {
                    s[th + FREE_LEN] = 1;
                    s[th + FREE] = (self.m + t + 1) as u8;
                }
                _ => {}
            }
        }
        if self.family == Family::Clh {
            for (k, tail) in s[..self.m].iter_mut().enumerate() {
                *tail = (k + 1) as u8;
            }
        }
        ModelState(s.into_boxed_slice())
    }

    fn th(&self, t: usize) -> usize {
        self.thread0 + t * self.stride
    }

    fn reg(&self, t: usize, k: usize, r: Reg) -> usize {
        self.th(t) + REGS + k * NREGS + r as usize
    }

    fn mcs_node(&self, t: usize, k: usize) -> u8 {
        (1 + t * self.m + k) as u8
    }

    fn lock_value(k: usize) -> u8 {
        (2 * (k + 1)) as u8
    }

    fn val(&self, s: &[u8], t: usize, k: usize, v: Val) -> u8 {
        match v {
            Val::Empty => 0,
            Val::One => 1,
            Val::Lock => Self::lock_value(k),
            Val::LockFlagged => Self::lock_value(k) | 1,
            Val::Me => (t + 1) as u8,
            Val::MyNode => self.mcs_node(t, k),
            Val::Reg(r) => s[self.reg(t, k, r)],
            Val::RegPlusOne(r) => s[self.reg(t, k, r)].wrapping_add(1),
        }
    }

    fn addr(&self, s: &[u8], t: usize, k: usize, a: Addr) -> usize {
        let ident = |r: Reg, max: usize| {
            let v = s[self.reg(t, k, r)] as usize;
            assert!((1..=max).contains(&v), "dangling identity {v} in register {r}");
            v - 1
        };
        match a {
            Addr::Tail => k,
            Addr::Serving => self.serving0 + k,
            Addr::OwnGrant => self.grant0 + t,
            Addr::GrantOf(r) => self.grant0 + ident(r, self.n),
            Addr::NextOf(r) => self.node0 + 2 * ident(r, self.n * self.m),
            Addr::LockedOf(r) => self.node0 + 2 * ident(r, self.n * self.m) + 1,
            Addr::FlagOf(r) => self.node0 + ident(r, self.m + self.n),
        }
    }

    fn cond(&self, s: &[u8], t: usize, k: usize, word: u8, c: Cond) -> bool {
        match c {
            Cond::Eq(v) => word == self.val(s, t, k, v),
            Cond::Ne(v) => word != self.val(s, t, k, v),
        }
    }

    /// The next instruction of thread `t` and the lock it concerns, or
    /// `None` once the thread's script is done.
    fn current(&self, s: &[u8], t: usize) -> Option<(Action, &Instr)> {
        let th = self.th(t);
        let a = s[th + ACTION] as usize;
        let action = *self.config.scripts[t].get(a)?;
        Some((action, &self.programs[t][a][s[th + PC] as usize]))
    }

    pub(crate) fn finished(&self, s: &[u8], t: usize) -> bool {
        s[self.th(t) + ACTION] as usize == self.config.scripts[t].len()
    }

    pub fn is_terminal(&self, s: &ModelState) -> bool {
        (0..self.n).all(|t| self.finished(&s.0, t))
    }

    /// Locks held by thread `t`.
    pub fn held_locks(&self, s: &ModelState, t: usize) -> Vec<usize> {
        let holds = s.0[self.th(t) + HOLDS];
        (0..self.m).filter(|k| holds & (1 << k) != 0).collect()
    }

    pub(crate) fn enabled(&self, s: &[u8], t: usize) -> bool {
        match self.current(s, t) {
            None => false,
            Some((action, ins)) => match ins.op {
                Op::Await { at, cond, .. } => {
                    let k = action.lock();
                    self.cond(s, t, k, s[self.addr(s, t, k, at)], cond)
                }
                _ => true,
            },
        }
    }

    /// Per-lock admission order, as thread indices. Empty without tracking.
    pub fn admissions(&self, s: &ModelState) -> Vec<Vec<usize>> {
        if !self.config.track_admissions {
            return Vec::new();
        }
        (0..self.m)
            .map(|k| {
                s.0[self.log_off[k]..self.log_off[k] + self.log_cap[k]]
                    .iter()
                    .take_while(|&&x| x != 0)
                    .map(|&x| x as usize - 1)
                    .collect()
            })
            .collect()
    }

    /// Executes one step of thread `t`; `None` if it cannot move.
    pub(crate) fn step(&self, s: &[u8], t: usize) -> Option<Successor> {
        if !self.enabled(s, t) {
            return None;
        }
        let (action, ins) = self.current(s, t)?;
        let ins = *ins;
        let k = action.lock();
        let th = self.th(t);
        let bit = 1u8 << k;
        let mut ns: Box<[u8]> = s.into();
        let mut violation = None;
        let pc = ns[th + PC] as usize;
        if pc == 0 && matches!(action, Action::Release(_)) {
            ns[th + HOLDS] &= !bit;
        }
        let mut next = pc + 1;
        let mut ok = true;
        match ins.op {
            Op::Swap { at, val, dst } => {
                let a = self.addr(&ns, t, k, at);
                let v = self.val(&ns, t, k, val);
                let old = ns[a];
                ns[a] = v;
                ns[self.reg(t, k, dst)] = old;
                if old == v {
                    violation = Some(Property::SwapReturnedSelf);
                }
            }
            Op::Cas { at, expect, new, dst } => {
                let a = self.addr(&ns, t, k, at);
                let e = self.val(&ns, t, k, expect);
                let v = self.val(&ns, t, k, new);
                let old = ns[a];
                ok = old == e;
                if ok {
                    ns[a] = v;
                }
                ns[self.reg(t, k, dst)] = old;
            }
            Op::FetchInc { at, dst } => {
                let a = self.addr(&ns, t, k, at);
                let old = ns[a];
                ns[a] = old.wrapping_add(1);
                ns[self.reg(t, k, dst)] = old;
            }
            Op::Load { at, dst } => {
                let a = self.addr(&ns, t, k, at);
                ns[self.reg(t, k, dst)] = ns[a];
            }
            Op::Store { at, val } => {
                let a = self.addr(&ns, t, k, at);
                ns[a] = self.val(&ns, t, k, val);
            }
            Op::Await { at, then_store, .. } => {
                if let Some(v) = then_store {
                    let a = self.addr(&ns, t, k, at);
                    ns[a] = self.val(&ns, t, k, v);
                }
            }
            Op::Branch { lhs, cond, target } => {
                let v = self.val(&ns, t, k, lhs);
                if self.cond(&ns, t, k, v, cond) {
                    next = target as usize;
                }
            }
            Op::PopNode { dst } => {
                let len = ns[th + FREE_LEN] as usize;
                assert!(len > 0, "CLH spare list empty");
                ns[self.reg(t, k, dst)] = ns[th + FREE + len - 1];
                ns[th + FREE + len - 1] = 0;
                ns[th + FREE_LEN] = (len - 1) as u8;
            }
            Op::PushNode { src } => {
                let len = ns[th + FREE_LEN] as usize;
                assert!(len < FREE_CAP, "CLH spare list overflow");
                ns[th + FREE + len] = ns[self.reg(t, k, src)];
                ns[th + FREE_LEN] = (len + 1) as u8;
            }
        }
        match ins.mark {
            Mark::Doorstep => self.enter_doorstep(&mut ns, t, k),
            Mark::DoorstepIfOk if ok => self.enter_doorstep(&mut ns, t, k),
            Mark::Exit => ns[th + INQ] &= !bit,
            Mark::ExitIfOk if ok => ns[th + INQ] &= !bit,
            _ => {}
        }
        ns[th + PC] = next as u8;
        let prog_len = self.programs[t][s[th + ACTION] as usize].len();
        if next >= prog_len {
            if matches!(action, Action::Release(_)) {
                ns[th + ASSOC] &= !bit;
            } else {
                let v = self.admit(&mut ns, t, k);
                violation = violation.or(v);
            }
            ns[th + ACTION] += 1;
            ns[th + PC] = 0;
        }
        Some(Successor { state: ns, violation })
    }

    fn enter_doorstep(&self, s: &mut [u8], t: usize, k: usize) {
        let th = self.th(t);
        s[th + INQ] |= 1 << k;
        s[th + ASSOC] |= 1 << k;
        let q = &mut s[self.pending0 + k * self.n..][..self.n];
        let slot = q.iter().position(|&x| x == 0).expect("pending queue overflow");
        q[slot] = (t + 1) as u8;
    }

    /// Completion of an acquire: checks exclusion and doorstep order.
    fn admit(&self, s: &mut [u8], t: usize, k: usize) -> Option<Property> {
        let mut violation = None;
        let bit = 1u8 << k;
        if (0..self.n).any(|u| u != t && s[self.th(u) + HOLDS] & bit != 0) {
            violation = Some(Property::MutualExclusion);
        }
        let q = &mut s[self.pending0 + k * self.n..][..self.n];
        let me = (t + 1) as u8;
        if q[0] != me && violation.is_none() {
            violation = Some(Property::Fifo);
        }
        if let Some(i) = q.iter().position(|&x| x == me) {
            q.copy_within(i + 1.., i);
            q[self.n - 1] = 0;
        }
        s[self.th(t) + HOLDS] |= bit;
        if self.config.track_admissions {
            let log = &mut s[self.log_off[k]..][..self.log_cap[k]];
            if let Some(slot) = log.iter().position(|&x| x == 0) {
                log[slot] = me;
            }
        }
        violation
    }

    /// State invariants. Returns the first one violated and the largest
    /// number of threads waiting on one word.
    pub(crate) fn check(&self, s: &[u8]) -> (Option<Property>, usize) {
        let mut violation = None;
        if matches!(self.family, Family::Hemlock | Family::Mcs) {
            for k in 0..self.m {
                if s[k] == 0 && (0..self.n).any(|t| s[self.th(t) + INQ] & (1 << k) != 0) {
                    violation = Some(Property::TailNull);
                }
            }
        }
        // (address, lock) of every thread parked on an acquire-side wait.
        let mut waits = [(usize::MAX, 0usize); super::MAX_THREADS];
        for (t, w) in waits.iter_mut().enumerate().take(self.n) {
            if let Some((action, ins)) = self.current(s, t) {
                if ins.mark == Mark::Wait {
                    if let Op::Await { at, .. } = ins.op {
                        let k = action.lock();
                        *w = (self.addr(s, t, k, at), k);
                    }
                }
            }
        }
        let waits = &waits[..self.n];
        let mut max = 0;
        for &(a, k) in waits.iter().filter(|w| w.0 != usize::MAX) {
            let on_word = waits.iter().filter(|w| w.0 == a).count();
            max = max.max(on_word);
            match self.family {
                Family::Hemlock => {
                    if waits.iter().filter(|w| **w == (a, k)).count() > 1 {
                        violation = violation.or(Some(Property::OneWaiter));
                    }
                    let owner = a - self.grant0;
                    let assoc = s[self.th(owner) + ASSOC];
                    let g = s[a] as usize;
                    let residual = g != 0 && assoc & (1 << (g / 2 - 1)) == 0;
                    if on_word > assoc.count_ones() as usize + residual as usize {
                        violation = violation.or(Some(Property::FereLocal));
                    }
                }
                Family::Mcs | Family::Clh => {
                    if on_word > 1 {
                        violation = violation.or(Some(Property::FereLocal));
                    }
                }
                Family::Ticket => {}
            }
        }
        (violation, max)
    }

    /// Runs `trace` from the initial state, stopping at the first violation.
    pub fn replay(&self, trace: &Trace) -> Result<Replay, ReplayError> {
        let mut s = self.initial().0;
        let (mut violation, _) = self.check(&s);
        let mut steps = 0;
        for (step, &t) in trace.0.iter().enumerate() {
            if violation.is_some() {
                break;
            }
            if t >= self.n {
                return Err(ReplayError::NoSuchThread { step, thread: t });
            }
            let succ = self.step(&s, t).ok_or(ReplayError::Disabled { step, thread: t })?;
            s = succ.state;
            steps += 1;
            violation = succ.violation.or_else(|| self.check(&s).0);
        }
        if violation.is_none()
            && (0..self.n).any(|t| !self.finished(&s, t))
            && (0..self.n).all(|t| !self.enabled(&s, t))
        {
            violation = Some(Property::Deadlock);
        }
        Ok(Replay {
            state: ModelState(s),
            steps,
            violation,
        })
    }
}

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexSet;

use super::machine::Machine;
use super::{ExplorationReport, Property, Trace, Violation};

const ROOT: u32 = u32::MAX;

struct Search {
    states: IndexSet<Box<[u8]>>,
    /// Discovering state and thread for every state, for trace rebuilding.
    parent: Vec<(u32, u8)>,
    edges: Vec<(u32, u32)>,
    found: BTreeMap<Property, (Trace, usize)>,
}

impl Search {
    fn trace_to(&self, mut i: u32) -> Trace {
        let mut steps = Vec::new();
        while self.parent[i as usize].0 != ROOT {
            let (p, t) = self.parent[i as usize];
            steps.push(t as usize);
            i = p;
        }
        steps.reverse();
        Trace(steps)
    }

    fn report(&mut self, property: Property, trace: impl FnOnce(&Self) -> Trace) {
        if let Some(entry) = self.found.get_mut(&property) {
            entry.1 += 1;
        } else {
            let t = trace(self);
            self.found.insert(property, (t, 1));
        }
    }
}

/// Breadth-first enumeration of every reachable state.
///
/// Deterministic: threads are tried in index order and states are numbered
/// in discovery order, so reports and traces are reproducible. Violating
/// states are recorded but not expanded. Traces are shortest schedules.
pub fn explore(machine: &Machine) -> ExplorationReport {
    let cfg = machine.config();
    let mut search = Search {
        states: IndexSet::new(),
        parent: Vec::new(),
        edges: Vec::new(),
        found: BTreeMap::new(),
    };
    let init = machine.initial().0;
    let (v, mut max_waiters) = machine.check(&init);
    search.states.insert(init);
    search.parent.push((ROOT, 0));
    if let Some(p) = v {
        search.report(p, |_| Trace::default());
    }

    let mut terminals = Vec::new();
    let mut deadlocked = 0;
    let mut transitions = 0;
    let mut exhausted = false;
    let mut orders = BTreeSet::new();
    let mut i = 0;
    // A violating initial state is not expanded.
    if v.is_some() {
        i = 1;
    }
    while i < search.states.len() {
        let cur = search.states[i].clone();
        let mut moved = false;
        for t in 0..machine.n {
            let Some(succ) = machine.step(&cur, t) else {
                continue;
            };
            moved = true;
            transitions += 1;
            let (state_violation, waiters) = machine.check(&succ.state);
            max_waiters = max_waiters.max(waiters);
            if let Some(p) = succ.violation.or(state_violation) {
                search.report(p, |s| {
                    let mut tr = s.trace_to(i as u32);
                    tr.0.push(t);
                    tr
                });
                continue;
            }
            let (j, new) = search.states.insert_full(succ.state);
            if new {
                search.parent.push((i as u32, t as u8));
            }
            search.edges.push((i as u32, j as u32));
            if search.states.len() >= cfg.max_states {
                exhausted = true;
                break;
            }
        }
        if exhausted {
            break;
        }
        if !moved {
            if (0..machine.n).all(|t| machine.finished(&cur, t)) {
                terminals.push(i as u32);
                if cfg.track_admissions {
                    orders.insert(machine.admissions(&super::ModelState(cur)));
                }
            } else {
                deadlocked += 1;
                search.report(Property::Deadlock, |s| s.trace_to(i as u32));
            }
        }
        i += 1;
    }

    if search.found.is_empty() && !exhausted {
        lockout(&mut search, &terminals);
    }

    let violations = search
        .found
        .into_iter()
        .map(|(property, (trace, occurrences))| Violation {
            property,
            trace,
            occurrences,
        })
        .collect();
    ExplorationReport {
        algorithm: cfg.algorithm,
        policy: cfg.policy,
        threads: machine.n,
        locks: machine.m,
        mutation: cfg.mutation,
        states_explored: search.states.len(),
        transitions,
        terminal_states: terminals.len(),
        deadlocked_states: deadlocked,
        max_waiters_per_cell: max_waiters,
        violations,
        exhausted,
        admission_orders: cfg.track_admissions.then(|| orders.into_iter().collect()),
    }
}

/// Flags states from which no terminal state is reachable.
fn lockout(search: &mut Search, terminals: &[u32]) {
    let n = search.states.len();
    let mut offsets = vec![0u32; n + 1];
    for &(_, to) in &search.edges {
        offsets[to as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut preds = vec![0u32; search.edges.len()];
    for &(from, to) in &search.edges {
        preds[fill[to as usize] as usize] = from;
        fill[to as usize] += 1;
    }
    let mut live = vec![false; n];
    let mut stack: Vec<u32> = terminals.to_vec();
    for &t in terminals {
        live[t as usize] = true;
    }
    while let Some(s) = stack.pop() {
        for &p in &preds[offsets[s as usize] as usize..offsets[s as usize + 1] as usize] {
            if !live[p as usize] {
                live[p as usize] = true;
                stack.push(p);
            }
        }
    }
    for (i, _) in live.iter().enumerate().filter(|(_, l)| !**l) {
        search.report(Property::Lockout, |s| s.trace_to(i as u32));
    }
}

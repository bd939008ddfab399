//! Serial views and serial partial views over operation subsets.
//!
//! The search enumerates linear extensions of the restricted relation in
//! ascending-id order, placing a read only while its source is the most
//! recent write of its variable. A write is never placed on top of a write
//! that still has unplaced readers, since those readers could then never be
//! placed. Failed states (placed set plus last write per variable) are
//! memoized.

use std::collections::HashSet;

use crate::error::Error;
use crate::relation::Relation;
use crate::trace::{Execution, OpId, OperationPattern};
use crate::verdict::{Counterexample, Verdict, View};

/// Largest subset the brute-force oracle accepts.
pub const ORACLE_LIMIT: usize = 9;

pub const DEFAULT_VIEW_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SerialMode {
    Total,
    Partial,
}

/// A subset, a relation to respect and how to judge the result.
#[derive(Clone, Debug)]
pub struct ViewQuery {
    pub subset: Vec<OperationPattern>,
    pub relation: Relation,
    pub mode: SerialMode,
    pub budget: u64,
}

impl ViewQuery {
    pub fn run(&self, exec: &Execution) -> Verdict {
        match self.mode {
            SerialMode::Total => {
                exists_serial_view(exec, &self.subset, &self.relation, self.budget)
            }
            SerialMode::Partial => exists_serial_partial_view(exec, &self.subset, &self.relation),
        }
    }
}

/// Membership flags for `subset`, with every initial write included.
pub fn select_members(exec: &Execution, subset: &[OperationPattern]) -> Vec<bool> {
    exec.ops()
        .iter()
        .map(|op| op.is_initial() || subset.iter().any(|p| p.matches(op)))
        .collect()
}

/// Every read's source is the most recent earlier write to its variable.
pub fn is_serial(exec: &Execution, order: &[OpId]) -> bool {
    let mut last = vec![None; exec.variables().len()];
    for &id in order {
        let op = exec.op(id);
        if op.kind.is_read() {
            if last[op.var.0] != exec.writes_to(id) {
                return false;
            }
        } else {
            last[op.var.0] = Some(id);
        }
    }
    true
}

pub fn exists_serial_view(
    exec: &Execution,
    subset: &[OperationPattern],
    relation: &Relation,
    budget: u64,
) -> Verdict {
    search_serial_view(
        exec,
        &select_members(exec, subset),
        relation,
        budget,
        "view",
    )
}

/// Outcome of a raw search, before it is turned into a verdict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum SearchOutcome {
    Found(Vec<OpId>),
    Exhausted,
    OutOfBudget,
}

struct Search<'a> {
    exec: &'a Execution,
    members: Vec<OpId>,
    /// direct predecessors among members, as bitsets
    preds: Vec<Vec<u64>>,
    /// unplaced member reads per source write
    pending: Vec<usize>,
    placed: Vec<u64>,
    last: Vec<Option<OpId>>,
    order: Vec<OpId>,
    failed: HashSet<(Vec<u64>, Vec<Option<OpId>>)>,
    nodes: u64,
    budget: u64,
}

fn has(bits: &[u64], i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

fn flip(bits: &mut [u64], i: usize) {
    bits[i / 64] ^= 1 << (i % 64);
}

impl<'a> Search<'a> {
    fn new(exec: &'a Execution, is_member: &[bool], relation: &Relation, budget: u64) -> Self {
        let n = exec.len();
        let words = n.div_ceil(64).max(1);
        let mut preds = vec![vec![0u64; words]; n];
        for e in relation.edges() {
            if is_member[e.from.0] && is_member[e.to.0] {
                preds[e.to.0][e.from.0 / 64] |= 1 << (e.from.0 % 64);
            }
        }
        let members: Vec<OpId> = exec.op_ids().filter(|o| is_member[o.0]).collect();
        let mut pending = vec![0; n];
        for &m in &members {
            if let Some(w) = exec.writes_to(m) {
                pending[w.0] += 1;
            }
        }
        Search {
            exec,
            members,
            preds,
            pending,
            placed: vec![0; words],
            last: vec![None; exec.variables().len()],
            order: Vec::new(),
            failed: HashSet::new(),
            nodes: 0,
            budget,
        }
    }

    fn ready(&self, id: OpId) -> bool {
        if has(&self.placed, id.0) {
            return false;
        }
        if self.preds[id.0]
            .iter()
            .zip(&self.placed)
            .any(|(p, done)| p & !done != 0)
        {
            return false;
        }
        let op = self.exec.op(id);
        match self.exec.writes_to(id) {
            Some(source) => self.last[op.var.0] == Some(source),
            None => self.last[op.var.0].is_none_or(|prev| self.pending[prev.0] == 0),
        }
    }

    fn place(&mut self, id: OpId) -> Option<OpId> {
        flip(&mut self.placed, id.0);
        self.order.push(id);
        let op = self.exec.op(id);
        match self.exec.writes_to(id) {
            Some(source) => {
                self.pending[source.0] -= 1;
                None
            }
            None => self.last[op.var.0].replace(id),
        }
    }

    fn unplace(&mut self, id: OpId, previous: Option<OpId>) {
        flip(&mut self.placed, id.0);
        self.order.pop();
        let op = self.exec.op(id);
        match self.exec.writes_to(id) {
            Some(source) => self.pending[source.0] += 1,
            None => self.last[op.var.0] = previous,
        }
    }

    /// Depth-first search. `on_leaf` returns `true` to stop. Yields
    /// `(stopped, reached_a_leaf)`; `Err` once the node budget is spent.
    fn run(&mut self, on_leaf: &mut dyn FnMut(&[OpId]) -> bool) -> Result<(bool, bool), ()> {
        if self.order.len() == self.members.len() {
            return Ok((on_leaf(&self.order), true));
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(());
        }
        let key = (self.placed.clone(), self.last.clone());
        if self.failed.contains(&key) {
            return Ok((false, false));
        }
        let mut reached = false;
        for i in 0..self.members.len() {
            let id = self.members[i];
            if !self.ready(id) {
                continue;
            }
            let prev = self.place(id);
            let result = self.run(on_leaf);
            self.unplace(id, prev);
            let (stop, leaf) = result?;
            reached |= leaf;
            if stop {
                return Ok((true, reached));
            }
        }
        if !reached {
            self.failed.insert(key);
        }
        Ok((false, reached))
    }
}

/// Backtracking search returning the first serial linear extension.
pub(crate) fn find_serial_order(
    exec: &Execution,
    is_member: &[bool],
    relation: &Relation,
    budget: u64,
) -> (SearchOutcome, u64) {
    let mut search = Search::new(exec, is_member, relation, budget);
    let mut found = None;
    let result = search.run(&mut |order| {
        found = Some(order.to_vec());
        true
    });
    let outcome = match (result, found) {
        (Err(()), _) => SearchOutcome::OutOfBudget,
        (Ok(_), Some(order)) => SearchOutcome::Found(order),
        (Ok(_), None) => SearchOutcome::Exhausted,
    };
    (outcome, search.nodes)
}

/// Total-mode check over an explicit member set.
pub fn search_serial_view(
    exec: &Execution,
    is_member: &[bool],
    relation: &Relation,
    budget: u64,
    scope: &str,
) -> Verdict {
    let restricted = relation.restrict_to(is_member);
    if let Some(edges) = restricted.find_cycle() {
        return Verdict::violated(
            Counterexample::Cycle {
                scope: scope.to_string(),
                edges,
            },
            0,
        );
    }
    let (outcome, nodes) = find_serial_order(exec, is_member, &restricted, budget);
    match outcome {
        SearchOutcome::Found(order) => Verdict::satisfied(
            vec![View {
                scope: scope.to_string(),
                order,
            }],
            nodes,
        ),
        SearchOutcome::Exhausted => Verdict::violated(
            Counterexample::Exhausted {
                scope: scope.to_string(),
                explored: nodes,
            },
            nodes,
        ),
        SearchOutcome::OutOfBudget => Verdict::unknown(
            format!("view search for {scope} exceeded {budget} nodes"),
            nodes,
        ),
    }
}

/// All serial linear extensions, in ascending-id order. `Err` when more
/// than `cap` exist or the node budget runs out.
pub fn enumerate_serial_views(
    exec: &Execution,
    is_member: &[bool],
    relation: &Relation,
    cap: usize,
    budget: u64,
) -> Result<Vec<Vec<OpId>>, Error> {
    let restricted = relation.restrict_to(is_member);
    if !restricted.is_acyclic() {
        return Ok(Vec::new());
    }
    let mut search = Search::new(exec, is_member, &restricted, budget);
    let mut out = Vec::new();
    let mut over = false;
    let result = search.run(&mut |order| {
        if out.len() == cap {
            over = true;
            return true;
        }
        out.push(order.to_vec());
        false
    });
    if over {
        return Err(Error::Budget(format!("more than {cap} serial views")));
    }
    if result.is_err() {
        return Err(Error::Budget(format!(
            "view enumeration exceeded {budget} nodes"
        )));
    }
    Ok(out)
}

pub fn exists_serial_partial_view(
    exec: &Execution,
    subset: &[OperationPattern],
    relation: &Relation,
) -> Verdict {
    check_partial_view(exec, &select_members(exec, subset), relation, "view")
}

/// Polynomial check: the restricted relation is acyclic, no read comes
/// before its source, and no member write sits between a read's source and
/// the read.
pub fn check_partial_view(
    exec: &Execution,
    is_member: &[bool],
    relation: &Relation,
    scope: &str,
) -> Verdict {
    let restricted = relation.restrict_to(is_member);
    if let Some(edges) = restricted.find_cycle() {
        return Verdict::violated(
            Counterexample::Cycle {
                scope: scope.to_string(),
                edges,
            },
            0,
        );
    }
    let closure = restricted.transitive_closure();
    for r in exec.reads().filter(|r| is_member[r.0]) {
        let source = exec.writes_to(r).expect("read has a source");
        if !is_member[source.0] || closure.contains(r, source) {
            return Verdict::violated(
                Counterexample::ReadBeforeSource {
                    scope: scope.to_string(),
                    read: r,
                    source,
                },
                0,
            );
        }
        let var = exec.op(r).var;
        let dominating = exec.writes().find(|&w| {
            w != source
                && is_member[w.0]
                && exec.op(w).var == var
                && closure.contains(source, w)
                && closure.contains(w, r)
        });
        if let Some(dominating) = dominating {
            return Verdict::violated(
                Counterexample::DominatedRead {
                    scope: scope.to_string(),
                    read: r,
                    source,
                    dominating,
                },
                0,
            );
        }
    }
    let order = restricted
        .topo_sort_members(is_member)
        .expect("acyclic relation has a linearization");
    Verdict::satisfied(
        vec![View {
            scope: scope.to_string(),
            order,
        }],
        0,
    )
}

/// Tries every permutation of the subset in lexicographic order.
pub fn brute_force_oracle(
    exec: &Execution,
    subset: &[OperationPattern],
    relation: &Relation,
) -> Result<Verdict, Error> {
    let members: Vec<OpId> = exec
        .op_ids()
        .filter(|&o| select_members(exec, subset)[o.0])
        .collect();
    if members.len() > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            size: members.len(),
            limit: ORACLE_LIMIT,
        });
    }
    let mut perm = members.clone();
    let mut tried = 0u64;
    loop {
        tried += 1;
        let respects = relation.edges().all(|e| {
            let a = perm.iter().position(|&x| x == e.from);
            let b = perm.iter().position(|&x| x == e.to);
            match (a, b) {
                (Some(a), Some(b)) => a < b,
                _ => true,
            }
        });
        if respects && is_serial(exec, &perm) {
            return Ok(Verdict::satisfied(
                vec![View {
                    scope: "view".into(),
                    order: perm,
                }],
                tried,
            ));
        }
        if !next_permutation(&mut perm) {
            return Ok(Verdict::violated(
                Counterexample::Exhausted {
                    scope: "view".into(),
                    explored: tried,
                },
                tried,
            ));
        }
    }
}

fn next_permutation(v: &mut [OpId]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

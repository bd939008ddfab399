//! Binary relations over operation ids with per-edge provenance.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lattice::Property;
use crate::trace::{Execution, OpId, OperationPattern};
use crate::transitions::SyncModelKind;

/// Which order produced an edge. Used for explanations only; it never
/// influences a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "order", rename_all = "snake_case")]
pub enum Provenance {
    ProcessOrder,
    LocalOrder,
    WritesTo,
    DataOrder { clause: u8 },
    WriteOrder,
    CausalOrder,
    ProcessDataOrder,
    SerialOrder,
    AntiOrder { clause: u8 },
    Augmented,
    Dependency { model: SyncModelKind },
    Synch { property: Property },
    Transitive { clause: u8 },
    SyncSerial,
    Closure,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::ProcessOrder => f.write_str("PO"),
            Provenance::LocalOrder => f.write_str("iLocal"),
            Provenance::WritesTo => f.write_str("writes-to"),
            Provenance::DataOrder { clause } => write!(f, "DO clause {clause}"),
            Provenance::WriteOrder => f.write_str("WO"),
            Provenance::CausalOrder => f.write_str("CR"),
            Provenance::ProcessDataOrder => f.write_str("PDO"),
            Provenance::SerialOrder => f.write_str("SO"),
            Provenance::AntiOrder { clause } => write!(f, "AO clause {clause}"),
            Provenance::Augmented => f.write_str("DO'"),
            Provenance::Dependency { model } => write!(f, "D({model})"),
            Provenance::Synch { property } => write!(f, "synch({property})"),
            Provenance::Transitive { clause } => write!(f, "T clause {clause}"),
            Provenance::SyncSerial => f.write_str("seq"),
            Provenance::Closure => f.write_str("closure"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: OpId,
    pub to: OpId,
    pub provenance: Provenance,
}

/// Square bit matrix, row `a` holding the successors of `a`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub(crate) fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub(crate) fn set(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] |= 1 << (b % 64);
    }

    pub(crate) fn get(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    fn or_row_into(&mut self, src: usize, dst: usize) {
        for w in 0..self.words {
            let v = self.bits[src * self.words + w];
            self.bits[dst * self.words + w] |= v;
        }
    }

    /// Warshall's algorithm in place.
    pub(crate) fn close(&mut self) {
        for k in 0..self.n {
            for i in 0..self.n {
                if i != k && self.get(i, k) {
                    self.or_row_into(k, i);
                }
            }
        }
    }
}

/// Edges over the ids `0..size`. The first provenance recorded for an edge
/// wins; later inserts of the same pair are ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    size: usize,
    succ: Vec<BTreeMap<usize, Provenance>>,
}

impl Relation {
    pub fn new(size: usize) -> Self {
        Relation {
            size,
            succ: vec![BTreeMap::new(); size],
        }
    }

    pub fn from_edges(size: usize, edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut rel = Relation::new(size);
        for e in edges {
            rel.insert(e.from, e.to, e.provenance);
        }
        rel
    }

    /// Number of ids the relation ranges over (not the edge count).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.iter().all(BTreeMap::is_empty)
    }

    /// Returns `true` if the edge is new.
    pub fn insert(&mut self, from: OpId, to: OpId, provenance: Provenance) -> bool {
        match self.succ[from.0].entry(to.0) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(provenance);
                true
            }
            std::collections::btree_map::Entry::Occupied(_) => false,
        }
    }

    pub fn contains(&self, from: OpId, to: OpId) -> bool {
        self.succ[from.0].contains_key(&to.0)
    }

    pub fn provenance(&self, from: OpId, to: OpId) -> Option<Provenance> {
        self.succ[from.0].get(&to.0).copied()
    }

    pub fn successors(&self, from: OpId) -> impl Iterator<Item = OpId> + '_ {
        self.succ[from.0].keys().map(|&b| OpId(b))
    }

    /// All edges ordered by `(from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.succ.iter().enumerate().flat_map(|(a, m)| {
            m.iter().map(move |(&b, &p)| Edge {
                from: OpId(a),
                to: OpId(b),
                provenance: p,
            })
        })
    }

    pub fn union(&self, other: &Relation) -> Relation {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    pub fn extend(&mut self, other: &Relation) {
        assert_eq!(self.size, other.size, "relations over different executions");
        for e in other.edges() {
            self.insert(e.from, e.to, e.provenance);
        }
    }

    /// Edges present in both, provenance taken from `self`.
    pub fn intersection(&self, other: &Relation) -> Relation {
        self.filter(|e| other.contains(e.from, e.to))
    }

    pub fn filter(&self, mut keep: impl FnMut(&Edge) -> bool) -> Relation {
        Relation::from_edges(self.size, self.edges().filter(|e| keep(e)))
    }

    /// Edges with both endpoints matching some pattern of `subset`.
    pub fn restrict(&self, exec: &Execution, subset: &[OperationPattern]) -> Relation {
        let members: Vec<bool> = exec
            .ops()
            .iter()
            .map(|op| subset.iter().any(|p| p.matches(op)))
            .collect();
        self.restrict_to(&members)
    }

    /// Edges with both endpoints flagged in `members`.
    pub fn restrict_to(&self, members: &[bool]) -> Relation {
        self.filter(|e| members[e.from.0] && members[e.to.0])
    }

    pub(crate) fn to_matrix(&self) -> BitMatrix {
        let mut m = BitMatrix::new(self.size);
        for e in self.edges() {
            m.set(e.from.0, e.to.0);
        }
        m
    }

    /// Least transitive superset; added edges are tagged `Closure`.
    pub fn transitive_closure(&self) -> Relation {
        self.closure_tagged(Provenance::Closure)
    }

    /// Like [`Relation::transitive_closure`] with a caller-chosen tag for the
    /// derived edges.
    pub fn closure_tagged(&self, tag: Provenance) -> Relation {
        let mut m = self.to_matrix();
        m.close();
        let mut out = self.clone();
        for a in 0..self.size {
            for b in 0..self.size {
                if m.get(a, b) {
                    out.insert(OpId(a), OpId(b), tag);
                }
            }
        }
        out
    }

    pub fn is_transitive(&self) -> bool {
        self.edges()
            .all(|e| self.successors(e.to).all(|c| self.contains(e.from, c)))
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_sort().is_some()
    }

    /// A shortest cycle, starting at the smallest id that lies on a cycle of
    /// minimum length. `None` when acyclic.
    pub fn find_cycle(&self) -> Option<Vec<Edge>> {
        if self.is_acyclic() {
            return None;
        }
        let mut best: Option<Vec<usize>> = None;
        for start in 0..self.size {
            if let Some(path) = self.shortest_return(start) {
                if best.as_ref().is_none_or(|b| path.len() < b.len()) {
                    best = Some(path);
                }
            }
        }
        // a self-loop alone only when no longer cycle exists, since closure
        // turns every cycle into loops on its members
        let nodes = best.or_else(|| {
            (0..self.size)
                .find(|&a| self.succ[a].contains_key(&a))
                .map(|a| vec![a])
        })?;
        let edges = (0..nodes.len())
            .map(|i| {
                let a = nodes[i];
                let b = nodes[(i + 1) % nodes.len()];
                Edge {
                    from: OpId(a),
                    to: OpId(b),
                    provenance: self.succ[a][&b],
                }
            })
            .collect();
        Some(edges)
    }

    /// BFS from `start` back to itself; returns the node sequence.
    fn shortest_return(&self, start: usize) -> Option<Vec<usize>> {
        let mut parent = vec![usize::MAX; self.size];
        let mut queue = VecDeque::new();
        for &b in self.succ[start].keys() {
            if b == start {
                continue;
            }
            if parent[b] == usize::MAX {
                parent[b] = start;
                queue.push_back(b);
            }
        }
        while let Some(a) = queue.pop_front() {
            for &b in self.succ[a].keys() {
                if b == start {
                    let mut path = vec![a];
                    let mut cur = a;
                    while parent[cur] != start {
                        cur = parent[cur];
                        path.push(cur);
                    }
                    path.push(start);
                    path.reverse();
                    return Some(path);
                }
                if parent[b] == usize::MAX {
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
        None
    }

    /// Linearization of all ids, smallest available id first.
    pub fn topo_sort(&self) -> Option<Vec<OpId>> {
        self.topo_sort_members(&vec![true; self.size])
    }

    /// Linearization of the flagged ids, considering only edges between
    /// them.
    pub fn topo_sort_members(&self, members: &[bool]) -> Option<Vec<OpId>> {
        let mut indegree = vec![0usize; self.size];
        for e in self.edges() {
            if members[e.from.0] && members[e.to.0] {
                indegree[e.to.0] += 1;
            }
        }
        let mut ready: BinaryHeap<Reverse<usize>> = (0..self.size)
            .filter(|&i| members[i] && indegree[i] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::new();
        while let Some(Reverse(a)) = ready.pop() {
            order.push(OpId(a));
            for &b in self.succ[a].keys() {
                if members[b] {
                    indegree[b] -= 1;
                    if indegree[b] == 0 {
                        ready.push(Reverse(b));
                    }
                }
            }
        }
        let expected = members.iter().filter(|&&m| m).count();
        (order.len() == expected).then_some(order)
    }

    /// Whether the total order `order` puts `from` before `to` for every
    /// edge between two listed ids.
    pub fn respected_by(&self, order: &[OpId]) -> bool {
        let mut pos = vec![usize::MAX; self.size];
        for (i, id) in order.iter().enumerate() {
            pos[id.0] = i;
        }
        self.edges().all(|e| {
            let (a, b) = (pos[e.from.0], pos[e.to.0]);
            a == usize::MAX || b == usize::MAX || a < b
        })
    }
}

//! The order relations defined over an execution.

use crate::error::Error;
use crate::relation::{Provenance, Relation};
use crate::trace::{Execution, OpId};

pub fn data_order(exec: &Execution) -> Relation {
    let n = exec.len();
    let mut rel = Relation::new(n);
    for e in exec.process_order().edges() {
        if exec.op(e.from).var == exec.op(e.to).var {
            rel.insert(e.from, e.to, Provenance::DataOrder { clause: 1 });
        }
    }
    for (w, r) in exec.writes_to_pairs() {
        rel.insert(w, r, Provenance::DataOrder { clause: 2 });
    }
    let po = exec.process_order();
    for (w2, r) in exec.writes_to_pairs() {
        let read = exec.op(r);
        for o1 in exec.op_ids() {
            let op1 = exec.op(o1);
            if op1.var == read.var && op1.value != read.value && po.contains(o1, r) {
                rel.insert(o1, w2, Provenance::DataOrder { clause: 3 });
            }
        }
    }
    rel.closure_tagged(Provenance::DataOrder { clause: 4 })
}

/// `w1 <_WO w2` iff some read of `w1` precedes `w2` in process order.
pub fn write_read_write_order(exec: &Execution) -> Relation {
    let mut rel = Relation::new(exec.len());
    let po = exec.process_order();
    for (w1, r) in exec.writes_to_pairs() {
        for w2 in po.successors(r) {
            if exec.op(w2).kind.is_write() {
                rel.insert(w1, w2, Provenance::WriteOrder);
            }
        }
    }
    rel
}

pub fn causal_relation(exec: &Execution) -> Relation {
    let mut rel = exec.process_order().clone();
    for (w, r) in exec.writes_to_pairs() {
        rel.insert(w, r, Provenance::WritesTo);
    }
    rel.closure_tagged(Provenance::CausalOrder)
}

pub fn process_data_order(exec: &Execution, data_order: &Relation) -> Relation {
    let both = exec.process_order().intersection(data_order);
    Relation::from_edges(
        exec.len(),
        both.edges().map(|mut e| {
            e.provenance = Provenance::ProcessDataOrder;
            e
        }),
    )
}

/// The deterministic relations of an execution, computed once.
#[derive(Clone, Debug)]
pub struct Orders {
    pub po: Relation,
    pub data: Relation,
    pub wo: Relation,
    pub cr: Relation,
    pub pdo: Relation,
}

impl Orders {
    pub fn new(exec: &Execution) -> Self {
        let data = data_order(exec);
        Orders {
            po: exec.process_order().clone(),
            wo: write_read_write_order(exec),
            cr: causal_relation(exec),
            pdo: process_data_order(exec, &data),
            data,
        }
    }
}

/// The two ways a serial-order pair can be resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SoChoice {
    /// `w <_SO writer(r)`
    WriteBeforeSource,
    /// `r <_SO w`
    ReadBeforeWrite,
}

/// A same-variable (write, read) pair with differing values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SoPair {
    pub write: OpId,
    pub read: OpId,
    /// The only choice the reader's view could respect, when pruning: `w`
    /// before `r` in process order rules out `r <_SO w`, and `r` before
    /// `w` rules out `w <_SO writer(r)`.
    pub forced: Option<SoChoice>,
}

/// All serial-order pairs of an execution, sorted by `(read, write)`.
#[derive(Clone, Debug)]
pub struct SerialOrderSpace {
    pairs: Vec<SoPair>,
    prune: bool,
}

impl SerialOrderSpace {
    pub fn new(exec: &Execution, prune: bool) -> Self {
        Self::filtered(exec, prune, |_, _| true)
    }

    /// Only the `(write, read)` pairs accepted by `keep`.
    pub fn filtered(exec: &Execution, prune: bool, keep: impl Fn(OpId, OpId) -> bool) -> Self {
        let po = exec.process_order();
        let mut pairs = Vec::new();
        for r in exec.reads() {
            let read = exec.op(r);
            for w in exec.writes() {
                let write = exec.op(w);
                if write.var == read.var && write.value != read.value && keep(w, r) {
                    pairs.push(SoPair {
                        write: w,
                        read: r,
                        forced: match (prune, po.contains(w, r), po.contains(r, w)) {
                            (true, true, _) => Some(SoChoice::WriteBeforeSource),
                            (true, _, true) => Some(SoChoice::ReadBeforeWrite),
                            _ => None,
                        },
                    });
                }
            }
        }
        SerialOrderSpace { pairs, prune }
    }

    pub fn pairs(&self) -> &[SoPair] {
        &self.pairs
    }

    pub fn prunes(&self) -> bool {
        self.prune
    }

    /// Pairs left open after forced-choice propagation.
    pub fn free_pairs(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.forced.is_none())
            .map(|(i, _)| i)
    }

    pub fn free_count(&self) -> usize {
        self.free_pairs().count()
    }

    /// The edge a pair contributes under `choice`.
    pub fn edge(&self, exec: &Execution, pair: usize, choice: SoChoice) -> (OpId, OpId) {
        let p = self.pairs[pair];
        match choice {
            SoChoice::WriteBeforeSource => {
                let source = exec.writes_to(p.read).expect("read has a source");
                (p.write, source)
            }
            SoChoice::ReadBeforeWrite => (p.read, p.write),
        }
    }

    /// Assignment number `index` of `2^free_count`: free pair 0 is the most
    /// significant bit and a zero bit picks [`SoChoice::WriteBeforeSource`].
    pub fn assignment(&self, index: u64) -> SerialOrderAssignment {
        let free: Vec<usize> = self.free_pairs().collect();
        let mut choices: Vec<SoChoice> = self
            .pairs
            .iter()
            .map(|p| p.forced.unwrap_or(SoChoice::WriteBeforeSource))
            .collect();
        for (k, &pair) in free.iter().enumerate() {
            if index >> (free.len() - 1 - k) & 1 == 1 {
                choices[pair] = SoChoice::ReadBeforeWrite;
            }
        }
        SerialOrderAssignment { choices }
    }

    /// Every non-pruned assignment, in order. Fails when more than `cap`
    /// pairs are free.
    pub fn enumerate(
        &self,
        cap: usize,
    ) -> Result<impl Iterator<Item = SerialOrderAssignment> + '_, Error> {
        let free = self.free_count();
        if free > cap {
            return Err(Error::Budget(format!(
                "{free} free serial-order pairs exceed the cap of {cap}"
            )));
        }
        Ok((0..1u64 << free).map(move |i| self.assignment(i)))
    }

    /// Edge set of a possibly partial assignment (`None` = undecided).
    pub fn relation(&self, exec: &Execution, choices: &[Option<SoChoice>]) -> Relation {
        let mut rel = Relation::new(exec.len());
        for (i, c) in choices.iter().enumerate() {
            if let Some(c) = c {
                let (a, b) = self.edge(exec, i, *c);
                rel.insert(a, b, Provenance::SerialOrder);
            }
        }
        rel
    }
}

/// One resolution of every pair of a [`SerialOrderSpace`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SerialOrderAssignment {
    pub choices: Vec<SoChoice>,
}

impl SerialOrderAssignment {
    pub fn relation(&self, exec: &Execution, space: &SerialOrderSpace) -> Relation {
        let partial: Vec<_> = self.choices.iter().copied().map(Some).collect();
        space.relation(exec, &partial)
    }
}

/// Write-write edges deduced through reads, given a serial order. The first
/// matching clause names the provenance.
pub fn anti_order(exec: &Execution, data_order: &Relation, so: &Relation) -> Relation {
    let mut rel = Relation::new(exec.len());
    let po = exec.process_order();
    let is_read = |o: OpId| exec.op(o).kind.is_read();
    let is_write = |o: OpId| exec.op(o).kind.is_write();
    let reads: Vec<OpId> = exec.reads().collect();
    let ao = |clause| Provenance::AntiOrder { clause };

    // clauses 1 and 2: w1 ↦ r1 <_PO r2 <_X w2
    for (clause, via) in [(1, data_order), (2, so)] {
        for &r1 in &reads {
            let w1 = exec.writes_to(r1).expect("read has a source");
            for r2 in po.successors(r1).filter(|&o| is_read(o)) {
                for w2 in via.successors(r2).filter(|&o| is_write(o)) {
                    rel.insert(w1, w2, ao(clause));
                }
            }
        }
    }
    // clause 3: w1 ↦ r1 <_SO w2
    for &r1 in &reads {
        let w1 = exec.writes_to(r1).expect("read has a source");
        for w2 in so.successors(r1).filter(|&o| is_write(o)) {
            rel.insert(w1, w2, ao(3));
        }
    }
    // clauses 4 and 5: w1 <_PO r1 <_X w2
    let writes: Vec<OpId> = exec.writes().collect();
    for (clause, via) in [(4, data_order), (5, so)] {
        for &w1 in &writes {
            for r1 in po.successors(w1).filter(|&o| is_read(o)) {
                for w2 in via.successors(r1).filter(|&o| is_write(o)) {
                    rel.insert(w1, w2, ao(clause));
                }
            }
        }
    }
    rel
}

/// Linear extensions of `rel` over `members`, smallest id first, at most
/// `cap` of them (`None` past the cap).
fn linear_extensions(rel: &Relation, members: &[OpId], cap: usize) -> Option<Vec<Vec<OpId>>> {
    fn go(
        rel: &Relation,
        members: &[OpId],
        placed: &mut Vec<bool>,
        order: &mut Vec<OpId>,
        out: &mut Vec<Vec<OpId>>,
        cap: usize,
    ) -> bool {
        if order.len() == members.len() {
            if out.len() == cap {
                return false;
            }
            out.push(order.clone());
            return true;
        }
        for (i, &m) in members.iter().enumerate() {
            if placed[i] {
                continue;
            }
            let ready = members
                .iter()
                .enumerate()
                .all(|(j, &p)| placed[j] || j == i || !rel.contains(p, m));
            if ready {
                placed[i] = true;
                order.push(m);
                let ok = go(rel, members, placed, order, out, cap);
                order.pop();
                placed[i] = false;
                if !ok {
                    return false;
                }
            }
        }
        true
    }
    let mut out = Vec::new();
    let mut placed = vec![false; members.len()];
    go(rel, members, &mut placed, &mut Vec::new(), &mut out, cap).then_some(out)
}

/// Supersets of data order that totally order, per variable, the
/// operations picked by `include`. Yielded in odometer order with the last
/// variable varying fastest.
#[derive(Clone, Debug)]
pub struct Augmentations {
    base: Relation,
    groups: Vec<Vec<Vec<OpId>>>,
    counter: Vec<usize>,
    done: bool,
}

impl Augmentations {
    fn new(
        exec: &Execution,
        data_order: &Relation,
        cap: usize,
        include: impl Fn(OpId) -> bool,
    ) -> Result<Self, Error> {
        let mut groups = Vec::new();
        let mut total: usize = 1;
        let over = || Error::Budget(format!("more than {cap} augmented data orders"));
        if data_order.is_acyclic() {
            for v in exec.variable_ids() {
                let members: Vec<OpId> = exec
                    .op_ids()
                    .filter(|&o| exec.op(o).var == v && include(o))
                    .collect();
                let exts = linear_extensions(data_order, &members, cap).ok_or_else(over)?;
                total = total
                    .checked_mul(exts.len())
                    .filter(|&t| t <= cap)
                    .ok_or_else(over)?;
                groups.push(exts);
            }
        }
        Ok(Augmentations {
            base: data_order.clone(),
            counter: vec![0; groups.len()],
            done: !data_order.is_acyclic(),
            groups,
        })
    }

    /// Number of relations the iterator yields from a fresh start.
    pub fn count_total(&self) -> usize {
        if self.groups.is_empty() && !self.base.is_acyclic() {
            return 0;
        }
        self.groups.iter().map(Vec::len).product()
    }
}

impl Iterator for Augmentations {
    type Item = Relation;

    fn next(&mut self) -> Option<Relation> {
        if self.done {
            return None;
        }
        let mut rel = self.base.clone();
        for (g, &c) in self.groups.iter().zip(&self.counter) {
            let order = &g[c];
            for (i, &a) in order.iter().enumerate() {
                for &b in &order[i + 1..] {
                    rel.insert(a, b, Provenance::Augmented);
                }
            }
        }
        // advance odometer
        let mut k = self.groups.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.counter[k] += 1;
            if self.counter[k] < self.groups[k].len() {
                break;
            }
            self.counter[k] = 0;
        }
        Some(rel)
    }
}

/// Every per-variable total order of all operations consistent with data
/// order. Empty when data order is cyclic.
pub fn augmented_data_orders(
    exec: &Execution,
    data_order: &Relation,
    cap: usize,
) -> Result<Augmentations, Error> {
    Augmentations::new(exec, data_order, cap, |_| true)
}

/// Like [`augmented_data_orders`] but totally ordering only the writes of
/// each variable.
pub fn augmented_write_orders(
    exec: &Execution,
    data_order: &Relation,
    cap: usize,
) -> Result<Augmentations, Error> {
    Augmentations::new(exec, data_order, cap, |o| exec.op(o).kind.is_write())
}

//! Synchronized models as consistency transitions between labeled
//! operations.
//!
//! Each operation carries a set of properties. Two operations are ordered by
//! the synchronization order when both carry a property whose relation
//! orders them. A model adds its own `D` edges between ordinary and
//! synchronization operations, and the transitive order `T` re-links
//! ordinary operations whose connecting chain runs only through another
//! process's synchronized reads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::check::{check_node, exists_serial_order, members_of, CheckOptions, Query};
use crate::error::Error;
use crate::lattice::{ModelNode, Property, PropertySet};
use crate::orders::{anti_order, Orders, SerialOrderSpace};
use crate::relation::{Provenance, Relation};
use crate::trace::{Execution, OpId, OpKind, OperationPattern};
use crate::verdict::{Counterexample, Status, Verdict, View};
use crate::view::enumerate_serial_views;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyncModelKind {
    Weak,
    Release,
    LazyRelease,
    Entry,
    Scope,
    Location,
}

impl SyncModelKind {
    pub const ALL: [SyncModelKind; 6] = [
        SyncModelKind::Weak,
        SyncModelKind::Release,
        SyncModelKind::LazyRelease,
        SyncModelKind::Entry,
        SyncModelKind::Scope,
        SyncModelKind::Location,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyncModelKind::Weak => "weak",
            SyncModelKind::Release => "release",
            SyncModelKind::LazyRelease => "lazy-release",
            SyncModelKind::Entry => "entry",
            SyncModelKind::Scope => "scope",
            SyncModelKind::Location => "location",
        }
    }

    /// Weak consistency marks ordinary reads and writes as synchronizing;
    /// every other model uses acquires and releases.
    fn expects_acquire_release(self) -> bool {
        self != SyncModelKind::Weak
    }
}

impl fmt::Display for SyncModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyncModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let norm = if norm == "lazyrelease" {
            "lazy-release".to_string()
        } else {
            norm
        };
        SyncModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Original: one total order of the synchronization operations shared by all
/// views. Revised: only the order the program can observe is shared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    #[default]
    Revised,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(Variant::Original),
            "revised" => Ok(Variant::Revised),
            _ => Err(Error::UnknownModel(format!("variant `{s}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Original => "original",
            Variant::Revised => "revised",
        })
    }
}

/// Property labels of every operation plus the model's `D` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeling {
    pub labels: Vec<PropertySet>,
    pub d: Relation,
}

fn sequential_label() -> PropertySet {
    PropertySet::new([Property::GPO, Property::GWO, Property::GAO])
}

impl Labeling {
    /// Synchronization operations get GPO+GWO+GAO, ordinary ones GPDO,
    /// unless the trace labels them explicitly. An initial write carries
    /// every label used on its variable.
    pub fn default_for(exec: &Execution, d: Relation) -> Self {
        Self::build(exec, d, |kind| {
            if kind.is_sync() {
                sequential_label()
            } else {
                PropertySet::new([Property::GPDO])
            }
        })
    }

    /// Every operation labeled `set`, with an empty `D`.
    pub fn uniform(exec: &Execution, set: PropertySet) -> Self {
        Self::build(exec, Relation::new(exec.len()), |_| set)
    }

    fn build(exec: &Execution, d: Relation, default: impl Fn(OpKind) -> PropertySet) -> Self {
        let mut labels = vec![PropertySet::EMPTY; exec.len()];
        for op in exec.ops().iter().filter(|o| !o.is_initial()) {
            labels[op.id.0] = op.labels.unwrap_or_else(|| default(op.kind));
        }
        for op in exec.ops().iter().filter(|o| !o.is_initial()) {
            let init = exec.initial_write(op.var);
            labels[init.0] = labels[init.0].union(labels[op.id.0]);
        }
        Labeling { labels, d }
    }

    pub fn has(&self, op: OpId, p: Property) -> bool {
        self.labels[op.0].contains(p)
    }
}

fn sync_read(exec: &Execution, o: OpId) -> bool {
    let k = exec.op(o).kind;
    k.is_sync() && k.is_read()
}

fn sync_write(exec: &Execution, o: OpId) -> bool {
    let k = exec.op(o).kind;
    k.is_sync() && k.is_write()
}

fn ordinary(exec: &Execution, o: OpId) -> bool {
    let op = exec.op(o);
    !op.kind.is_sync() && !op.is_initial()
}

fn check_kinds(exec: &Execution, kind: SyncModelKind) -> Result<(), Error> {
    for op in exec.ops() {
        let wrong = match op.kind {
            OpKind::SyncRead | OpKind::SyncWrite => kind.expects_acquire_release(),
            OpKind::Acquire | OpKind::Release => !kind.expects_acquire_release(),
            _ => false,
        };
        if wrong {
            return Err(Error::SyncKindMismatch {
                model: kind.to_string(),
                expected: if kind.expects_acquire_release() {
                    "acq/rel"
                } else {
                    "sr/sw"
                },
                found: op.kind.to_string(),
                line: op.line.unwrap_or(0),
            });
        }
    }
    Ok(())
}

/// The synchronization variable of a sync operation: its `@` tag, or the
/// variable it accesses.
fn sync_var_of(exec: &Execution, o: OpId) -> String {
    let op = exec.op(o);
    op.sync_var
        .clone()
        .unwrap_or_else(|| exec.var_name(op.var).to_string())
}

/// Static association of ordinary variables to synchronization variables,
/// read from the `@` tags of ordinary operations.
fn associations(exec: &Execution) -> Result<BTreeMap<String, String>, Error> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for op in exec.ops().iter().filter(|o| ordinary(exec, o.id)) {
        let Some(tag) = &op.sync_var else { continue };
        let var = exec.var_name(op.var).to_string();
        match map.get(&var) {
            Some(first) if first != tag => {
                return Err(Error::ConflictingAssociation {
                    var,
                    first: first.clone(),
                    second: tag.clone(),
                })
            }
            _ => {
                map.insert(var, tag.clone());
            }
        }
    }
    Ok(map)
}

/// Ordinary operations of a process before and after `s` in program order.
fn around(exec: &Execution, s: OpId) -> (Vec<OpId>, Vec<OpId>) {
    let p = exec.op(s).proc.expect("sync ops belong to a process");
    let local = exec.local_order(p);
    let pos = local
        .iter()
        .position(|&o| o == s)
        .expect("op in its process");
    let before = local[..pos]
        .iter()
        .copied()
        .filter(|&o| ordinary(exec, o))
        .collect();
    let after = local[pos + 1..]
        .iter()
        .copied()
        .filter(|&o| ordinary(exec, o))
        .collect();
    (before, after)
}

/// The `D` order of a synchronized model.
pub fn build_d(exec: &Execution, kind: SyncModelKind) -> Result<Relation, Error> {
    check_kinds(exec, kind)?;
    let prov = Provenance::Dependency { model: kind };
    let mut d = Relation::new(exec.len());
    let sync_ops: Vec<OpId> = exec
        .op_ids()
        .filter(|&o| exec.op(o).kind.is_sync())
        .collect();
    match kind {
        SyncModelKind::Weak => {
            for &s in &sync_ops {
                let (before, after) = around(exec, s);
                for o in before {
                    d.insert(o, s, prov);
                }
                for o in after {
                    d.insert(s, o, prov);
                }
            }
        }
        SyncModelKind::Release => release_edges(exec, &sync_ops, &mut d, prov, |_, _| true),
        SyncModelKind::Entry | SyncModelKind::Location => {
            let assoc = associations(exec)?;
            release_edges(exec, &sync_ops, &mut d, prov, |o, s| {
                assoc.get(exec.var_name(exec.op(o).var)) == Some(&sync_var_of(exec, s))
            });
        }
        SyncModelKind::LazyRelease => lazy_release_edges(exec, &sync_ops, &mut d, prov),
        SyncModelKind::Scope => scope_edges(exec, &mut d, prov),
    }
    Ok(d)
}

fn release_edges(
    exec: &Execution,
    sync_ops: &[OpId],
    d: &mut Relation,
    prov: Provenance,
    related: impl Fn(OpId, OpId) -> bool,
) {
    for &s in sync_ops {
        let (before, after) = around(exec, s);
        match exec.op(s).kind {
            OpKind::Acquire => {
                for o in after.into_iter().filter(|&o| related(o, s)) {
                    d.insert(s, o, prov);
                }
            }
            OpKind::Release => {
                for o in before.into_iter().filter(|&o| related(o, s)) {
                    d.insert(o, s, prov);
                }
            }
            _ => {}
        }
    }
}

/// Acquires order later operations after them; an ordinary operation before
/// a release is ordered before every acquire that release reaches through
/// `S`, recomputed until no edge is added.
fn lazy_release_edges(exec: &Execution, sync_ops: &[OpId], d: &mut Relation, prov: Provenance) {
    for &s in sync_ops {
        if exec.op(s).kind == OpKind::Acquire {
            for o in around(exec, s).1 {
                d.insert(s, o, prov);
            }
        }
    }
    let is_sync = |o: OpId| exec.op(o).kind.is_sync();
    let mut sync_base = Relation::new(exec.len());
    let orders = Orders::new(exec);
    for e in orders.po.edges().chain(orders.wo.edges()) {
        if is_sync(e.from) && is_sync(e.to) {
            sync_base.insert(e.from, e.to, e.provenance);
        }
    }
    for (w, r) in exec.writes_to_pairs() {
        if is_sync(w) && is_sync(r) {
            sync_base.insert(w, r, Provenance::WritesTo);
        }
    }
    let releases: Vec<OpId> = sync_ops
        .iter()
        .copied()
        .filter(|&s| exec.op(s).kind == OpKind::Release)
        .collect();
    let acquires: Vec<OpId> = sync_ops
        .iter()
        .copied()
        .filter(|&s| exec.op(s).kind == OpKind::Acquire)
        .collect();
    loop {
        let s = d.union(&sync_base).transitive_closure();
        let mut added = false;
        for &rel in &releases {
            for &acq in acquires.iter().filter(|&&a| s.contains(rel, a)) {
                for o in around(exec, rel).0 {
                    added |= d.insert(o, acq, prov);
                }
            }
        }
        if !added {
            break;
        }
    }
}

/// An ordinary operation inside an acquire/release window on `v` (its most
/// recent earlier sync operation on `v` is an acquire) is ordered after
/// that acquire and before the next release on `v`, if any.
fn scope_edges(exec: &Execution, d: &mut Relation, prov: Provenance) {
    for p in exec.process_ids() {
        let local = exec.local_order(p);
        for (pos, &o) in local.iter().enumerate() {
            if !ordinary(exec, o) {
                continue;
            }
            let mut seen = Vec::new();
            for &s in local[..pos].iter().rev() {
                if !exec.op(s).kind.is_sync() {
                    continue;
                }
                let v = sync_var_of(exec, s);
                if seen.contains(&v) {
                    continue;
                }
                seen.push(v.clone());
                if exec.op(s).kind != OpKind::Acquire {
                    continue;
                }
                d.insert(s, o, prov);
                let next = local[pos + 1..]
                    .iter()
                    .copied()
                    .find(|&t| exec.op(t).kind.is_sync() && sync_var_of(exec, t) == v);
                if let Some(t) = next.filter(|&t| exec.op(t).kind == OpKind::Release) {
                    d.insert(o, t, prov);
                }
            }
        }
    }
}

/// Union over properties of the property's relation restricted to pairs
/// labeled with it on both ends.
pub fn synch_order(
    exec: &Execution,
    orders: &Orders,
    labeling: &Labeling,
    so: &Relation,
) -> Relation {
    let mut out = Relation::new(exec.len());
    for property in Property::ALL {
        if !labeling.labels.iter().any(|l| l.contains(property)) {
            continue;
        }
        let rel = match property {
            Property::GPO => orders.po.clone(),
            Property::GDO => orders.data.clone(),
            Property::GWO => orders.wo.clone(),
            Property::GPDO => orders.pdo.clone(),
            Property::GAO => so.union(&anti_order(exec, &orders.data, so)),
        };
        for e in rel.edges() {
            if labeling.has(e.from, property) && labeling.has(e.to, property) {
                out.insert(e.from, e.to, Provenance::Synch { property });
            }
        }
    }
    out
}

/// The four transitive-order clauses.
pub fn transitive_order(exec: &Execution, d: &Relation, synch: &Relation) -> Relation {
    let plus = synch.transitive_closure();
    let mut t = Relation::new(exec.len());
    let t_edge = |clause| Provenance::Transitive { clause };
    let d_into =
        |target: OpId| -> Vec<OpId> { exec.op_ids().filter(|&o| d.contains(o, target)).collect() };
    let sync_reads: Vec<OpId> = exec.op_ids().filter(|&o| sync_read(exec, o)).collect();
    for &sr in &sync_reads {
        let before = d_into(sr);
        let after: Vec<OpId> = d.successors(sr).collect();
        for sw in plus.successors(sr).filter(|&w| sync_write(exec, w)) {
            for &o in &before {
                t.insert(o, sw, t_edge(1));
            }
        }
        for sw in exec
            .op_ids()
            .filter(|&w| sync_write(exec, w) && plus.contains(w, sr))
        {
            for &o in &after {
                t.insert(sw, o, t_edge(2));
            }
        }
        for &o1 in &before {
            for &o2 in after.iter().filter(|&&o2| o2 != o1) {
                t.insert(o1, o2, t_edge(3));
            }
        }
    }
    for &sr1 in &sync_reads {
        let before = d_into(sr1);
        for sr2 in plus.successors(sr1).filter(|&r| sync_read(exec, r)) {
            for &o1 in &before {
                for o2 in d.successors(sr2).filter(|&o2| o2 != o1) {
                    t.insert(o1, o2, t_edge(4));
                }
            }
        }
    }
    t
}

/// `∃ SO ∀ i` a view over process `i`'s reads and all writes respecting
/// `iLocal ∪ synch ∪ D ∪ T`, with an optional extra shared order on the
/// synchronization operations.
pub fn check_generalized(
    exec: &Execution,
    labeling: &Labeling,
    partial: bool,
    shared: Option<&Relation>,
    opts: &CheckOptions,
) -> Verdict {
    let orders = Orders::new(exec);
    let gao = |o: OpId| labeling.has(o, Property::GAO);
    let space = SerialOrderSpace::filtered(exec, opts.prune_serial_orders, |w, r| gao(w) && gao(r));
    let locals: Vec<(String, Vec<bool>, Relation)> = exec
        .process_ids()
        .map(|p| {
            (
                exec.process_name(p).to_string(),
                members_of(exec, &OperationPattern::own_reads_all_writes(p)),
                exec.local_relation(p),
            )
        })
        .collect();
    let build = |so: &Relation| -> Vec<Query> {
        let mut synch = synch_order(exec, &orders, labeling, so);
        if let Some(seq) = shared {
            synch.extend(seq);
        }
        let t = transitive_order(exec, &labeling.d, &synch);
        let common = synch.union(&labeling.d).union(&t);
        locals
            .iter()
            .map(|(scope, members, local)| Query {
                scope: scope.clone(),
                members: members.clone(),
                relation: local.union(&common),
            })
            .collect()
    };
    exists_serial_order(exec, &space, partial, opts, &build)
}

/// A synchronized model under the default labeling.
pub fn check_synchronized(
    exec: &Execution,
    kind: SyncModelKind,
    variant: Variant,
    opts: &CheckOptions,
) -> Result<Verdict, Error> {
    let d = build_d(exec, kind)?;
    let labeling = Labeling::default_for(exec, d);
    let partial = kind == SyncModelKind::Location;
    Ok(match variant {
        Variant::Revised => check_generalized(exec, &labeling, partial, None, opts),
        Variant::Original => check_original(exec, &labeling, partial, opts),
    })
}

/// Tries every sequential order of the synchronization operations as an
/// order shared by all views.
fn check_original(
    exec: &Execution,
    labeling: &Labeling,
    partial: bool,
    opts: &CheckOptions,
) -> Verdict {
    let members: Vec<bool> = exec
        .ops()
        .iter()
        .map(|o| o.kind.is_sync() || o.is_initial())
        .collect();
    let candidates = match enumerate_serial_views(
        exec,
        &members,
        exec.process_order(),
        opts.augmentations,
        opts.view_nodes,
    ) {
        Ok(c) => c,
        Err(e) => return Verdict::unknown(e.to_string(), 0),
    };
    let mut spent = 0;
    let mut unknown = None;
    let explored = candidates.len() as u64;
    for order in candidates {
        let sync_only: Vec<OpId> = order
            .into_iter()
            .filter(|&o| exec.op(o).kind.is_sync())
            .collect();
        let mut seq = Relation::new(exec.len());
        for (i, &a) in sync_only.iter().enumerate() {
            for &b in &sync_only[i + 1..] {
                seq.insert(a, b, Provenance::SyncSerial);
            }
        }
        let v = check_generalized(exec, labeling, partial, Some(&seq), opts);
        spent += v.budget_spent;
        match v.status {
            Status::Satisfied => {
                let mut views = vec![View {
                    scope: "sync".into(),
                    order: sync_only,
                }];
                views.extend(v.witness.unwrap_or_default());
                return Verdict::satisfied(views, spent);
            }
            Status::Unknown => {
                unknown.get_or_insert(v.reason.unwrap_or_default());
            }
            Status::Violated => {}
        }
    }
    match unknown {
        Some(reason) => Verdict::unknown(reason, spent),
        None => Verdict::violated(
            Counterexample::Exhausted {
                scope: "sequential orders of synchronization operations".into(),
                explored,
            },
            spent,
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrfStatus {
    /// Not weakly consistent, so the implication holds trivially.
    Vacuous,
    /// Weakly consistent and sequentially consistent.
    Witnessed,
    /// Weakly consistent but not sequentially consistent.
    Violation,
    Unknown,
}

impl fmt::Display for DrfStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DrfStatus::Vacuous => "vacuous",
            DrfStatus::Witnessed => "witnessed",
            DrfStatus::Violation => "violation",
            DrfStatus::Unknown => "unknown",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrfReport {
    pub status: DrfStatus,
    pub weak: Verdict,
    pub sequential: Verdict,
}

/// Whether weak consistency of this trace implies its sequential
/// consistency. Synchronization operations count as ordinary reads and
/// writes on the sequential side.
pub fn drf_check(exec: &Execution, opts: &CheckOptions) -> Result<DrfReport, Error> {
    let weak = check_synchronized(exec, SyncModelKind::Weak, Variant::Revised, opts)?;
    let sequential = check_node(exec, &ModelNode::sequential(), opts);
    let status = match (weak.status, sequential.status) {
        (Status::Violated, _) => DrfStatus::Vacuous,
        (Status::Unknown, _) => DrfStatus::Unknown,
        (Status::Satisfied, Status::Satisfied) => DrfStatus::Witnessed,
        (Status::Satisfied, Status::Violated) => DrfStatus::Violation,
        (Status::Satisfied, Status::Unknown) => DrfStatus::Unknown,
    };
    Ok(DrfReport {
        status,
        weak,
        sequential,
    })
}

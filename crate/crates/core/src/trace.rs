//! Operations, executions and the line-oriented trace format.
//!
//! A trace line reads `<proc> <kind> <var> <value> [@<sync_var>] [!<props>]`.
//! Program order within a process is the order of its lines. Validation
//! synthesizes one initial write of `_` per variable, assigns dense ids
//! (initial writes first, in variable-name order, then trace lines in file
//! order) and derives the writes-to map from the values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::lattice::PropertySet;
use crate::relation::{Provenance, Relation};

/// Dense index of an operation inside an [`Execution`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpId(pub usize);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Write,
    SyncRead,
    SyncWrite,
    Acquire,
    Release,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::Read,
        OpKind::Write,
        OpKind::SyncRead,
        OpKind::SyncWrite,
        OpKind::Acquire,
        OpKind::Release,
    ];

    /// Acquires behave as reads for writes-to purposes.
    pub fn is_read(self) -> bool {
        matches!(self, OpKind::Read | OpKind::SyncRead | OpKind::Acquire)
    }

    /// Releases behave as writes for writes-to purposes.
    pub fn is_write(self) -> bool {
        !self.is_read()
    }

    pub fn is_sync(self) -> bool {
        !matches!(self, OpKind::Read | OpKind::Write)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpKind::Read => "r",
            OpKind::Write => "w",
            OpKind::SyncRead => "sr",
            OpKind::SyncWrite => "sw",
            OpKind::Acquire => "acq",
            OpKind::Release => "rel",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.mnemonic() == s)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// A value held by a variable. `Bottom` is only written by initial writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Bottom,
    Int(i64),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bottom => f.write_str("_"),
            Value::Int(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operation {
    pub id: OpId,
    pub kind: OpKind,
    /// `None` for the synthetic initial writes.
    pub proc: Option<ProcId>,
    pub var: VarId,
    pub value: Value,
    pub sync_var: Option<String>,
    pub labels: Option<PropertySet>,
    /// 1-based source line, absent for initial writes.
    pub line: Option<usize>,
}

impl Operation {
    pub fn is_initial(&self) -> bool {
        self.proc.is_none()
    }
}

/// One parsed trace line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawOp {
    pub line: usize,
    pub proc: String,
    pub kind: OpKind,
    pub var: String,
    pub value: Value,
    pub sync_var: Option<String>,
    pub labels: Option<PropertySet>,
}

/// A trace as written: operations in file order, not yet validated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawTrace {
    pub ops: Vec<RawOp>,
}

/// Reserved name of the initial writer.
pub const INITIAL_PROCESS: &str = "ε";

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s != "_"
        && s != INITIAL_PROCESS
        && s.chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | ':' | '\''))
}

pub fn parse_trace(text: &str) -> Result<RawTrace, TraceError> {
    RawTrace::parse(text)
}

impl RawTrace {
    pub fn parse(text: &str) -> Result<RawTrace, TraceError> {
        let mut ops = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            ops.push(parse_line(line, line_no)?);
        }
        Ok(RawTrace { ops })
    }

    /// Renders the trace in the file format, one operation per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for op in &self.ops {
            out.push_str(&render_op(
                &op.proc,
                op.kind,
                &op.var,
                op.value,
                op.sync_var.as_deref(),
                op.labels,
            ));
            out.push('\n');
        }
        out
    }

    /// Appends `suffix` to every process, variable and sync-variable name.
    pub fn renamed(&self, suffix: &str) -> RawTrace {
        let ops = self
            .ops
            .iter()
            .map(|op| RawOp {
                proc: format!("{}{}", op.proc, suffix),
                var: format!("{}{}", op.var, suffix),
                sync_var: op.sync_var.as_ref().map(|v| format!("{v}{suffix}")),
                ..op.clone()
            })
            .collect();
        RawTrace { ops }
    }

    /// Disjoint union of several traces, renaming each part apart.
    pub fn disjoint_union(parts: &[RawTrace]) -> RawTrace {
        let mut ops = Vec::new();
        for (i, part) in parts.iter().enumerate() {
            for op in part.renamed(&format!(".{i}")).ops {
                ops.push(RawOp {
                    line: ops.len() + 1,
                    ..op
                });
            }
        }
        RawTrace { ops }
    }
}

fn render_op(
    proc: &str,
    kind: OpKind,
    var: &str,
    value: Value,
    sync_var: Option<&str>,
    labels: Option<PropertySet>,
) -> String {
    let mut s = format!("{proc} {kind} {var} {value}");
    if let Some(v) = sync_var {
        s.push_str(" @");
        s.push_str(v);
    }
    if let Some(l) = labels {
        s.push_str(" !");
        s.push_str(&l.to_string());
    }
    s
}

fn parse_line(line: &str, line_no: usize) -> Result<RawOp, TraceError> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push((s, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push((s, &line[s..]));
    }
    let column = |byte: usize| line[..byte].chars().count() + 1;
    let syntax = |byte: usize, message: String| TraceError::Syntax {
        line: line_no,
        column: column(byte),
        message,
    };

    if tokens.len() < 4 {
        let at = tokens.last().map(|(s, t)| s + t.len()).unwrap_or(0);
        return Err(syntax(
            at,
            "expected `<proc> <kind> <var> <value>`".to_string(),
        ));
    }
    let (proc_at, proc) = tokens[0];
    if !valid_name(proc) {
        return Err(syntax(proc_at, format!("invalid process name `{proc}`")));
    }
    let (kind_at, kind_tok) = tokens[1];
    let kind = OpKind::from_mnemonic(kind_tok).ok_or_else(|| TraceError::UnknownKind {
        line: line_no,
        column: column(kind_at),
        kind: kind_tok.to_string(),
    })?;
    let (var_at, var) = tokens[2];
    if !valid_name(var) {
        return Err(syntax(var_at, format!("invalid variable name `{var}`")));
    }
    let (value_at, value_tok) = tokens[3];
    let value = if value_tok == "_" {
        Value::Bottom
    } else {
        value_tok
            .parse::<i64>()
            .map(Value::Int)
            .map_err(|_| syntax(value_at, format!("invalid value `{value_tok}`")))?
    };
    if value == Value::Bottom && kind.is_write() {
        return Err(TraceError::BottomWrite { line: line_no });
    }

    let mut sync_var = None;
    let mut labels = None;
    for &(at, tok) in &tokens[4..] {
        if let Some(name) = tok.strip_prefix('@') {
            if sync_var.is_some() {
                return Err(syntax(at, "duplicate `@` association".to_string()));
            }
            if !valid_name(name) {
                return Err(syntax(at, format!("invalid sync variable `{name}`")));
            }
            sync_var = Some(name.to_string());
        } else if let Some(props) = tok.strip_prefix('!') {
            if labels.is_some() {
                return Err(syntax(at, "duplicate `!` label set".to_string()));
            }
            labels = Some(props.parse::<PropertySet>().map_err(|e| syntax(at, e))?);
        } else {
            return Err(syntax(at, format!("unexpected token `{tok}`")));
        }
    }

    Ok(RawOp {
        line: line_no,
        proc: proc.to_string(),
        kind,
        var: var.to_string(),
        value,
        sync_var,
        labels,
    })
}

/// Source of a read: the initial write of its variable or a trace line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WriteSource {
    Initial,
    Line(usize),
}

/// Maps each read-kind operation (by index into `raw.ops`) to the write it
/// reads from.
pub fn derive_writes_to(raw: &RawTrace) -> Result<BTreeMap<usize, WriteSource>, TraceError> {
    let mut writers: HashMap<(&str, i64), usize> = HashMap::new();
    for (idx, op) in raw.ops.iter().enumerate() {
        if !op.kind.is_write() {
            continue;
        }
        let Value::Int(v) = op.value else {
            return Err(TraceError::BottomWrite { line: op.line });
        };
        if let Some(&first) = writers.get(&(op.var.as_str(), v)) {
            return Err(TraceError::DuplicateWrite {
                var: op.var.clone(),
                value: v,
                first_line: raw.ops[first].line,
                line: op.line,
            });
        }
        writers.insert((op.var.as_str(), v), idx);
    }
    let mut map = BTreeMap::new();
    for (idx, op) in raw.ops.iter().enumerate() {
        if !op.kind.is_read() {
            continue;
        }
        let source = match op.value {
            Value::Bottom => WriteSource::Initial,
            Value::Int(v) => match writers.get(&(op.var.as_str(), v)) {
                Some(&w) => WriteSource::Line(w),
                None => {
                    return Err(TraceError::DanglingRead {
                        var: op.var.clone(),
                        value: op.value.to_string(),
                        line: op.line,
                    })
                }
            },
        };
        map.insert(idx, source);
    }
    Ok(map)
}

pub fn validate(raw: &RawTrace) -> Result<Execution, TraceError> {
    Execution::from_raw(raw)
}

/// A validated execution: operations (initial writes included), local
/// orders, process order and writes-to. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    processes: Vec<String>,
    variables: Vec<String>,
    ops: Vec<Operation>,
    local: Vec<Vec<OpId>>,
    writes_to: Vec<Option<OpId>>,
    po: Relation,
}

impl Execution {
    pub fn from_raw(raw: &RawTrace) -> Result<Execution, TraceError> {
        let sources = derive_writes_to(raw)?;

        let variables: Vec<String> = raw
            .ops
            .iter()
            .map(|op| op.var.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let var_index: HashMap<&str, VarId> = variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), VarId(i)))
            .collect();

        let mut processes: Vec<String> = Vec::new();
        let mut proc_index: HashMap<&str, ProcId> = HashMap::new();
        for op in &raw.ops {
            if !proc_index.contains_key(op.proc.as_str()) {
                proc_index.insert(op.proc.as_str(), ProcId(processes.len()));
                processes.push(op.proc.clone());
            }
        }

        let base = variables.len();
        let mut ops: Vec<Operation> = (0..base)
            .map(|i| Operation {
                id: OpId(i),
                kind: OpKind::Write,
                proc: None,
                var: VarId(i),
                value: Value::Bottom,
                sync_var: None,
                labels: None,
                line: None,
            })
            .collect();
        let mut local = vec![Vec::new(); processes.len()];
        for (idx, op) in raw.ops.iter().enumerate() {
            let id = OpId(base + idx);
            let proc = proc_index[op.proc.as_str()];
            local[proc.0].push(id);
            ops.push(Operation {
                id,
                kind: op.kind,
                proc: Some(proc),
                var: var_index[op.var.as_str()],
                value: op.value,
                sync_var: op.sync_var.clone(),
                labels: op.labels,
                line: Some(op.line),
            });
        }

        let mut writes_to = vec![None; ops.len()];
        for (idx, source) in sources {
            let read = base + idx;
            writes_to[read] = Some(match source {
                WriteSource::Initial => OpId(ops[read].var.0),
                WriteSource::Line(w) => OpId(base + w),
            });
        }

        let mut po = Relation::new(ops.len());
        for order in &local {
            for (i, &a) in order.iter().enumerate() {
                for init in 0..base {
                    po.insert(OpId(init), a, Provenance::ProcessOrder);
                }
                for &b in &order[i + 1..] {
                    po.insert(a, b, Provenance::ProcessOrder);
                }
            }
        }

        Ok(Execution {
            processes,
            variables,
            ops,
            local,
            writes_to,
            po,
        })
    }

    pub fn parse(text: &str) -> Result<Execution, TraceError> {
        Execution::from_raw(&RawTrace::parse(text)?)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn op(&self, id: OpId) -> &Operation {
        &self.ops[id.0]
    }

    pub fn op_ids(&self) -> impl Iterator<Item = OpId> + '_ {
        (0..self.ops.len()).map(OpId)
    }

    pub fn processes(&self) -> &[String] {
        &self.processes
    }

    pub fn process_ids(&self) -> impl Iterator<Item = ProcId> {
        (0..self.processes.len()).map(ProcId)
    }

    pub fn process_name(&self, p: ProcId) -> &str {
        &self.processes[p.0]
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn variable_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.variables[v.0]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.variables
            .binary_search_by(|v| v.as_str().cmp(name))
            .ok()
            .map(VarId)
    }

    pub fn initial_write(&self, v: VarId) -> OpId {
        OpId(v.0)
    }

    /// The process's own operations in program order (initial writes excluded).
    pub fn local_order(&self, p: ProcId) -> &[OpId] {
        &self.local[p.0]
    }

    pub fn writes_to(&self, read: OpId) -> Option<OpId> {
        self.writes_to[read.0]
    }

    /// Read-kind operations paired with their source write.
    pub fn writes_to_pairs(&self) -> impl Iterator<Item = (OpId, OpId)> + '_ {
        self.writes_to
            .iter()
            .enumerate()
            .filter_map(|(r, w)| w.map(|w| (w, OpId(r))))
    }

    pub fn reads(&self) -> impl Iterator<Item = OpId> + '_ {
        self.ops.iter().filter(|o| o.kind.is_read()).map(|o| o.id)
    }

    pub fn writes(&self) -> impl Iterator<Item = OpId> + '_ {
        self.ops.iter().filter(|o| o.kind.is_write()).map(|o| o.id)
    }

    pub fn has_sync_ops(&self) -> bool {
        self.ops.iter().any(|o| o.kind.is_sync())
    }

    /// Process order: union of the local orders, initial writes first.
    pub fn process_order(&self) -> &Relation {
        &self.po
    }

    /// `<_{iLocal}`: total order on the process's operations with every
    /// initial write before them.
    pub fn local_relation(&self, p: ProcId) -> Relation {
        let mut rel = Relation::new(self.ops.len());
        let order = &self.local[p.0];
        for (i, &a) in order.iter().enumerate() {
            for init in 0..self.variables.len() {
                rel.insert(OpId(init), a, Provenance::LocalOrder);
            }
            for &b in &order[i + 1..] {
                rel.insert(a, b, Provenance::LocalOrder);
            }
        }
        rel
    }

    /// Operations matching at least one pattern, ascending by id.
    pub fn select(&self, patterns: &[OperationPattern]) -> Vec<OpId> {
        self.ops
            .iter()
            .filter(|op| patterns.iter().any(|p| p.matches(op)))
            .map(|op| op.id)
            .collect()
    }

    /// `(w,p1,x,1)` style description.
    pub fn describe(&self, id: OpId) -> String {
        let op = self.op(id);
        let proc = match op.proc {
            Some(p) => self.process_name(p),
            None => INITIAL_PROCESS,
        };
        format!(
            "({},{},{},{})",
            op.kind,
            proc,
            self.var_name(op.var),
            op.value
        )
    }

    /// The operation in trace-line syntax; initial writes use `ε`.
    pub fn op_line(&self, id: OpId) -> String {
        let op = self.op(id);
        let proc = match op.proc {
            Some(p) => self.process_name(p),
            None => INITIAL_PROCESS,
        };
        render_op(
            proc,
            op.kind,
            self.var_name(op.var),
            op.value,
            op.sync_var.as_deref(),
            op.labels,
        )
    }

    /// Back to trace form. Lines are renumbered 1..n in id order.
    pub fn to_raw(&self) -> RawTrace {
        let ops = self
            .ops
            .iter()
            .filter(|op| !op.is_initial())
            .enumerate()
            .map(|(i, op)| RawOp {
                line: i + 1,
                proc: self.process_name(op.proc.expect("process op")).to_string(),
                kind: op.kind,
                var: self.var_name(op.var).to_string(),
                value: op.value,
                sync_var: op.sync_var.clone(),
                labels: op.labels,
            })
            .collect();
        RawTrace { ops }
    }

    pub fn render(&self) -> String {
        self.to_raw().render()
    }
}

/// Kind selector of an [`OperationPattern`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KindPattern {
    Exact(OpKind),
    /// Any read-kind operation (`r`, `sr`, `acq`).
    Read,
    /// Any write-kind operation (`w`, `sw`, `rel`), initial writes included.
    Write,
    OrdinaryRead,
    OrdinaryWrite,
    SyncRead,
    SyncWrite,
    Sync,
}

impl KindPattern {
    pub fn matches(self, kind: OpKind) -> bool {
        match self {
            KindPattern::Exact(k) => k == kind,
            KindPattern::Read => kind.is_read(),
            KindPattern::Write => kind.is_write(),
            KindPattern::OrdinaryRead => kind == OpKind::Read,
            KindPattern::OrdinaryWrite => kind == OpKind::Write,
            KindPattern::SyncRead => kind.is_sync() && kind.is_read(),
            KindPattern::SyncWrite => kind.is_sync() && kind.is_write(),
            KindPattern::Sync => kind.is_sync(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProcPattern {
    Initial,
    Process(ProcId),
}

/// `(kind, proc, var, value)` with `None` standing for `*`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct OperationPattern {
    pub kind: Option<KindPattern>,
    pub proc: Option<ProcPattern>,
    pub var: Option<VarId>,
    pub value: Option<Value>,
}

impl OperationPattern {
    /// `(*,*,*,*)`
    pub fn any() -> Self {
        Self::default()
    }

    pub fn kind(mut self, kind: KindPattern) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn proc(mut self, p: ProcId) -> Self {
        self.proc = Some(ProcPattern::Process(p));
        self
    }

    pub fn initial(mut self) -> Self {
        self.proc = Some(ProcPattern::Initial);
        self
    }

    pub fn var(mut self, v: VarId) -> Self {
        self.var = Some(v);
        self
    }

    pub fn value(mut self, v: Value) -> Self {
        self.value = Some(v);
        self
    }

    pub fn matches(&self, op: &Operation) -> bool {
        self.kind.is_none_or(|k| k.matches(op.kind))
            && self.proc.is_none_or(|p| match p {
                ProcPattern::Initial => op.proc.is_none(),
                ProcPattern::Process(p) => op.proc == Some(p),
            })
            && self.var.is_none_or(|v| v == op.var)
            && self.value.is_none_or(|v| v == op.value)
    }

    /// `(*,i,*,*) ∪ (w,*,*,*)`: the operations visible to process `i`.
    pub fn process_view(p: ProcId) -> Vec<OperationPattern> {
        vec![
            OperationPattern::any().proc(p),
            OperationPattern::any().kind(KindPattern::Write),
        ]
    }

    /// `(r,i,*,*) ∪ (w,*,*,*)` with read- and write-kinds of every flavor.
    pub fn own_reads_all_writes(p: ProcId) -> Vec<OperationPattern> {
        vec![
            OperationPattern::any().kind(KindPattern::Read).proc(p),
            OperationPattern::any().kind(KindPattern::Write),
        ]
    }
}

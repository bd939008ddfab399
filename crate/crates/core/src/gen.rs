//! Trace generators that simulate memory implementations, and a mutator
//! that perturbs read values of existing traces.
//!
//! Every generator produces values by actually reading a simulated store,
//! so membership in the target model holds by construction:
//!
//! | model        | implementation                                           |
//! |--------------|----------------------------------------------------------|
//! | `sequential` | one store, operations applied atomically                 |
//! | `pram`       | replica per process, FIFO pipeline per writer/reader pair |
//! | `cache`      | per-variable log, monotone read cursor per process       |
//! | `causal`     | replicas with vector-clock causal delivery               |
//! | `slow`       | FIFO pipeline per (writer, reader, variable)             |
//! | `local`      | replicas receiving writes in arbitrary order             |
//! | `processor`  | FIFO store buffers draining into one memory              |
//!
//! Synchronized targets run the sequential store and interleave sync
//! operations of the kinds the model expects.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::trace::{Execution, OpKind, RawOp, RawTrace, Value};
use crate::transitions::SyncModelKind;

/// Which implementation to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenModel {
    Sequential,
    Pram,
    Cache,
    Causal,
    Slow,
    Local,
    Processor,
    Sync(SyncModelKind),
}

impl GenModel {
    pub const CLASSICAL: [GenModel; 7] = [
        GenModel::Sequential,
        GenModel::Pram,
        GenModel::Cache,
        GenModel::Causal,
        GenModel::Slow,
        GenModel::Local,
        GenModel::Processor,
    ];
}

impl FromStr for GenModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "sequential" => GenModel::Sequential,
            "pram" => GenModel::Pram,
            "cache" => GenModel::Cache,
            "causal" => GenModel::Causal,
            "slow" => GenModel::Slow,
            "local" => GenModel::Local,
            "processor" => GenModel::Processor,
            other => GenModel::Sync(
                other
                    .parse()
                    .map_err(|_| Error::UnknownModel(s.trim().to_string()))?,
            ),
        })
    }
}

impl fmt::Display for GenModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenModel::Sequential => "sequential",
            GenModel::Pram => "pram",
            GenModel::Cache => "cache",
            GenModel::Causal => "causal",
            GenModel::Slow => "slow",
            GenModel::Local => "local",
            GenModel::Processor => "processor",
            GenModel::Sync(kind) => return write!(f, "{kind}"),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub model: GenModel,
    pub procs: usize,
    /// Operations issued by each process.
    pub ops: usize,
    pub vars: usize,
    pub seed: u64,
    /// Chance that an operation of a synchronized target is a sync op.
    pub sync_prob: f64,
}

impl GenSpec {
    pub fn new(model: GenModel, procs: usize, ops: usize, seed: u64) -> Self {
        GenSpec {
            model,
            procs,
            ops,
            vars: 2,
            seed,
            sync_prob: 0.25,
        }
    }
}

const VAR_NAMES: [&str; 6] = ["x", "y", "z", "u", "v", "w"];

fn var_name(i: usize) -> String {
    match VAR_NAMES.get(i) {
        Some(name) => name.to_string(),
        None => format!("x{i}"),
    }
}

fn sync_var_name(i: usize) -> String {
    format!("s{i}")
}

/// Which write a replica slot currently holds: `None` is the initial write.
type Slot = Option<usize>;

/// A write issued by the simulation, indexed by position in `Sim::writes`.
#[derive(Clone, Debug)]
struct Write {
    proc: usize,
    var: usize,
    value: i64,
}

struct Sim {
    rng: ChaCha8Rng,
    spec: GenSpec,
    next_value: BTreeMap<usize, i64>,
    writes: Vec<Write>,
    remaining: Vec<usize>,
    out: Vec<RawOp>,
}

/// What the next operation of a process will be.
#[derive(Clone, Copy, Debug)]
struct Intent {
    kind: OpKind,
    var: usize,
}

impl Sim {
    fn new(spec: &GenSpec) -> Self {
        Sim {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec: spec.clone(),
            next_value: BTreeMap::new(),
            writes: Vec::new(),
            remaining: vec![spec.ops; spec.procs],
            out: Vec::new(),
        }
    }

    /// Variables: ordinary ones first, sync variables after.
    fn intent(&mut self) -> Intent {
        let vars = self.spec.vars.max(1);
        if let GenModel::Sync(kind) = self.spec.model {
            if self.rng.gen_bool(self.spec.sync_prob.clamp(0.0, 1.0)) {
                let read = self.rng.gen_bool(0.5);
                let kind = match (kind, read) {
                    (SyncModelKind::Weak, true) => OpKind::SyncRead,
                    (SyncModelKind::Weak, false) => OpKind::SyncWrite,
                    (_, true) => OpKind::Acquire,
                    (_, false) => OpKind::Release,
                };
                let var = vars + self.rng.gen_range(0..vars);
                return Intent { kind, var };
            }
        }
        let kind = if self.rng.gen_bool(0.5) {
            OpKind::Read
        } else {
            OpKind::Write
        };
        Intent {
            kind,
            var: self.rng.gen_range(0..vars),
        }
    }

    fn var_label(&self, var: usize) -> String {
        let vars = self.spec.vars.max(1);
        if var < vars {
            var_name(var)
        } else {
            sync_var_name(var - vars)
        }
    }

    fn emit(&mut self, proc: usize, kind: OpKind, var: usize, value: Value) {
        let op = RawOp {
            line: self.out.len() + 1,
            proc: format!("p{}", proc + 1),
            kind,
            var: self.var_label(var),
            value,
            sync_var: None,
            labels: None,
        };
        self.out.push(op);
    }

    /// Issues a fresh write and returns its index.
    fn write(&mut self, proc: usize, kind: OpKind, var: usize) -> usize {
        let counter = self.next_value.entry(var).or_insert(0);
        *counter += 1;
        let value = *counter;
        self.writes.push(Write { proc, var, value });
        self.emit(proc, kind, var, Value::Int(value));
        self.writes.len() - 1
    }

    fn read(&mut self, proc: usize, kind: OpKind, var: usize, slot: Slot) {
        let value = match slot {
            Some(w) => Value::Int(self.writes[w].value),
            None => Value::Bottom,
        };
        self.emit(proc, kind, var, value);
    }

    fn var_count(&self) -> usize {
        let vars = self.spec.vars.max(1);
        match self.spec.model {
            GenModel::Sync(_) => 2 * vars,
            _ => vars,
        }
    }

    fn active(&self) -> Vec<usize> {
        (0..self.spec.procs)
            .filter(|&p| self.remaining[p] > 0)
            .collect()
    }

    fn finish(self) -> RawTrace {
        RawTrace { ops: self.out }
    }
}

/// A simulated implementation: issue operations, deliver pending updates.
trait Memory {
    /// Number of deliveries currently possible.
    fn deliverable(&self, sim: &Sim) -> usize;
    fn deliver(&mut self, sim: &mut Sim, which: usize);
    fn issue(&mut self, sim: &mut Sim, proc: usize, intent: Intent);
}

fn run(spec: &GenSpec, memory: &mut dyn Memory) -> RawTrace {
    let mut sim = Sim::new(spec);
    loop {
        let active = sim.active();
        let deliverable = memory.deliverable(&sim);
        if active.is_empty() {
            break;
        }
        let choice = sim.rng.gen_range(0..active.len() + deliverable);
        if choice < active.len() {
            let proc = active[choice];
            sim.remaining[proc] -= 1;
            let intent = sim.intent();
            memory.issue(&mut sim, proc, intent);
        } else {
            memory.deliver(&mut sim, choice - active.len());
        }
    }
    sim.finish()
}

struct SingleStore {
    store: Vec<Slot>,
}

impl Memory for SingleStore {
    fn deliverable(&self, _: &Sim) -> usize {
        0
    }

    fn deliver(&mut self, _: &mut Sim, _: usize) {}

    fn issue(&mut self, sim: &mut Sim, proc: usize, intent: Intent) {
        if intent.kind.is_write() {
            self.store[intent.var] = Some(sim.write(proc, intent.kind, intent.var));
        } else {
            sim.read(proc, intent.kind, intent.var, self.store[intent.var]);
        }
    }
}

/// Replicas fed by FIFO channels. `key` picks the channel a write travels
/// on; `ordered == false` lets any queued write be delivered next.
struct Replicated {
    replicas: Vec<Vec<Slot>>,
    channels: BTreeMap<(usize, usize, usize), VecDeque<usize>>,
    per_variable: bool,
    ordered: bool,
}

impl Replicated {
    fn new(procs: usize, vars: usize, per_variable: bool, ordered: bool) -> Self {
        Replicated {
            replicas: vec![vec![None; vars]; procs],
            channels: BTreeMap::new(),
            per_variable,
            ordered,
        }
    }

    /// (channel key, index within that channel) of every deliverable write.
    fn candidates(&self) -> Vec<((usize, usize, usize), usize)> {
        let mut out = Vec::new();
        for (key, queue) in &self.channels {
            if self.ordered {
                if !queue.is_empty() {
                    out.push((*key, 0));
                }
            } else {
                out.extend((0..queue.len()).map(|i| (*key, i)));
            }
        }
        out
    }
}

impl Memory for Replicated {
    fn deliverable(&self, _: &Sim) -> usize {
        self.candidates().len()
    }

    fn deliver(&mut self, sim: &mut Sim, which: usize) {
        let (key, index) = self.candidates()[which];
        let queue = self.channels.get_mut(&key).expect("channel exists");
        let w = queue.remove(index).expect("index in range");
        if queue.is_empty() {
            self.channels.remove(&key);
        }
        let var = sim.writes[w].var;
        self.replicas[key.1][var] = Some(w);
    }

    fn issue(&mut self, sim: &mut Sim, proc: usize, intent: Intent) {
        if intent.kind.is_read() {
            sim.read(
                proc,
                intent.kind,
                intent.var,
                self.replicas[proc][intent.var],
            );
            return;
        }
        let w = sim.write(proc, intent.kind, intent.var);
        self.replicas[proc][intent.var] = Some(w);
        for dst in (0..self.replicas.len()).filter(|&d| d != proc) {
            let var_key = if self.per_variable { intent.var } else { 0 };
            self.channels
                .entry((proc, dst, var_key))
                .or_default()
                .push_back(w);
        }
    }
}

/// Per-variable serializer: a log of writes and a read cursor per process.
struct VariableLogs {
    logs: Vec<Vec<usize>>,
    /// Position in the log, where 0 is the initial value.
    cursors: Vec<Vec<usize>>,
}

impl Memory for VariableLogs {
    fn deliverable(&self, _: &Sim) -> usize {
        0
    }

    fn deliver(&mut self, _: &mut Sim, _: usize) {}

    fn issue(&mut self, sim: &mut Sim, proc: usize, intent: Intent) {
        let var = intent.var;
        if intent.kind.is_write() {
            let w = sim.write(proc, intent.kind, var);
            self.logs[var].push(w);
            self.cursors[proc][var] = self.logs[var].len();
        } else {
            let cursor = self.cursors[proc][var];
            let next = sim.rng.gen_range(cursor..=self.logs[var].len());
            self.cursors[proc][var] = next;
            let slot = next.checked_sub(1).map(|i| self.logs[var][i]);
            sim.read(proc, intent.kind, var, slot);
        }
    }
}

/// Causal broadcast: a write is applied at a replica once every write it
/// causally depends on has been applied there.
struct CausalReplicas {
    replicas: Vec<Vec<Slot>>,
    clocks: Vec<Vec<u64>>,
    /// (destination, write, the writer's clock at issue)
    in_flight: Vec<(usize, usize, Vec<u64>)>,
}

impl CausalReplicas {
    fn ready(&self, sim: &Sim) -> Vec<usize> {
        (0..self.in_flight.len())
            .filter(|&i| {
                let (dst, w, stamp) = &self.in_flight[i];
                let src = sim.writes[*w].proc;
                let local = &self.clocks[*dst];
                stamp.iter().enumerate().all(|(k, &t)| {
                    if k == src {
                        t == local[k] + 1
                    } else {
                        t <= local[k]
                    }
                })
            })
            .collect()
    }
}

impl Memory for CausalReplicas {
    fn deliverable(&self, sim: &Sim) -> usize {
        self.ready(sim).len()
    }

    fn deliver(&mut self, sim: &mut Sim, which: usize) {
        let index = self.ready(sim)[which];
        let (dst, w, _) = self.in_flight.remove(index);
        let write = &sim.writes[w];
        self.clocks[dst][write.proc] += 1;
        self.replicas[dst][write.var] = Some(w);
    }

    fn issue(&mut self, sim: &mut Sim, proc: usize, intent: Intent) {
        if intent.kind.is_read() {
            sim.read(
                proc,
                intent.kind,
                intent.var,
                self.replicas[proc][intent.var],
            );
            return;
        }
        let w = sim.write(proc, intent.kind, intent.var);
        self.replicas[proc][intent.var] = Some(w);
        self.clocks[proc][proc] += 1;
        let stamp = self.clocks[proc].clone();
        for dst in (0..self.replicas.len()).filter(|&d| d != proc) {
            self.in_flight.push((dst, w, stamp.clone()));
        }
    }
}

/// Store buffers: each process's writes wait in a FIFO before reaching the
/// shared memory; a process reads its own newest buffered write first.
struct StoreBuffers {
    memory: Vec<Slot>,
    buffers: Vec<VecDeque<usize>>,
}

impl StoreBuffers {
    fn nonempty(&self) -> Vec<usize> {
        (0..self.buffers.len())
            .filter(|&p| !self.buffers[p].is_empty())
            .collect()
    }
}

impl Memory for StoreBuffers {
    fn deliverable(&self, _: &Sim) -> usize {
        self.nonempty().len()
    }

    fn deliver(&mut self, sim: &mut Sim, which: usize) {
        let proc = self.nonempty()[which];
        let w = self.buffers[proc].pop_front().expect("nonempty buffer");
        self.memory[sim.writes[w].var] = Some(w);
    }

    fn issue(&mut self, sim: &mut Sim, proc: usize, intent: Intent) {
        if intent.kind.is_write() {
            let w = sim.write(proc, intent.kind, intent.var);
            self.buffers[proc].push_back(w);
            return;
        }
        let buffered = self.buffers[proc]
            .iter()
            .rev()
            .find(|&&w| sim.writes[w].var == intent.var)
            .copied();
        let slot = buffered.or(self.memory[intent.var]);
        sim.read(proc, intent.kind, intent.var, slot);
    }
}

/// Simulates `spec.model` and returns the resulting trace.
pub fn generate(spec: &GenSpec) -> RawTrace {
    let probe = Sim::new(spec);
    let vars = probe.var_count();
    let procs = spec.procs;
    let mut memory: Box<dyn Memory> = match spec.model {
        GenModel::Sequential | GenModel::Sync(_) => Box::new(SingleStore {
            store: vec![None; vars],
        }),
        GenModel::Pram => Box::new(Replicated::new(procs, vars, false, true)),
        GenModel::Slow => Box::new(Replicated::new(procs, vars, true, true)),
        GenModel::Local => Box::new(Replicated::new(procs, vars, false, false)),
        GenModel::Cache => Box::new(VariableLogs {
            logs: vec![Vec::new(); vars],
            cursors: vec![vec![0; vars]; procs],
        }),
        GenModel::Causal => Box::new(CausalReplicas {
            replicas: vec![vec![None; vars]; procs],
            clocks: vec![vec![0; procs]; procs],
            in_flight: Vec::new(),
        }),
        GenModel::Processor => Box::new(StoreBuffers {
            memory: vec![None; vars],
            buffers: vec![VecDeque::new(); procs],
        }),
    };
    run(spec, memory.as_mut())
}

/// Generates a trace in the file format.
pub fn gen_trace(spec: &GenSpec) -> String {
    generate(spec).render()
}

/// An unconstrained trace for property testing: `ops` operations spread
/// over `procs` processes and `vars` variables, each read returning `_` or
/// any value written to its variable anywhere in the trace.
pub fn arbitrary_trace(procs: usize, ops: usize, vars: usize, seed: u64) -> RawTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let procs = procs.max(1);
    let vars = vars.max(1);
    let mut written: Vec<Vec<Value>> = vec![vec![Value::Bottom]; vars];
    let mut shape = Vec::with_capacity(ops);
    for _ in 0..ops {
        let proc = rng.gen_range(0..procs);
        let var = rng.gen_range(0..vars);
        let write = rng.gen_bool(0.5);
        if write {
            let value = Value::Int(written[var].len() as i64);
            written[var].push(value);
            shape.push((proc, OpKind::Write, var, value));
        } else {
            shape.push((proc, OpKind::Read, var, Value::Bottom));
        }
    }
    let ops = shape
        .into_iter()
        .enumerate()
        .map(|(i, (proc, kind, var, value))| RawOp {
            line: i + 1,
            proc: format!("p{}", proc + 1),
            kind,
            var: var_name(var),
            value: if kind.is_read() {
                *written[var]
                    .choose(&mut rng)
                    .expect("bottom is always present")
            } else {
                value
            },
            sync_var: None,
            labels: None,
        })
        .collect();
    RawTrace { ops }
}

/// Reassigns the values of `n` randomly chosen reads to other values of the
/// same variable (another written value or `_`). The result always
/// validates. With `n == 0` the input text is returned unchanged.
pub fn mutate_trace(text: &str, seed: u64, n: usize) -> Result<String, Error> {
    let exec = Execution::parse(text)?;
    if n == 0 {
        return Ok(text.to_string());
    }
    let mut raw = exec.to_raw();
    let mut values: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    for op in &raw.ops {
        values
            .entry(op.var.clone())
            .or_insert_with(|| vec![Value::Bottom]);
    }
    for op in raw.ops.iter().filter(|op| op.kind.is_write()) {
        values
            .get_mut(op.var.as_str())
            .expect("seen")
            .push(op.value);
    }
    let candidates: Vec<usize> = (0..raw.ops.len())
        .filter(|&i| raw.ops[i].kind.is_read() && values[raw.ops[i].var.as_str()].len() > 1)
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoMutationCandidate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let index = *candidates.choose(&mut rng).expect("nonempty");
        let op = &raw.ops[index];
        let choices: Vec<Value> = values[op.var.as_str()]
            .iter()
            .copied()
            .filter(|v| *v != op.value)
            .collect();
        let value = *choices.choose(&mut rng).expect("an alternative");
        raw.ops[index].value = value;
    }
    Ok(raw.render())
}

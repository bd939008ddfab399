//! Model checks: lattice nodes, the classical view formulations, processor
//! consistency and classification.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::Error;
use crate::lattice::{lattice_nodes, Comparison, ModelNode, Property, PropertySet};
use crate::orders::{anti_order, augmented_write_orders, Orders, SerialOrderSpace, SoChoice};
use crate::relation::{Provenance, Relation};
use crate::trace::{Execution, OpId, OperationPattern, ProcId};
use crate::transitions::{self, SyncModelKind, Variant};
use crate::verdict::{Counterexample, Status, Verdict, View};
use crate::view::{check_partial_view, enumerate_serial_views, search_serial_view, select_members};

/// Search limits and switches shared by every check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    /// Backtracking nodes per view query.
    pub view_nodes: u64,
    /// Largest number of free serial-order pairs explored exhaustively.
    pub serial_order_choices: usize,
    /// Largest number of augmented data orders (or classical processor
    /// view combinations) explored.
    pub augmentations: usize,
    /// Force `w <_SO writer(r)` when `w` precedes `r` in process order.
    pub prune_serial_orders: bool,
    /// Run independent node checks and view queries on the rayon pool.
    pub parallel: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            view_nodes: 1_000_000,
            serial_order_choices: 20,
            augmentations: 100_000,
            prune_serial_orders: true,
            parallel: false,
        }
    }
}

/// Models checked through the view formulations that predate the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassicalModel {
    Sequential,
    Pram,
    Cache,
    Processor,
    Causal,
    Slow,
    Local,
}

impl ClassicalModel {
    pub const ALL: [ClassicalModel; 7] = [
        ClassicalModel::Sequential,
        ClassicalModel::Pram,
        ClassicalModel::Cache,
        ClassicalModel::Processor,
        ClassicalModel::Causal,
        ClassicalModel::Slow,
        ClassicalModel::Local,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassicalModel::Sequential => "sequential",
            ClassicalModel::Pram => "pram",
            ClassicalModel::Cache => "cache",
            ClassicalModel::Processor => "processor",
            ClassicalModel::Causal => "causal",
            ClassicalModel::Slow => "slow",
            ClassicalModel::Local => "local",
        }
    }

    /// The equivalent lattice point.
    pub fn node(self) -> ModelNode {
        use Property::*;
        match self {
            ClassicalModel::Sequential => ModelNode::sequential(),
            ClassicalModel::Pram => ModelNode::of(&[GPO]),
            ClassicalModel::Cache => ModelNode::of(&[GDO]),
            ClassicalModel::Processor => ModelNode::processor(),
            ClassicalModel::Causal => ModelNode::of(&[GPO, GWO]),
            ClassicalModel::Slow => ModelNode::of(&[GPDO]),
            ClassicalModel::Local => ModelNode::local(),
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ClassicalModel::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// Anything the command line can name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelName {
    Node(ModelNode),
    /// GPO∩GDO: independent GPO and GDO view families.
    Intersection,
    Sync(SyncModelKind),
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(m) = ClassicalModel::from_name(&lower) {
            return Ok(ModelName::Node(m.node()));
        }
        if let Ok(kind) = lower.parse::<SyncModelKind>() {
            return Ok(ModelName::Sync(kind));
        }
        match lower.as_str() {
            "gpo^gdo" | "gpo∩gdo" => return Ok(ModelName::Intersection),
            "gpo+gdo'" => return Ok(ModelName::Node(ModelNode::processor())),
            _ => {}
        }
        lower
            .parse::<PropertySet>()
            .map(|set| ModelName::Node(ModelNode::new(set)))
            .map_err(|_| Error::UnknownModel(s.trim().to_string()))
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelName::Node(n) => write!(f, "{n}"),
            ModelName::Intersection => f.write_str("GPO^GDO"),
            ModelName::Sync(k) => write!(f, "{k}"),
        }
    }
}

/// Checks a named model. `classical` routes the seven classical names
/// through their original view formulations instead of the lattice.
pub fn check_model(
    exec: &Execution,
    name: &ModelName,
    variant: Variant,
    classical: Option<ClassicalModel>,
    opts: &CheckOptions,
) -> Result<Verdict, Error> {
    if let Some(model) = classical {
        return Ok(check_classical(exec, model, opts));
    }
    match name {
        ModelName::Node(node) => Ok(check_node(exec, node, opts)),
        ModelName::Intersection => Ok(check_intersection(exec, opts)),
        ModelName::Sync(kind) => transitions::check_synchronized(exec, *kind, variant, opts),
    }
}

/// The relation a single property contributes. GAO needs the serial order.
pub fn property_relation(
    exec: &Execution,
    orders: &Orders,
    property: Property,
    so: Option<&Relation>,
) -> Result<Relation, Error> {
    Ok(match property {
        Property::GPO => orders.po.clone(),
        Property::GDO => orders.data.clone(),
        Property::GWO => orders.wo.clone(),
        Property::GPDO => orders.pdo.clone(),
        Property::GAO => {
            let so = so.ok_or(Error::MissingSerialOrder)?;
            so.union(&anti_order(exec, &orders.data, so))
        }
    })
}

/// Operations process `p` must place: its own operations and all writes.
pub(crate) fn process_subset(p: ProcId) -> Vec<OperationPattern> {
    OperationPattern::process_view(p)
}

pub(crate) fn members_of(exec: &Execution, subset: &[OperationPattern]) -> Vec<bool> {
    select_members(exec, subset)
}

/// One view query prepared for a fixed serial order.
pub(crate) struct Query {
    pub scope: String,
    pub members: Vec<bool>,
    pub relation: Relation,
}

/// Evaluates a family of queries, all of which must succeed.
fn run_queries(exec: &Execution, queries: &[Query], partial: bool, opts: &CheckOptions) -> Verdict {
    let run = |q: &Query| {
        if partial {
            check_partial_view(exec, &q.members, &q.relation, &q.scope)
        } else {
            search_serial_view(exec, &q.members, &q.relation, opts.view_nodes, &q.scope)
        }
    };
    let verdicts: Vec<Verdict> = if opts.parallel {
        queries.par_iter().map(run).collect()
    } else {
        let mut out = Vec::new();
        for q in queries {
            let v = run(q);
            let violated = v.is_violated();
            out.push(v);
            if violated {
                break;
            }
        }
        out
    };
    combine_all(verdicts)
}

/// Conjunction: the first violation wins, then the first unknown.
pub(crate) fn combine_all(verdicts: Vec<Verdict>) -> Verdict {
    let spent = verdicts.iter().map(|v| v.budget_spent).sum();
    if let Some(v) = verdicts.iter().find(|v| v.is_violated()) {
        return Verdict {
            budget_spent: spent,
            ..v.clone()
        };
    }
    if let Some(v) = verdicts.iter().find(|v| v.is_unknown()) {
        return Verdict {
            budget_spent: spent,
            ..v.clone()
        };
    }
    let views = verdicts
        .into_iter()
        .flat_map(|v| v.witness.unwrap_or_default())
        .collect();
    Verdict::satisfied(views, spent)
}

/// `∃ SO ∀ queries`. `build` turns a (possibly partial) serial-order
/// relation into the query family; partial assignments whose queries are
/// already cyclic are pruned, which is sound because every relation built
/// here only grows as serial-order edges are added.
pub(crate) fn exists_serial_order(
    exec: &Execution,
    space: &SerialOrderSpace,
    partial_views: bool,
    opts: &CheckOptions,
    build: &(dyn Fn(&Relation) -> Vec<Query> + Sync),
) -> Verdict {
    let free: Vec<usize> = space.free_pairs().collect();
    if free.len() > opts.serial_order_choices {
        return Verdict::unknown(
            format!(
                "{} free serial-order choices exceed the cap of {}",
                free.len(),
                opts.serial_order_choices
            ),
            0,
        );
    }
    let mut choices: Vec<Option<SoChoice>> = space.pairs().iter().map(|p| p.forced).collect();
    let mut state = SoSearch {
        spent: 0,
        assignments: 0,
        unknown: None,
        last_refutation: None,
    };
    let found = so_dfs(
        exec,
        space,
        &free,
        0,
        &mut choices,
        partial_views,
        opts,
        build,
        &mut state,
    );
    match found {
        Some(mut v) => {
            v.budget_spent = state.spent;
            v
        }
        None => match state.unknown {
            Some(reason) => Verdict::unknown(reason, state.spent),
            None => {
                let last = state.last_refutation.expect("at least one refutation");
                if space.pairs().is_empty() {
                    Verdict::violated(last, state.spent)
                } else {
                    Verdict::violated(
                        Counterexample::SerialOrders {
                            explored: state.assignments,
                            last: Box::new(last),
                        },
                        state.spent,
                    )
                }
            }
        },
    }
}

struct SoSearch {
    spent: u64,
    assignments: u64,
    unknown: Option<String>,
    last_refutation: Option<Counterexample>,
}

#[allow(clippy::too_many_arguments)]
fn so_dfs(
    exec: &Execution,
    space: &SerialOrderSpace,
    free: &[usize],
    depth: usize,
    choices: &mut Vec<Option<SoChoice>>,
    partial_views: bool,
    opts: &CheckOptions,
    build: &(dyn Fn(&Relation) -> Vec<Query> + Sync),
    state: &mut SoSearch,
) -> Option<Verdict> {
    let so = space.relation(exec, choices);
    let queries = build(&so);
    for q in &queries {
        if let Some(edges) = q.relation.restrict_to(&q.members).find_cycle() {
            state.assignments += 1u64 << (free.len() - depth);
            state.last_refutation = Some(Counterexample::Cycle {
                scope: q.scope.clone(),
                edges,
            });
            return None;
        }
    }
    if depth == free.len() {
        state.assignments += 1;
        let v = run_queries(exec, &queries, partial_views, opts);
        state.spent += v.budget_spent;
        return match v.status {
            Status::Satisfied => Some(v),
            Status::Unknown => {
                state.unknown.get_or_insert(v.reason.unwrap_or_default());
                None
            }
            Status::Violated => {
                state.last_refutation = v.counterexample;
                None
            }
        };
    }
    for choice in [SoChoice::WriteBeforeSource, SoChoice::ReadBeforeWrite] {
        choices[free[depth]] = Some(choice);
        let found = so_dfs(
            exec,
            space,
            free,
            depth + 1,
            choices,
            partial_views,
            opts,
            build,
            state,
        );
        choices[free[depth]] = None;
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Checks a lattice node. The augmented processor variant is delegated to
/// [`check_processor`].
pub fn check_node(exec: &Execution, node: &ModelNode, opts: &CheckOptions) -> Verdict {
    if node.augmented {
        return check_processor(exec, opts);
    }
    let orders = Orders::new(exec);
    let mut base = Relation::new(exec.len());
    for p in node.properties.iter().filter(|&p| p != Property::GAO) {
        base.extend(&property_relation(exec, &orders, p, None).expect("no serial order needed"));
    }
    let locals: Vec<(String, Vec<bool>, Relation)> = exec
        .process_ids()
        .map(|p| {
            (
                exec.process_name(p).to_string(),
                members_of(exec, &process_subset(p)),
                exec.local_relation(p).union(&base),
            )
        })
        .collect();
    let with_gao = node.contains(Property::GAO);
    let space = if with_gao {
        SerialOrderSpace::new(exec, opts.prune_serial_orders)
    } else {
        SerialOrderSpace::filtered(exec, opts.prune_serial_orders, |_, _| false)
    };
    let build = |so: &Relation| -> Vec<Query> {
        let extra = if with_gao {
            Some(
                property_relation(exec, &orders, Property::GAO, Some(so))
                    .expect("serial order given"),
            )
        } else {
            None
        };
        locals
            .iter()
            .map(|(scope, members, rel)| Query {
                scope: scope.clone(),
                members: members.clone(),
                relation: match &extra {
                    Some(e) => rel.union(e),
                    None => rel.clone(),
                },
            })
            .collect()
    };
    exists_serial_order(exec, &space, false, opts, &build)
}

/// Processor consistency as GPO+GDO′: some per-variable total order of the
/// writes, extending data order and shared by every process, admits a
/// serial view for each process.
pub fn check_processor(exec: &Execution, opts: &CheckOptions) -> Verdict {
    let orders = Orders::new(exec);
    if let Some(edges) = orders.data.find_cycle() {
        return Verdict::violated(
            Counterexample::Cycle {
                scope: "data order".into(),
                edges,
            },
            0,
        );
    }
    let augmentations = match augmented_write_orders(exec, &orders.data, opts.augmentations) {
        Ok(a) => a,
        Err(e) => return Verdict::unknown(e.to_string(), 0),
    };
    let base = orders.po.union(&orders.data);
    let mut spent = 0;
    let mut explored = 0u64;
    let mut unknown = None;
    for aug in augmentations {
        explored += 1;
        let relation = base.union(&aug);
        let queries: Vec<Query> = exec
            .process_ids()
            .map(|p| Query {
                scope: exec.process_name(p).to_string(),
                members: members_of(exec, &process_subset(p)),
                relation: exec.local_relation(p).union(&relation),
            })
            .collect();
        let v = run_queries(exec, &queries, false, opts);
        spent += v.budget_spent;
        match v.status {
            Status::Satisfied => {
                return Verdict {
                    budget_spent: spent,
                    ..v
                }
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
                scope: "augmented data orders".into(),
                explored,
            },
            spent,
        ),
    }
}

/// GPO∩GDO: a GPO view family and a separate GDO view family.
pub fn check_intersection(exec: &Execution, opts: &CheckOptions) -> Verdict {
    let gpo = check_node(exec, &ModelNode::of(&[Property::GPO]), opts);
    let gdo = check_node(exec, &ModelNode::of(&[Property::GDO]), opts);
    let tag = |v: Verdict, label: &str| -> Verdict {
        let mut v = v;
        if let Some(views) = v.witness.as_mut() {
            for view in views {
                view.scope = format!("{} ({label})", view.scope);
            }
        }
        v
    };
    combine_all(vec![tag(gpo, "GPO"), tag(gdo, "GDO")])
}

fn view_family(
    exec: &Execution,
    scopes: Vec<(String, Vec<OperationPattern>)>,
    relation: &Relation,
    opts: &CheckOptions,
) -> Verdict {
    let queries: Vec<Query> = scopes
        .into_iter()
        .map(|(scope, subset)| Query {
            scope,
            members: members_of(exec, &subset),
            relation: relation.clone(),
        })
        .collect();
    run_queries(exec, &queries, false, opts)
}

fn per_process(exec: &Execution) -> Vec<(String, Vec<OperationPattern>)> {
    exec.process_ids()
        .map(|p| (exec.process_name(p).to_string(), process_subset(p)))
        .collect()
}

/// Members of a per-variable view: that variable's operations only (the
/// initial writes of other variables are dropped).
fn variable_members(exec: &Execution, v: crate::trace::VarId) -> Vec<bool> {
    exec.ops().iter().map(|op| op.var == v).collect()
}

/// The original view formulations of the classical models.
pub fn check_classical(exec: &Execution, model: ClassicalModel, opts: &CheckOptions) -> Verdict {
    let po = exec.process_order();
    match model {
        ClassicalModel::Sequential => view_family(
            exec,
            vec![("all".into(), vec![OperationPattern::any()])],
            po,
            opts,
        ),
        ClassicalModel::Pram => view_family(exec, per_process(exec), po, opts),
        ClassicalModel::Cache => {
            let queries: Vec<Query> = exec
                .variable_ids()
                .map(|v| Query {
                    scope: exec.var_name(v).to_string(),
                    members: variable_members(exec, v),
                    relation: po.clone(),
                })
                .collect();
            run_queries(exec, &queries, false, opts)
        }
        ClassicalModel::Causal => {
            let cr = crate::orders::causal_relation(exec);
            view_family(exec, per_process(exec), &cr, opts)
        }
        ClassicalModel::Slow => {
            let mut queries = Vec::new();
            for p in exec.process_ids() {
                for v in exec.variable_ids() {
                    let members: Vec<bool> = exec
                        .ops()
                        .iter()
                        .map(|op| op.var == v && (op.proc == Some(p) || op.kind.is_write()))
                        .collect();
                    queries.push(Query {
                        scope: format!("{}/{}", exec.process_name(p), exec.var_name(v)),
                        members,
                        relation: po.clone(),
                    });
                }
            }
            run_queries(exec, &queries, false, opts)
        }
        ClassicalModel::Local => {
            let queries: Vec<Query> = exec
                .process_ids()
                .map(|p| Query {
                    scope: exec.process_name(p).to_string(),
                    members: members_of(exec, &process_subset(p)),
                    relation: exec.local_relation(p),
                })
                .collect();
            run_queries(exec, &queries, false, opts)
        }
        ClassicalModel::Processor => classical_processor(exec, opts),
    }
}

/// Per-variable serial views, one combination shared by every process's
/// PRAM view.
fn classical_processor(exec: &Execution, opts: &CheckOptions) -> Verdict {
    let po = exec.process_order();
    let mut per_var = Vec::new();
    for v in exec.variable_ids() {
        let members = variable_members(exec, v);
        match enumerate_serial_views(exec, &members, po, opts.augmentations, opts.view_nodes) {
            Ok(views) if views.is_empty() => {
                return Verdict::violated(
                    Counterexample::Exhausted {
                        scope: exec.var_name(v).to_string(),
                        explored: 0,
                    },
                    0,
                )
            }
            Ok(views) => per_var.push(views),
            Err(e) => return Verdict::unknown(e.to_string(), 0),
        }
    }
    let total = per_var
        .iter()
        .try_fold(1usize, |acc, vs| acc.checked_mul(vs.len()))
        .filter(|&t| t <= opts.augmentations);
    let Some(total) = total else {
        return Verdict::unknown(
            format!("more than {} cache view combinations", opts.augmentations),
            0,
        );
    };
    let mut spent = 0;
    let mut unknown = None;
    for index in 0..total {
        let mut rest = index;
        let mut relation = po.clone();
        let mut chosen = Vec::new();
        for (v, views) in exec
            .variable_ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(&per_var)
            .rev()
        {
            let order = &views[rest % views.len()];
            rest /= views.len();
            for (i, &a) in order.iter().enumerate() {
                for &b in &order[i + 1..] {
                    relation.insert(a, b, Provenance::Augmented);
                }
            }
            chosen.push(View {
                scope: exec.var_name(v).to_string(),
                order: order.clone(),
            });
        }
        let v = view_family(exec, per_process(exec), &relation, opts);
        spent += v.budget_spent;
        match v.status {
            Status::Satisfied => {
                chosen.reverse();
                let mut views = chosen;
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
                scope: "cache view combinations".into(),
                explored: total as u64,
            },
            spent,
        ),
    }
}

/// Verdicts for every lattice node plus the strongest satisfied ones.
#[derive(Clone, Debug)]
pub struct Classification {
    pub results: Vec<(ModelNode, Verdict)>,
    pub maximal: Vec<ModelNode>,
    pub unknown: Vec<ModelNode>,
}

pub fn classify(exec: &Execution, opts: &CheckOptions) -> Classification {
    let nodes = lattice_nodes();
    let results: Vec<(ModelNode, Verdict)> = if opts.parallel {
        nodes
            .par_iter()
            .map(|n| (*n, check_node(exec, n, opts)))
            .collect()
    } else {
        nodes
            .iter()
            .map(|n| (*n, check_node(exec, n, opts)))
            .collect()
    };
    let satisfied: Vec<ModelNode> = results
        .iter()
        .filter(|(_, v)| v.is_satisfied())
        .map(|(n, _)| *n)
        .collect();
    let maximal = satisfied
        .iter()
        .filter(|n| {
            !satisfied
                .iter()
                .any(|m| m.compare(n) == Comparison::Stronger)
        })
        .copied()
        .collect();
    let unknown = results
        .iter()
        .filter(|(_, v)| v.is_unknown())
        .map(|(n, _)| *n)
        .collect();
    Classification {
        results,
        maximal,
        unknown,
    }
}

/// Witness views name operations by id; this maps them back for display.
pub fn render_view(exec: &Execution, view: &View) -> Vec<String> {
    view.order
        .iter()
        .map(|&id: &OpId| exec.op_line(id))
        .collect()
}

use std::fmt::Write as _;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use memlattice::check::render_view;
use memlattice::gen::{gen_trace, mutate_trace, GenModel, GenSpec};
use memlattice::lattice::lattice_nodes;
use memlattice::orders::Orders;
use memlattice::trace::OperationPattern;
use memlattice::transitions::drf_check;
use memlattice::view::brute_force_oracle;
use memlattice::{
    check_model, classify, property_relation, CheckOptions, ClassicalModel, Counterexample, Error,
    Execution, ModelName, ModelNode, Property, Status, Variant, Verdict,
};

const EXIT_VIOLATED: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;

#[derive(Parser, Debug)]
#[command(
    name = "memlattice",
    version,
    about = "Check execution traces against shared-memory consistency models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a trace against one or more models (comma separated).
    Check(CheckArgs),
    /// Explain a verdict: witness views or the counterexample with provenance.
    Explain(CheckArgs),
    /// Check every lattice node and report the strongest satisfied ones.
    Classify(ClassifyArgs),
    /// Lattice algebra over model names.
    Lattice {
        #[command(subcommand)]
        op: LatticeOp,
    },
    /// Execution-level data-race-freedom: does weak imply sequential here?
    Drf(TraceArgs),
    /// Generate a trace by simulating a memory, or mutate an existing one.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Backtracking nodes allowed per view search.
    #[arg(long, value_name = "N")]
    budget: Option<u64>,
    /// Worker threads for independent checks (1 runs everything in order).
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct TraceArgs {
    /// Trace file, or `-` for standard input.
    trace: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Model name: a classical model, a lattice node such as `gpo+gwo`,
    /// `gpo^gdo`, or a synchronized model such as `weak`.
    model: String,
    /// Trace file, or `-` for standard input.
    trace: PathBuf,
    /// Print the witness views.
    #[arg(long)]
    witness: bool,
    /// Print the counterexample with the provenance of every edge.
    #[arg(long)]
    explain: bool,
    /// Formulation of synchronized models.
    #[arg(long, value_enum, default_value_t = VariantArg::Revised)]
    variant: VariantArg,
    /// Use the original view formulation of a classical model instead of
    /// its lattice point.
    #[arg(long)]
    classical: bool,
    /// Cross-check every per-process view query with exhaustive search.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Trace file, or `-` for standard input.
    trace: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Original,
    Revised,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Original => Variant::Original,
            VariantArg::Revised => Variant::Revised,
        }
    }
}

#[derive(Subcommand, Debug)]
enum LatticeOp {
    /// Least upper bound of two models.
    Lub { a: String, b: String },
    /// Greatest lower bound of two models.
    Glb { a: String, b: String },
    /// Relative strength of two models.
    Compare { a: String, b: String },
    /// List every node of the lattice, weakest first.
    Show {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Memory to simulate.
    #[arg(long, default_value = "sequential")]
    model: String,
    #[arg(long, default_value_t = 2)]
    procs: usize,
    /// Operations per process.
    #[arg(long, default_value_t = 4)]
    ops: usize,
    #[arg(long, default_value_t = 2)]
    vars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of a synchronization operation (synchronized models).
    #[arg(long, default_value_t = 0.25)]
    sync_prob: f64,
    /// Instead of simulating, reassign read values of this trace.
    #[arg(long, value_name = "TRACE")]
    mutate: Option<PathBuf>,
    /// Number of read reassignments with `--mutate`.
    #[arg(long, default_value_t = 1)]
    mutations: usize,
}

/// Failure that ends the program with a specific exit code.
struct Fatal {
    code: u8,
    message: String,
}

impl From<Error> for Fatal {
    fn from(e: Error) -> Fatal {
        let code = match &e {
            Error::UnknownModel(_) | Error::OracleTooLarge { .. } => EXIT_USAGE,
            Error::Budget(_) => EXIT_UNKNOWN,
            _ => EXIT_DATA,
        };
        Fatal {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Fatal {
    Fatal {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok((out, code)) => {
            print!("{out}");
            ExitCode::from(code)
        }
        Err(fatal) => {
            eprintln!("memlattice: {}", fatal.message);
            ExitCode::from(fatal.code)
        }
    }
}

fn run(cli: Cli) -> Result<(String, u8), Fatal> {
    match cli.command {
        Command::Check(args) => cmd_check(&args, false),
        Command::Explain(args) => cmd_check(&args, true),
        Command::Classify(args) => cmd_classify(&args),
        Command::Lattice { op } => cmd_lattice(&op),
        Command::Drf(args) => cmd_drf(&args),
        Command::Gen(args) => cmd_gen(&args),
    }
}

fn read_trace(path: &PathBuf) -> Result<Execution, Fatal> {
    let text = read_text(path)?;
    Execution::parse(&text).map_err(|e| Fatal {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn read_text(path: &PathBuf) -> Result<String, Fatal> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Fatal {
                code: EXIT_NO_INPUT,
                message: format!("stdin: {e}"),
            })?;
        return Ok(text);
    }
    std::fs::read_to_string(path).map_err(|e| Fatal {
        code: EXIT_NO_INPUT,
        message: format!("{}: {e}", path.display()),
    })
}

fn options(common: &Common) -> Result<CheckOptions, Fatal> {
    if common.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    if common.jobs > 1 {
        // Only the first call configures the pool; later calls are no-ops.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(common.jobs)
            .build_global();
    }
    let mut opts = CheckOptions {
        parallel: common.jobs > 1,
        ..CheckOptions::default()
    };
    if let Some(budget) = common.budget {
        opts.view_nodes = budget;
    }
    Ok(opts)
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::Satisfied => 0,
        Status::Violated => EXIT_VIOLATED,
        Status::Unknown => EXIT_UNKNOWN,
    }
}

/// Violated beats unknown beats satisfied.
fn worst(codes: impl IntoIterator<Item = u8>) -> u8 {
    codes.into_iter().fold(0, |acc, c| match (acc, c) {
        (EXIT_VIOLATED, _) | (_, EXIT_VIOLATED) => EXIT_VIOLATED,
        (EXIT_UNKNOWN, _) | (_, EXIT_UNKNOWN) => EXIT_UNKNOWN,
        _ => 0,
    })
}

#[derive(Serialize)]
struct CheckReport<'a> {
    model: String,
    verdict: &'a Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<&'a OracleReport>,
}

#[derive(Serialize)]
struct OracleReport {
    queries: usize,
    agrees: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    disagreements: Vec<String>,
}

fn cmd_check(args: &CheckArgs, explain: bool) -> Result<(String, u8), Fatal> {
    let opts = options(&args.common)?;
    let exec = read_trace(&args.trace)?;
    let mut out = String::new();
    let mut codes = Vec::new();
    for name in args
        .model
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let model: ModelName = name.parse()?;
        let classical = if args.classical {
            Some(
                ClassicalModel::from_name(name)
                    .ok_or_else(|| usage(format!("`{name}` has no classical formulation")))?,
            )
        } else {
            None
        };
        let verdict = check_model(&exec, &model, args.variant.into(), classical, &opts)?;
        let oracle = if args.oracle {
            Some(oracle_cross_check(&exec, &model, &verdict, &opts)?)
        } else {
            None
        };
        codes.push(status_code(verdict.status));
        if args.common.json {
            let report = CheckReport {
                model: model.to_string(),
                verdict: &verdict,
                oracle: oracle.as_ref(),
            };
            out.push_str(&serde_json::to_string(&report).expect("serializable"));
            out.push('\n');
            continue;
        }
        let _ = write!(out, "{model}: {}", verdict.status);
        if let Some(reason) = &verdict.reason {
            let _ = write!(out, " ({reason})");
        }
        out.push('\n');
        if args.witness || explain {
            write_witness(&mut out, &exec, &verdict);
        }
        if args.explain || explain {
            if let Some(cx) = &verdict.counterexample {
                write_counterexample(&mut out, &exec, cx, 0);
            }
        }
        if let Some(o) = &oracle {
            if o.agrees {
                let _ = writeln!(out, "oracle: agrees on {} view queries", o.queries);
            } else {
                let _ = writeln!(out, "oracle: disagrees on {}", o.disagreements.join(", "));
            }
        }
    }
    if codes.is_empty() {
        return Err(usage("no model given"));
    }
    let code = worst(codes);
    Ok((out, code))
}

fn write_witness(out: &mut String, exec: &Execution, verdict: &Verdict) {
    for view in verdict.witness.iter().flatten() {
        let _ = writeln!(out, "view {}:", view.scope);
        for line in render_view(exec, view) {
            let _ = writeln!(out, "  {line}");
        }
    }
}

fn write_counterexample(out: &mut String, exec: &Execution, cx: &Counterexample, depth: usize) {
    let pad = "  ".repeat(depth);
    match cx {
        Counterexample::Cycle { scope, edges } => {
            let _ = writeln!(out, "{pad}cycle in {scope}:");
            for e in edges {
                let _ = writeln!(
                    out,
                    "{pad}  {} -> {}  [{}]",
                    exec.describe(e.from),
                    exec.describe(e.to),
                    e.provenance
                );
            }
        }
        Counterexample::Exhausted { scope, explored } => {
            let _ = writeln!(
                out,
                "{pad}no serial view for {scope} ({explored} search nodes explored)"
            );
        }
        Counterexample::DominatedRead {
            scope,
            read,
            source,
            dominating,
        } => {
            let _ = writeln!(
                out,
                "{pad}in {scope}, {} reads from {} but {} lies between them",
                exec.describe(*read),
                exec.describe(*source),
                exec.describe(*dominating)
            );
        }
        Counterexample::ReadBeforeSource {
            scope,
            read,
            source,
        } => {
            let _ = writeln!(
                out,
                "{pad}in {scope}, {} is ordered before its source {}",
                exec.describe(*read),
                exec.describe(*source)
            );
        }
        Counterexample::SerialOrders { explored, last } => {
            let _ = writeln!(
                out,
                "{pad}all {explored} serial-order assignments fail; the last one explored:"
            );
            write_counterexample(out, exec, last, depth + 1);
        }
    }
}

/// Re-runs the per-process view queries of a plain lattice node through
/// the permutation oracle.
fn oracle_cross_check(
    exec: &Execution,
    model: &ModelName,
    verdict: &Verdict,
    opts: &CheckOptions,
) -> Result<OracleReport, Fatal> {
    let node = match model {
        ModelName::Node(node) if !node.augmented && !node.contains(Property::GAO) => node,
        _ => {
            return Err(usage(format!(
                "--oracle supports lattice nodes without GAO, not `{model}`"
            )))
        }
    };
    let orders = Orders::new(exec);
    let mut base = memlattice::Relation::new(exec.len());
    for p in node.properties.iter() {
        base.extend(&property_relation(exec, &orders, p, None)?);
    }
    let mut disagreements = Vec::new();
    let mut all_satisfied = true;
    let mut queries = 0;
    for p in exec.process_ids() {
        let subset = OperationPattern::process_view(p);
        let relation = exec.local_relation(p).union(&base);
        let fast = memlattice::view::exists_serial_view(exec, &subset, &relation, opts.view_nodes);
        let slow = brute_force_oracle(exec, &subset, &relation)?;
        queries += 1;
        all_satisfied &= slow.is_satisfied();
        let same = fast.status == slow.status
            && fast.witness.as_ref().map(|w| &w[0].order)
                == slow.witness.as_ref().map(|w| &w[0].order);
        if !same && !fast.is_unknown() {
            disagreements.push(exec.process_name(p).to_string());
        }
    }
    let overall = if all_satisfied {
        Status::Satisfied
    } else {
        Status::Violated
    };
    if !verdict.is_unknown() && overall != verdict.status {
        disagreements.push("overall verdict".into());
    }
    Ok(OracleReport {
        queries,
        agrees: disagreements.is_empty(),
        disagreements,
    })
}

#[derive(Serialize)]
struct NodeResult<'a> {
    node: String,
    verdict: &'a Verdict,
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    maximal: Vec<String>,
    unknown: Vec<String>,
    results: Vec<NodeResult<'a>>,
}

fn cmd_classify(args: &ClassifyArgs) -> Result<(String, u8), Fatal> {
    let opts = options(&args.common)?;
    let exec = read_trace(&args.trace)?;
    let c = classify(&exec, &opts);
    let labels = |nodes: &[ModelNode]| nodes.iter().map(ModelNode::label).collect::<Vec<_>>();
    let code = if c.unknown.is_empty() {
        0
    } else {
        EXIT_UNKNOWN
    };
    if args.common.json {
        let report = ClassifyReport {
            maximal: labels(&c.maximal),
            unknown: labels(&c.unknown),
            results: c
                .results
                .iter()
                .map(|(n, v)| NodeResult {
                    node: n.label(),
                    verdict: v,
                })
                .collect(),
        };
        let mut out = serde_json::to_string(&report).expect("serializable");
        out.push('\n');
        return Ok((out, code));
    }
    let mut out = String::new();
    let maximal = labels(&c.maximal);
    let _ = writeln!(
        out,
        "maximal: {}",
        if maximal.is_empty() {
            "none".to_string()
        } else {
            maximal.join(", ")
        }
    );
    if !c.unknown.is_empty() {
        let _ = writeln!(out, "unknown: {}", labels(&c.unknown).join(", "));
    }
    for (node, verdict) in &c.results {
        let aliases = node.aliases();
        let label = if aliases.is_empty() {
            node.label()
        } else {
            format!("{} ({})", node.label(), aliases.join(", "))
        };
        let _ = writeln!(out, "  {label:<28} {}", verdict.status);
    }
    Ok((out, code))
}

fn parse_node(name: &str) -> Result<ModelNode, Fatal> {
    match name.parse::<ModelName>()? {
        ModelName::Node(node) => Ok(node),
        other => Err(usage(format!("`{other}` is not a lattice node"))),
    }
}

#[derive(Serialize)]
struct ShowEntry {
    node: String,
    aliases: Vec<&'static str>,
    covers: Vec<String>,
}

fn cmd_lattice(op: &LatticeOp) -> Result<(String, u8), Fatal> {
    let (a, b) = match op {
        LatticeOp::Show { json } => return Ok((show_lattice(*json), 0)),
        LatticeOp::Lub { a, b } | LatticeOp::Glb { a, b } | LatticeOp::Compare { a, b } => (a, b),
    };
    let (na, nb) = (parse_node(a)?, parse_node(b)?);
    let line = match op {
        LatticeOp::Lub { .. } => na.lub(&nb).label(),
        LatticeOp::Glb { .. } => na.glb(&nb).label(),
        _ => {
            let relation = match na.compare(&nb) {
                memlattice::Comparison::Stronger => "stronger than",
                memlattice::Comparison::Weaker => "weaker than",
                memlattice::Comparison::Equal => "equal to",
                memlattice::Comparison::Incomparable => "incomparable with",
            };
            format!("{} {relation} {}", na.label(), nb.label())
        }
    };
    Ok((format!("{line}\n"), 0))
}

fn show_lattice(json: bool) -> String {
    let nodes = lattice_nodes();
    let entries: Vec<ShowEntry> = nodes
        .iter()
        .map(|n| {
            let below: Vec<&ModelNode> = nodes
                .iter()
                .filter(|m| n.compare(m) == memlattice::Comparison::Stronger)
                .collect();
            let covers = below
                .iter()
                .filter(|m| {
                    !below
                        .iter()
                        .any(|k| k.compare(m) == memlattice::Comparison::Stronger)
                })
                .map(|m| m.label())
                .collect();
            ShowEntry {
                node: n.label(),
                aliases: n.aliases().to_vec(),
                covers,
            }
        })
        .collect();
    if json {
        let mut out = serde_json::to_string(&entries).expect("serializable");
        out.push('\n');
        return out;
    }
    let mut out = String::new();
    for e in &entries {
        let alias = if e.aliases.is_empty() {
            String::new()
        } else {
            format!(" ({})", e.aliases.join(", "))
        };
        let covers = if e.covers.is_empty() {
            "bottom".to_string()
        } else {
            format!("above {}", e.covers.join(", "))
        };
        let _ = writeln!(out, "{}{alias}: {covers}", e.node);
    }
    out
}

fn cmd_drf(args: &TraceArgs) -> Result<(String, u8), Fatal> {
    let opts = options(&args.common)?;
    let exec = read_trace(&args.trace)?;
    let report = drf_check(&exec, &opts)?;
    let code = match report.status {
        memlattice::DrfStatus::Witnessed | memlattice::DrfStatus::Vacuous => 0,
        memlattice::DrfStatus::Violation => EXIT_VIOLATED,
        memlattice::DrfStatus::Unknown => EXIT_UNKNOWN,
    };
    if args.common.json {
        let mut out = serde_json::to_string(&report).expect("serializable");
        out.push('\n');
        return Ok((out, code));
    }
    let out = format!(
        "drf: {}\nweak: {}\nsequential: {}\n",
        report.status, report.weak.status, report.sequential.status
    );
    Ok((out, code))
}

fn cmd_gen(args: &GenArgs) -> Result<(String, u8), Fatal> {
    if let Some(path) = &args.mutate {
        let text = read_text(path)?;
        return Ok((mutate_trace(&text, args.seed, args.mutations)?, 0));
    }
    if !(0.0..=1.0).contains(&args.sync_prob) {
        return Err(usage("--sync-prob must lie in [0, 1]"));
    }
    let model: GenModel = args.model.parse()?;
    let spec = GenSpec {
        model,
        procs: args.procs,
        ops: args.ops,
        vars: args.vars,
        seed: args.seed,
        sync_prob: args.sync_prob,
    };
    Ok((gen_trace(&spec), 0))
}

//! `beliefsim` command-line front end.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use beliefsim::diagnostics::{
    blanket_dependence, convergence_profile, flip_dependence, integrated_autocorrelation_time,
    pairwise_dependence, sm_sweep, sojourn_statistics, write_sm_csv, SmSweepOptions,
};
use beliefsim::exec::{Execution, RngStream};
use beliefsim::network::{parse_network_with_report, validate, NetworkFile};
use beliefsim::oracle::exact_posteriors;
use beliefsim::repro::{run_selected, FixtureSet, ReproSettings, DEFAULT_SEED};
use beliefsim::samplers::{
    blocked_gibbs_run, clamped_forward_estimate, detect_deterministic_groups, gibbs_run,
    likelihood_weighting_estimate, logic_estimate, rejection_estimate, uniform_proposal_estimate,
    Estimator, GibbsOptions, InitPolicy, SamplerError,
};
use beliefsim::trace::SampleTrace;
use beliefsim::transforms::{
    absorb_evidence, apply_step, network_digest, StepKind, TransformPlan, TransformStep,
};
use beliefsim::{fixtures, Assignment, BeliefNetwork, VarId};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "beliefsim", version, about = "Stochastic simulation of belief networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and list every finding.
    Validate(NetArgs),
    /// Summarize structure, topological order and dependence values.
    Inspect(NetArgs),
    /// Exact posteriors by enumeration.
    Exact(ExactArgs),
    /// Estimate posteriors with one of the simulation schemes.
    Sample(SampleArgs),
    /// Dependence values, sojourns, autocorrelation times and profiles.
    Diagnose(DiagnoseArgs),
    /// Prune, reverse an arc, reduce a node or absorb evidence.
    Transform(TransformArgs),
    /// Run the acceptance criteria and print a pass/fail table.
    Repro(ReproArgs),
}

#[derive(Args)]
struct NetArgs {
    /// Network JSON file. A bare shipped fixture name also works.
    #[arg(long)]
    net: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    net: PathBuf,
    /// `VAR=VALUE,...`
    #[arg(long, default_value = "")]
    evidence: String,
    /// Comma-separated variable names; all unobserved variables by default.
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Logic,
    Rejection,
    Lw,
    Uniform,
    Gibbs,
    BlockedGibbs,
    ClampedForward,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecArg {
    Auto,
    Sequential,
    Parallel,
}

impl From<ExecArg> for Execution {
    fn from(e: ExecArg) -> Self {
        match e {
            ExecArg::Auto => Execution::Auto,
            ExecArg::Sequential => Execution::Sequential,
            ExecArg::Parallel => Execution::Parallel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Frequency,
    RaoBlackwell,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long)]
    net: PathBuf,
    #[arg(long, default_value = "")]
    evidence: String,
    #[arg(long)]
    query: Option<String>,
    /// Instances for the forward schemes.
    #[arg(short = 'n', long, default_value_t = 100_000)]
    samples: usize,
    /// Sweeps for the chain schemes.
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    /// Generated and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated visit order of the unobserved variables.
    #[arg(long)]
    scan_order: Option<String>,
    /// all-true, all-false, uniform or forward.
    #[arg(long, default_value = "all-true")]
    init: String,
    /// Blocks as `B+D+E;X+Y`, or `auto` for detected deterministic groups.
    #[arg(long)]
    groups: Option<String>,
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    #[arg(long, value_enum, default_value = "frequency")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 100)]
    batches: usize,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    exec: ExecArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    #[value(name = "D")]
    D,
    #[value(name = "blanket-D")]
    BlanketD,
    Flip,
    Tau,
    Sojourn,
    Profile,
    SmSweep,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, value_enum, ignore_case = true)]
    metric: Metric,
    #[arg(long)]
    net: Option<PathBuf>,
    /// `A-B`, directed from the left.
    #[arg(long)]
    arc: Option<String>,
    #[arg(long)]
    node: Option<String>,
    /// Value whose indicator is analysed; the last declared value by default.
    #[arg(long)]
    value: Option<String>,
    #[arg(long, default_value = "")]
    evidence: String,
    /// CSV trace written by `sample --trace`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Exact posterior for `profile`; computed by enumeration when absent.
    #[arg(long)]
    truth: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Comma-separated q values for `sm-sweep`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long)]
    min_sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "auto")]
    exec: ExecArg,
    /// `csv` applies to `profile` and `sm-sweep`.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Prune,
    Reverse,
    Reduce,
    Absorb,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long, value_enum)]
    op: Op,
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    arc: Option<String>,
    #[arg(long)]
    node: Option<String>,
    /// Evidence variables, as names or `VAR=VALUE` terms.
    #[arg(long, default_value = "")]
    evidence: String,
    #[arg(long)]
    query: Option<String>,
    /// Write the transformed network here; otherwise it is embedded in the report.
    #[arg(long)]
    out_net: Option<PathBuf>,
    /// Write the plan JSON here.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproArgs {
    /// Directory holding the fixture files; the embedded copies by default.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Criterion ids (`7`, `C07`) or fixture names, comma-separated.
    #[arg(long)]
    only: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    exec: ExecArg,
    /// Print the outcomes as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Also write the JSON outcomes here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A problem with the arguments themselves, exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Repro(a) => cmd_repro(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn read_net_text(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) => {
            // bare shipped fixture name
            let name = path.to_string_lossy();
            let bare = path.parent().is_none_or(|p| p.as_os_str().is_empty());
            let found = fixtures::ALL
                .iter()
                .find(|(file, _)| *file == name || file.trim_end_matches(".json") == name);
            match found {
                Some((_, text)) if bare => Ok(text.to_string()),
                _ => Err(e).with_context(|| format!("reading {}", path.display())),
            }
        }
    }
}

fn load_net(path: &Path) -> Result<BeliefNetwork> {
    let text = read_net_text(path)?;
    let (net, report) =
        parse_network_with_report(&text).with_context(|| format!("loading {}", path.display()))?;
    for w in report.warnings() {
        eprintln!("warning: {}: {}", w.location, w.message);
    }
    Ok(net)
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn var_ids(net: &BeliefNetwork, list: &str) -> Result<Vec<VarId>> {
    Ok(split_list(list).map(|n| net.id(n)).collect::<Result<_, _>>()?)
}

fn queries(net: &BeliefNetwork, ev: &Assignment, query: Option<&str>) -> Result<Vec<VarId>> {
    match query {
        Some(q) => var_ids(net, q),
        None => Ok(net.ids().filter(|&v| !ev.contains(v)).collect()),
    }
}

fn names(net: &BeliefNetwork, vars: &[VarId]) -> Vec<String> {
    vars.iter().map(|&v| net.name(v).to_string()).collect()
}

fn parse_arc(net: &BeliefNetwork, arc: Option<&str>) -> Result<(VarId, VarId)> {
    let Some(arc) = arc else {
        return usage("--arc A-B is required");
    };
    let Some((a, b)) = arc.split_once('-') else {
        return usage(format!("arc `{arc}` is not of the form A-B"));
    };
    Ok((net.id(a.trim())?, net.id(b.trim())?))
}

fn need<'a>(opt: &'a Option<String>, flag: &str) -> Result<&'a str> {
    match opt {
        Some(s) => Ok(s),
        None => usage(format!("{flag} is required")),
    }
}

fn need_net(net: &Option<PathBuf>) -> Result<BeliefNetwork> {
    match net {
        Some(p) => load_net(p),
        None => usage("--net is required"),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s} (generated)");
        s
    })
}

fn envelope(command: &str, seed: Option<u64>, config: Value, result: Value) -> Value {
    let mut v = json!({
        "tool": "beliefsim",
        "version": VERSION,
        "command": command,
    });
    if let Some(s) = seed {
        v["seed"] = json!(s);
    }
    v["config"] = config;
    v["result"] = result;
    v
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                // reader went away, e.g. `| head`
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn emit(out: Option<&Path>, report: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_text(out, &text)
}

fn net_config(path: &Path, net: &BeliefNetwork) -> Value {
    json!({ "path": path.display().to_string(), "digest": network_digest(net) })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_validate(a: NetArgs) -> Result<ExitCode> {
    let text = read_net_text(&a.net)?;
    let file: NetworkFile = match serde_json::from_str(&text) {
        Ok(f) => f,
        Err(e) => bail!("{}: syntax error at line {}, column {}: {e}", a.net.display(), e.line(), e.column()),
    };
    let report = validate(&file);
    let ok = !report.has_errors();
    let out = envelope(
        "validate",
        None,
        json!({ "net": a.net.display().to_string() }),
        json!({ "valid": ok, "findings": report.findings }),
    );
    emit(a.out.as_deref(), &out)?;
    if !ok {
        for f in report.errors() {
            eprintln!("error: {}: {}", f.location, f.message);
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_inspect(a: NetArgs) -> Result<ExitCode> {
    let net = load_net(&a.net)?;
    let variables: Vec<Value> = net
        .ids()
        .map(|v| {
            let mut entry = json!({
                "name": net.name(v),
                "values": net.variable(v).values(),
                "parents": names(&net, net.parents(v)),
                "children": names(&net, net.children(v)),
                "cpt_rows": net.cpt(v).row_count(),
                "deterministic": net.cpt(v).is_functional(),
            });
            if net.is_binary() {
                entry["blanket_dependence"] = json!(blanket_dependence(&net, v)?);
            }
            Ok(entry)
        })
        .collect::<Result<_>>()?;
    let arcs: Vec<Value> = net
        .arcs()
        .map(|(p, c)| {
            let mut entry = json!({ "from": net.name(p), "to": net.name(c) });
            if let Ok(d) = pairwise_dependence(&net, p, c) {
                entry["dependence"] = json!(d);
            }
            entry
        })
        .collect();
    let groups: Vec<Value> = detect_deterministic_groups(&net)
        .iter()
        .map(|g| json!({ "members": names(&net, &g.members), "external_parents": names(&net, &g.external_parents) }))
        .collect();
    let result = json!({
        "variables": variables,
        "arcs": arcs,
        "topological_order": names(&net, net.topological_order()),
        "deterministic_groups": groups,
        "joint_states": net.state_count(&net.ids().collect::<Vec<_>>()),
    });
    emit(a.out.as_deref(), &envelope("inspect", None, net_config(&a.net, &net), result))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_exact(a: ExactArgs) -> Result<ExitCode> {
    let net = load_net(&a.net)?;
    let ev = Assignment::parse(&net, &a.evidence)?;
    let q = queries(&net, &ev, a.query.as_deref())?;
    let start = Instant::now();
    let table = exact_posteriors(&net, &ev, &q)?;
    let seconds = start.elapsed().as_secs_f64();
    if !table.defined {
        eprintln!("warning: evidence has probability 0; posteriors are undefined");
    }
    let config = json!({
        "net": net_config(&a.net, &net),
        "evidence": a.evidence,
        "query": names(&net, &q),
    });
    let mut result = json!(table);
    result["seconds"] = json!(seconds);
    emit(a.out.as_deref(), &envelope("exact", None, config, result))?;
    Ok(ExitCode::SUCCESS)
}

fn parse_groups(net: &BeliefNetwork, spec: Option<&str>) -> Result<Vec<Vec<VarId>>> {
    match spec {
        None | Some("auto") => Ok(detect_deterministic_groups(net)
            .into_iter()
            .map(|g| g.members)
            .collect()),
        Some(s) => s
            .split(';')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(|g| Ok(g.split('+').map(|n| net.id(n.trim())).collect::<Result<Vec<_>, _>>()?))
            .collect(),
    }
}

fn cmd_sample(a: SampleArgs) -> Result<ExitCode> {
    let net = load_net(&a.net)?;
    let ev = Assignment::parse(&net, &a.evidence)?;
    let q = queries(&net, &ev, a.query.as_deref())?;
    let seed = resolve_seed(a.seed);
    let stream = RngStream::new(seed);
    let exec: Execution = a.exec.into();
    let Some(init) = InitPolicy::parse(&a.init) else {
        return usage(format!("unknown init policy `{}`", a.init));
    };
    let scan_order = a.scan_order.as_deref().map(|s| var_ids(&net, s)).transpose()?;
    let opts = GibbsOptions {
        sweeps: a.sweeps,
        init,
        scan_order,
        burn_in: a.burn_in,
        estimator: match a.estimator {
            EstimatorArg::Frequency => Estimator::Frequency,
            EstimatorArg::RaoBlackwell => Estimator::RaoBlackwell,
        },
        batches: a.batches,
    };
    let mut groups = Vec::new();
    let n = a.samples;
    let run = match a.scheme {
        SchemeArg::Logic if !ev.is_empty() => Err(SamplerError::EvidenceNotSupported),
        SchemeArg::Logic => logic_estimate(&net, &q, n, &stream, exec),
        SchemeArg::Rejection => rejection_estimate(&net, &ev, &q, n, &stream, exec),
        SchemeArg::Lw => likelihood_weighting_estimate(&net, &ev, &q, n, &stream, exec),
        SchemeArg::Uniform => uniform_proposal_estimate(&net, &ev, &q, n, &stream, exec),
        SchemeArg::ClampedForward => clamped_forward_estimate(&net, &ev, &q, n, &stream, exec),
        SchemeArg::Gibbs => gibbs_run(&net, &ev, &q, &opts, &stream),
        SchemeArg::BlockedGibbs => {
            groups = parse_groups(&net, a.groups.as_deref())?;
            blocked_gibbs_run(&net, &ev, &q, &groups, &opts, &stream)
        }
    };
    let (report, trace) = run?;
    if let Some(path) = &a.trace {
        let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        trace.write_csv(&net, std::io::BufWriter::new(file))?;
    }

    let chain = matches!(a.scheme, SchemeArg::Gibbs | SchemeArg::BlockedGibbs);
    let mut config = json!({
        "net": net_config(&a.net, &net),
        "scheme": report.scheme,
        "evidence": a.evidence,
        "query": names(&net, &q),
        "generator": stream.generator,
        "exec": exec,
    });
    if chain {
        let order = opts.scan_order.as_deref().map(|o| names(&net, o));
        config["sweeps"] = json!(opts.sweeps);
        config["init"] = json!(opts.init);
        config["scan_order"] = json!(order);
        config["burn_in"] = json!(opts.burn_in);
        config["estimator"] = json!(opts.estimator);
        config["batches"] = json!(opts.batches);
        if matches!(a.scheme, SchemeArg::BlockedGibbs) {
            let g: Vec<Vec<String>> = groups.iter().map(|g| names(&net, g)).collect();
            config["groups"] = json!(g);
        }
    } else {
        config["n"] = json!(n);
    }
    if let Some(p) = &a.trace {
        config["trace"] = json!(p.display().to_string());
    }
    emit(a.out.as_deref(), &envelope("sample", Some(seed), config, json!(report)))?;
    if let Some(f) = &report.fixation {
        eprintln!("fixation: {} (state {})", f.message, f.state);
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn value_index(net: &BeliefNetwork, node: VarId, value: Option<&str>) -> Result<u8> {
    let var = net.variable(node);
    match value {
        None => Ok((var.card() - 1) as u8),
        Some(v) => var
            .value_index(v)
            .ok_or_else(|| anyhow!("variable `{}` has no value `{v}`", var.name())),
    }
}

fn load_trace(net: &BeliefNetwork, path: &Option<PathBuf>) -> Result<SampleTrace> {
    let Some(path) = path else {
        return usage("--trace is required");
    };
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    SampleTrace::read_csv(net, std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<ExitCode> {
    let metric_name = Metric::to_possible_value(&a.metric)
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let mut config = json!({ "metric": metric_name });
    if let Some(p) = &a.net {
        config["net"] = json!(p.display().to_string());
    }
    let mut seed = None;
    let result = match a.metric {
        Metric::D => {
            let net = need_net(&a.net)?;
            let (from, to) = parse_arc(&net, a.arc.as_deref())?;
            config["arc"] = json!(format!("{}-{}", net.name(from), net.name(to)));
            json!(pairwise_dependence(&net, from, to)?)
        }
        Metric::BlanketD => {
            let net = need_net(&a.net)?;
            let node = net.id(need(&a.node, "--node")?)?;
            config["node"] = json!(net.name(node));
            json!(blanket_dependence(&net, node)?)
        }
        Metric::Flip => {
            let net = need_net(&a.net)?;
            let node = net.id(need(&a.node, "--node")?)?;
            let ev = Assignment::parse(&net, &a.evidence)?;
            config["node"] = json!(net.name(node));
            config["evidence"] = json!(a.evidence);
            json!(flip_dependence(&net, node, &ev)?)
        }
        Metric::Tau | Metric::Sojourn | Metric::Profile => {
            let net = need_net(&a.net)?;
            let node = net.id(need(&a.node, "--node")?)?;
            let value = value_index(&net, node, a.value.as_deref())?;
            let trace = load_trace(&net, &a.trace)?;
            config["node"] = json!(net.name(node));
            config["value"] = json!(net.variable(node).values()[value as usize]);
            config["trace"] = json!(a.trace.as_ref().map(|p| p.display().to_string()));
            match a.metric {
                Metric::Tau => json!({
                    "node": net.name(node),
                    "value": net.variable(node).values()[value as usize],
                    "records": trace.len(),
                    "tau_hat": integrated_autocorrelation_time(&trace, node, value)?,
                }),
                Metric::Sojourn => json!(sojourn_statistics(&net, &trace, node)?),
                _ => {
                    let truth = match a.truth {
                        Some(t) => t,
                        None => {
                            let ev = Assignment::parse(&net, &a.evidence)?;
                            let table = exact_posteriors(&net, &ev, &[node])?;
                            match table.get(net.name(node)) {
                                Some(p) => p[value as usize],
                                None => bail!("evidence has probability 0; pass --truth"),
                            }
                        }
                    };
                    config["truth"] = json!(truth);
                    config["epsilon"] = json!(a.epsilon);
                    let profile = convergence_profile(&net, &trace, node, value, truth, a.epsilon)?;
                    if a.format == Format::Csv {
                        let mut buf = Vec::new();
                        profile.write_csv(&mut buf)?;
                        write_text(a.out.as_deref(), &String::from_utf8(buf)?)?;
                        return Ok(ExitCode::SUCCESS);
                    }
                    json!(profile)
                }
            }
        }
        Metric::SmSweep => {
            let mut opts = SmSweepOptions::default();
            if let Some(g) = &a.grid {
                opts.grid = split_list(g)
                    .map(|x| x.parse::<f64>().map_err(|e| Usage(format!("grid value `{x}`: {e}"))))
                    .collect::<Result<_, _>>()?;
            }
            opts.runs = a.runs;
            if let Some(m) = a.min_sweeps {
                opts.min_sweeps = m;
            }
            let s = resolve_seed(a.seed);
            seed = Some(s);
            let exec: Execution = a.exec.into();
            config["options"] = json!(opts);
            config["exec"] = json!(exec);
            let points = sm_sweep(&opts, &RngStream::new(s), exec)?;
            if a.format == Format::Csv {
                let mut buf = Vec::new();
                write_sm_csv(&points, &mut buf)?;
                write_text(a.out.as_deref(), &String::from_utf8(buf)?)?;
                return Ok(ExitCode::SUCCESS);
            }
            json!(points)
        }
    };
    emit(a.out.as_deref(), &envelope("diagnose", seed, config, result))?;
    Ok(ExitCode::SUCCESS)
}

/// Evidence for transforms may omit values: only which variables are
/// observed matters to the structure.
fn transform_evidence(net: &BeliefNetwork, list: &str) -> Result<Assignment> {
    let mut ev = Assignment::empty(net);
    for term in split_list(list) {
        match term.split_once('=') {
            Some(_) => {
                for (v, x) in Assignment::parse(net, term)?.iter() {
                    ev.set(v, x);
                }
            }
            None => ev.set(net.id(term)?, 0),
        }
    }
    Ok(ev)
}

fn single_step(net: &BeliefNetwork, kind: StepKind, operands: Vec<String>) -> Result<(TransformPlan, BeliefNetwork)> {
    let mut step = TransformStep {
        kind,
        operands,
        cost: Default::default(),
    };
    let (out, cost) = apply_step(net, &step)?;
    step.cost = cost;
    let mut plan = TransformPlan::new(net, Vec::new(), Vec::new());
    plan.total_cost = cost;
    plan.steps.push(step);
    Ok((plan, out))
}

fn cmd_transform(a: TransformArgs) -> Result<ExitCode> {
    let net = load_net(&a.net)?;
    let mut config = json!({ "net": net_config(&a.net, &net) });
    let (plan, out) = match a.op {
        Op::Reverse => {
            let (from, to) = parse_arc(&net, a.arc.as_deref())?;
            config["op"] = json!("reverse");
            config["arc"] = json!(format!("{}-{}", net.name(from), net.name(to)));
            single_step(&net, StepKind::Reverse, names(&net, &[from, to]))?
        }
        Op::Reduce => {
            let node = net.id(need(&a.node, "--node")?)?;
            config["op"] = json!("reduce");
            config["node"] = json!(net.name(node));
            single_step(&net, StepKind::Reduce, vec![net.name(node).to_string()])?
        }
        Op::Prune | Op::Absorb => {
            let ev = transform_evidence(&net, &a.evidence)?;
            let q = var_ids(&net, need(&a.query, "--query")?)?;
            let ev_names = names(&net, &ev.vars());
            config["evidence"] = json!(ev_names);
            config["query"] = json!(names(&net, &q));
            if matches!(a.op, Op::Prune) {
                config["op"] = json!("prune");
                let seeds: Vec<VarId> = ev.vars().into_iter().chain(q.iter().copied()).collect();
                let (mut plan, out) = single_step(&net, StepKind::Prune, names(&net, &seeds))?;
                plan.evidence = ev_names;
                plan.query = names(&net, &q);
                (plan, out)
            } else {
                config["op"] = json!("absorb");
                absorb_evidence(&net, &ev, &q)?
            }
        }
    };
    for s in &plan.steps {
        eprintln!(
            "{:?} {}: {} CPT entries created, {} arcs added",
            s.kind,
            s.operands.join(","),
            s.cost.cpt_entries_created,
            s.cost.arcs_added
        );
    }
    eprintln!(
        "total: {} steps, {} CPT entries created, {} arcs added",
        plan.steps.len(),
        plan.total_cost.cpt_entries_created,
        plan.total_cost.arcs_added
    );
    if let Some(p) = &a.plan {
        fs::write(p, plan.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    let mut result = json!({ "plan": plan, "output_digest": network_digest(&out) });
    match &a.out_net {
        Some(p) => {
            fs::write(p, out.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
            config["out_net"] = json!(p.display().to_string());
        }
        None => result["network"] = json!(out.to_file()),
    }
    emit(a.out.as_deref(), &envelope("transform", None, config, result))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_repro(a: ReproArgs) -> Result<ExitCode> {
    let fx = match &a.fixtures {
        Some(dir) => {
            if !dir.is_dir() {
                return usage(format!("{} is not a directory", dir.display()));
            }
            FixtureSet::from_dir(dir)
        }
        None => FixtureSet::embedded(),
    };
    let only: Vec<String> = a.only.as_deref().map(|s| split_list(s).map(String::from).collect()).unwrap_or_default();
    let settings = ReproSettings {
        seed: a.seed,
        exec: a.exec.into(),
        // fixture names also narrow the estimator-consistency matrix
        only_fixtures: only
            .iter()
            .filter(|o| o.trim_start_matches(['c', 'C']).parse::<u32>().is_err())
            .cloned()
            .collect(),
    };
    eprintln!("seed: {}", a.seed);
    let outcomes = run_selected(&fx, &settings, &only);
    if outcomes.is_empty() {
        return usage(format!("--only {} matches no criterion", only.join(",")));
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let config = json!({
        "fixtures": a.fixtures.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "embedded".into()),
        "only": only,
        "exec": settings.exec,
    });
    let report = envelope(
        "repro",
        Some(a.seed),
        config,
        json!({ "passed": passed, "total": outcomes.len(), "criteria": outcomes }),
    );
    if a.json {
        emit(None, &report)?;
    } else {
        for o in &outcomes {
            println!("{}", o.line());
        }
        println!("{passed}/{} criteria passed", outcomes.len());
    }
    if let Some(p) = &a.out {
        emit(Some(p), &report)?;
    }
    Ok(if passed == outcomes.len() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

//! The reproduction suite: every acceptance criterion as a runnable check
//! that reports expected value, measured value and tolerance.

use std::fmt::Display;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::diagnostics::{
    integrated_autocorrelation_time, mode_sojourns, pairwise_dependence, sm_sweep,
    sojourn_statistics, SmSweepOptions,
};
use crate::exec::{map_items, Execution, RngStream};
use crate::fixtures::{self, random_network, RandomNetworkOptions};
use crate::network::{parse_network, Assignment, BeliefNetwork, VarId};
use crate::oracle::{
    blanket_conditional, exact_free_posterior, exact_posteriors, gibbs_sweep_kernel,
    joint_marginal_by_name,
};
use crate::samplers::{
    blocked_gibbs_run, blocked_sweep_kernel, clamped_forward_estimate,
    detect_deterministic_groups, gibbs_run, likelihood_weighting_estimate, logic_estimate,
    rejection_estimate, unobserved_evidence_parents, uniform_proposal_estimate, EstimateReport,
    GibbsOptions,
};
use crate::transforms::{absorb_evidence, prune, reduce_node, remap_assignment, reverse_arc};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Shipped fixtures keyed by file stem; load failures are kept and reported
/// by the criteria that need the fixture.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    entries: Vec<(String, Result<BeliefNetwork, String>)>,
}

impl FixtureSet {
    pub fn embedded() -> Self {
        FixtureSet {
            entries: fixtures::ALL
                .iter()
                .map(|(file, text)| (stem(file), parse_network(text).map_err(|e| e.to_string())))
                .collect(),
        }
    }

    /// Reads every shipped fixture name from `dir`.
    pub fn from_dir(dir: &Path) -> Self {
        FixtureSet {
            entries: fixtures::ALL
                .iter()
                .map(|(file, _)| {
                    let net = std::fs::read_to_string(dir.join(file))
                        .map_err(|e| e.to_string())
                        .and_then(|text| parse_network(&text).map_err(|e| e.to_string()));
                    (stem(file), net)
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&BeliefNetwork, String> {
        match self.entries.iter().find(|(n, _)| n == name) {
            Some((_, Ok(net))) => Ok(net),
            Some((_, Err(e))) => Err(format!("fixture {name}.json: {e}")),
            None => Err(format!("fixture {name}.json is not known")),
        }
    }
}

fn stem(file: &str) -> String {
    file.trim_end_matches(".json").to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproSettings {
    pub seed: u64,
    pub exec: Execution,
    /// Restricts the estimator-consistency matrix to these fixtures.
    pub only_fixtures: Vec<String>,
}

impl Default for ReproSettings {
    fn default() -> Self {
        ReproSettings {
            seed: DEFAULT_SEED,
            exec: Execution::Auto,
            only_fixtures: Vec::new(),
        }
    }
}

impl ReproSettings {
    fn stream(&self, id: u32) -> RngStream {
        RngStream::new(self.seed).derive(id as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub measured: String,
    pub tolerance: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub tag: &'static str,
    pub title: &'static str,
    pub checks: Vec<Check>,
    /// Set when the criterion could not run to completion.
    pub error: Option<String>,
    pub passed: bool,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// One-line summary, failing checks first.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut parts: Vec<String> = Vec::new();
        if let Some(e) = &self.error {
            parts.push(format!("error: {e}"));
        }
        let mut checks: Vec<&Check> = self.checks.iter().filter(|c| !c.passed).collect();
        let failing = checks.len();
        checks.extend(self.checks.iter().filter(|c| c.passed));
        let shown = if failing > 0 { failing.min(3) } else { 3 };
        parts.extend(checks.iter().take(shown).map(|c| {
            format!("{}: expected {} measured {} tol {}", c.name, c.expected, c.measured, c.tolerance)
        }));
        if self.checks.len() > shown {
            let passed = self.checks.iter().filter(|c| c.passed).count();
            parts.push(format!("{passed}/{} checks passed", self.checks.len()));
        }
        format!(
            "{status} [{}] C{:02} {} ({:.1}s) | {}",
            self.tag,
            self.id,
            self.title,
            self.seconds,
            parts.join("; ")
        )
    }
}

#[derive(Debug, Default)]
pub struct Checks(Vec<Check>);

impl Checks {
    fn push(&mut self, name: impl Into<String>, expected: String, measured: String, tolerance: String, passed: bool) {
        self.0.push(Check {
            name: name.into(),
            expected,
            measured,
            tolerance,
            passed,
        });
    }

    fn abs(&mut self, name: impl Into<String>, expected: f64, measured: f64, tol: f64) {
        let ok = (measured - expected).abs() <= tol;
        self.push(name, fmt(expected), fmt(measured), format!("±{tol:e}"), ok);
    }

    fn rel(&mut self, name: impl Into<String>, expected: f64, measured: f64, rel: f64) {
        let ok = (measured - expected).abs() <= rel * expected.abs();
        self.push(name, fmt(expected), fmt(measured), format!("rel {rel:e}"), ok);
    }

    fn range(&mut self, name: impl Into<String>, measured: f64, lo: f64, hi: f64) {
        let ok = measured >= lo && measured <= hi;
        self.push(name, format!("[{}, {}]", fmt(lo), fmt(hi)), fmt(measured), "range".into(), ok);
    }

    /// `|measured - expected| <= k σ`; a zero σ requires agreement to 1e-12.
    fn sigma(&mut self, name: impl Into<String>, expected: f64, measured: f64, sigma: f64, k: f64) {
        let bound = if sigma > 0.0 { k * sigma } else { 1e-12 };
        let ok = (measured - expected).abs() <= bound;
        self.push(name, fmt(expected), fmt(measured), format!("{k}σ = {}", fmt(bound)), ok);
    }

    fn flag(&mut self, name: impl Into<String>, expected: &str, measured: impl Display, ok: bool) {
        self.push(name, expected.into(), measured.to_string(), "exact".into(), ok);
    }
}

fn fmt(x: f64) -> String {
    if x == 0.0 || (1e-3..1e6).contains(&x.abs()) {
        format!("{}", (x * 1e6).round() / 1e6)
    } else {
        format!("{x:.4e}")
    }
}

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

type Run = fn(&FixtureSet, &ReproSettings, &mut Checks) -> Result<(), String>;

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    /// Fixture stems the criterion reads.
    pub fixtures: &'static [&'static str],
    run: Run,
}

pub fn criteria() -> &'static [Criterion] {
    &CRITERIA
}

static CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, title: "Worked blanket conditionals", fixtures: &["fig2-1"], run: c1_blanket_conditionals },
    Criterion { id: 2, title: "Two-node intransigence", fixtures: &["fig2-2"], run: c2_two_node },
    Criterion { id: 3, title: "Well-behaved two-node network", fixtures: &["fig2-4"], run: c3_weak_link },
    Criterion { id: 4, title: "Rejection cost", fixtures: &["fig2-1"], run: c4_rejection_cost },
    Criterion { id: 5, title: "Fixation magnitude", fixtures: &["fig2-1"], run: c5_fixation },
    Criterion { id: 6, title: "Uniform-proposal acceptance", fixtures: &["fig3-2-like"], run: c6_uniform_acceptance },
    Criterion { id: 7, title: "Transform correctness", fixtures: &[], run: c7_transforms },
    Criterion { id: 8, title: "Stationarity", fixtures: &["fig2-1", "fig2-2", "fig2-4"], run: c8_stationarity },
    Criterion { id: 9, title: "Deterministic-group fix", fixtures: &[], run: c9_deterministic_group },
    Criterion { id: 10, title: "Simulation-multiple curve", fixtures: &[], run: c10_sm_curve },
    Criterion { id: 11, title: "Node-reduction speedup", fixtures: &["fig3-3-like"], run: c11_reduction_speedup },
    Criterion {
        id: 12,
        title: "Estimator consistency",
        fixtures: &["fig2-1", "fig2-2", "fig2-4", "fig3-2-like", "fig3-3-like"],
        run: c12_consistency,
    },
];

/// Criteria selected by `only`: ids (`7`, `c7`, `C07`) or fixture stems.
/// Empty selects all.
pub fn select(only: &[String]) -> Vec<&'static Criterion> {
    CRITERIA
        .iter()
        .filter(|c| {
            only.is_empty()
                || only.iter().any(|o| {
                    let id = o.trim_start_matches(['c', 'C']).parse::<u32>().ok();
                    id == Some(c.id) || c.fixtures.contains(&stem(o).as_str())
                })
        })
        .collect()
}

pub fn run_criterion(c: &Criterion, fx: &FixtureSet, settings: &ReproSettings) -> CriterionOutcome {
    let start = Instant::now();
    let mut checks = Checks::default();
    let result = (c.run)(fx, settings, &mut checks);
    let error = result.err();
    let passed = error.is_none() && !checks.0.is_empty() && checks.0.iter().all(|k| k.passed);
    CriterionOutcome {
        id: c.id,
        tag: "PRIMARY",
        title: c.title,
        checks: checks.0,
        error,
        passed,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_selected(fx: &FixtureSet, settings: &ReproSettings, only: &[String]) -> Vec<CriterionOutcome> {
    select(only)
        .into_iter()
        .map(|c| run_criterion(c, fx, settings))
        .collect()
}

fn ids(net: &BeliefNetwork, names: &[&str]) -> Result<Vec<VarId>, String> {
    names.iter().map(|n| net.id(n).map_err(err)).collect()
}

fn true_index(net: &BeliefNetwork, v: VarId) -> Result<usize, String> {
    net.variable(v)
        .value_index(crate::network::TRUE)
        .map(usize::from)
        .ok_or_else(|| format!("{} has no TRUE value", net.name(v)))
}

// ---------------------------------------------------------------------------

fn c1_blanket_conditionals(fx: &FixtureSet, _: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fx.get("fig2-1")?;
    let cases = [
        ("P(b|a,e,¬d)", "B", "A=TRUE,E=TRUE,D=FALSE", 1.0, 1e-9),
        ("P(b|¬a,e,¬d)", "B", "A=FALSE,E=TRUE,D=FALSE", 1.0, 1e-9),
        ("P(c|¬d)", "C", "D=FALSE", 0.0001, 1e-4),
        ("P(d|¬c,b,e)", "D", "C=FALSE,B=TRUE,E=TRUE", 0.01, 1e-9),
        ("P(a|b)", "A", "B=TRUE", 0.5, 1e-9),
        ("P(b|a,d,e)", "B", "A=TRUE,D=TRUE,E=TRUE", 0.99, 1e-9),
        ("P(b|¬a,d,e)", "B", "A=FALSE,D=TRUE,E=TRUE", 0.01, 1e-9),
    ];
    for (label, node, given, stated, tol) in cases {
        let v = net.id(node).map_err(err)?;
        let given = Assignment::parse(net, given).map_err(err)?;
        let t = true_index(net, v)?;
        let p = blanket_conditional(net, v, &given).map_err(err)?[t];
        out.abs(label, stated, p, tol);
        // the blanket conditional against full enumeration
        let exact = exact_posteriors(net, &given, &[v]).map_err(err)?;
        let e = exact.get(node).ok_or("conditioning set has probability 0")?[t];
        out.abs(format!("{label} vs enumeration"), e, p, 1e-9);
    }
    let c = net.id("C").map_err(err)?;
    let p = blanket_conditional(net, c, &Assignment::parse(net, "D=FALSE").map_err(err)?).map_err(err)?[1];
    out.abs("P(c|¬d) unrounded", 0.0001 / (0.0001 + 0.9801), p, 1e-9);
    Ok(())
}

fn gibbs_trace(net: &BeliefNetwork, evidence: &Assignment, sweeps: usize, stream: &RngStream) -> Result<crate::trace::SampleTrace, String> {
    Ok(gibbs_run(net, evidence, &[], &GibbsOptions::sweeps(sweeps), stream).map_err(err)?.1)
}

fn c2_two_node(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fx.get("fig2-2")?;
    let [a, b] = ids(net, &["A", "B"])?[..] else { unreachable!() };
    let r = pairwise_dependence(net, a, b).map_err(err)?;
    out.abs("D", 0.002, r.d, 1e-12);
    out.rel("SM", 500.0, r.sm.value().unwrap_or(f64::INFINITY), 1e-9);
    let trace = gibbs_trace(net, &Assignment::empty(net), 1_000_000, &s.stream(2))?;
    let t = true_index(net, a)? as u8;
    let soj = sojourn_statistics(net, &trace, a).map_err(err)?;
    let mean = soj.values[t as usize].mean.unwrap_or(f64::NAN);
    out.range("mean TRUE-sojourn of A", mean, 250.0, 1000.0);
    let tau = integrated_autocorrelation_time(&trace, a, t).map_err(err)?;
    out.range("tau of A", tau, 250.0, 1000.0);
    Ok(())
}

fn c3_weak_link(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fx.get("fig2-4")?;
    let [a, b] = ids(net, &["A", "B"])?[..] else { unreachable!() };
    let r = pairwise_dependence(net, a, b).map_err(err)?;
    out.abs("D", 0.501, r.d, 1e-12);
    out.abs("SM", 1.996, r.sm.value().unwrap_or(f64::INFINITY), 1e-3);
    let trace = gibbs_trace(net, &Assignment::empty(net), 1_000_000, &s.stream(3))?;
    let tau = integrated_autocorrelation_time(&trace, a, true_index(net, a)? as u8).map_err(err)?;
    out.range("tau of A", tau, 1.0, 4.0);
    Ok(())
}

fn c4_rejection_cost(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fx.get("fig2-1")?;
    let ev = Assignment::parse(net, "E=TRUE").map_err(err)?;
    let pe = exact_posteriors(net, &ev, &[]).map_err(err)?.evidence_probability;
    out.abs("oracle P(e)", 1.0 - 0.9802f64.powi(2), pe, 1e-12);
    let n = 1_000_000;
    let (r, _) = rejection_estimate(net, &ev, &[], n, &s.stream(4), s.exec).map_err(err)?;
    let rate = r.acceptance_rate.unwrap_or(0.0);
    let sigma = (pe * (1.0 - pe) / n as f64).sqrt();
    out.sigma("acceptance rate", pe, rate, sigma, 3.0);
    out.range("simulations per usable instance", 1.0 / rate, 20.0, 30.0);
    Ok(())
}

fn c5_fixation(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fx.get("fig2-1")?;
    let ev = Assignment::parse(net, "E=TRUE").map_err(err)?;
    let [b, d] = ids(net, &["B", "D"])?[..] else { unreachable!() };
    let (tb, td) = (true_index(net, b)? as u8, true_index(net, d)? as u8);
    let sweeps = 1_000_000;
    let trace = gibbs_trace(net, &ev, sweeps, &s.stream(5))?;
    let runs = mode_sojourns(&trace, |st| st[b.0] == tb && st[d.0] != td);
    let mean = runs.mean().unwrap_or(f64::NAN);
    out.range("mean B-mode sojourn (sweeps)", mean, 50.0, 200.0);
    out.flag("B-mode sojourns observed", ">= 100", runs.completed().len(), runs.completed().len() >= 100);
    Ok(())
}

fn c6_uniform_acceptance(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fx.get("fig3-2-like")?;
    let ev = Assignment::parse(net, fixtures::FIG3_2_EVIDENCE).map_err(err)?;
    out.flag("evidence nodes", "4", ev.len(), ev.len() == 4);
    let n = 1_000_000;
    let (r, _) = uniform_proposal_estimate(net, &ev, &[], n, &s.stream(6), s.exec).map_err(err)?;
    let p = 1.0 / 16.0;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    out.sigma("acceptance rate", p, r.acceptance_rate.unwrap_or(0.0), sigma, 3.0);
    Ok(())
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn var_names(net: &BeliefNetwork) -> Vec<&str> {
    net.variables().iter().map(|v| v.name()).collect()
}

fn posterior_gap(
    before: &BeliefNetwork,
    after: &BeliefNetwork,
    evidence: &Assignment,
    query: &[VarId],
) -> Result<f64, String> {
    let ev2 = remap_assignment(before, after, evidence);
    let q2: Vec<VarId> = query
        .iter()
        .map(|&q| after.id(before.name(q)).map_err(err))
        .collect::<Result<_, _>>()?;
    let p = exact_posteriors(before, evidence, query).map_err(err)?;
    let p2 = exact_posteriors(after, &ev2, &q2).map_err(err)?;
    if p.defined != p2.defined {
        return Ok(f64::INFINITY);
    }
    let mut gap = 0.0f64;
    for q in query {
        if let (Some(x), Some(y)) = (p.get(before.name(*q)), p2.get(before.name(*q))) {
            gap = gap.max(max_abs(x, y));
        }
    }
    Ok(gap)
}

fn random_evidence<R: Rng>(rng: &mut R, net: &BeliefNetwork, max: usize) -> (Assignment, Vec<VarId>) {
    let mut ev = Assignment::empty(net);
    let k = rng.random_range(0..=max.min(net.len() - 1));
    while ev.len() < k {
        let v = VarId(rng.random_range(0..net.len()));
        ev.set(v, rng.random_range(0..2));
    }
    let free: Vec<VarId> = net.ids().filter(|&v| !ev.contains(v)).collect();
    let q = free[rng.random_range(0..free.len())];
    (ev, vec![q])
}

fn c7_transforms(_: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    const TARGET: usize = 100;
    let mut rng = s.stream(7).rng();
    let (mut n_prune, mut n_rev, mut n_red, mut n_abs) = (0, 0, 0, 0);
    let (mut e_prune, mut e_prune_post, mut e_rev, mut e_red, mut e_abs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut abs_violations = 0usize;
    let mut nets = 0;
    while (n_prune.min(n_rev).min(n_red).min(n_abs) < TARGET) && nets < 5000 {
        nets += 1;
        let opts = RandomNetworkOptions {
            nodes: rng.random_range(2..=8),
            max_parents: 3,
            arc_probability: 0.45,
            deterministic_row_probability: 0.1,
            min_entry: 0.02,
        };
        let net = random_network(&mut rng, &opts);
        let (ev, query) = random_evidence(&mut rng, &net, 3);

        // pruning: marginal over survivors and the posterior
        let (pruned, _) = prune(&net, &ev.vars(), &query).map_err(err)?;
        let names = var_names(&pruned);
        e_prune = e_prune.max(max_abs(
            &joint_marginal_by_name(&net, &names).map_err(err)?,
            &joint_marginal_by_name(&pruned, &names).map_err(err)?,
        ));
        e_prune_post = e_prune_post.max(posterior_gap(&net, &pruned, &ev, &query)?);
        n_prune += 1;

        // reversal of a random legal arc: the full joint
        let legal: Vec<(VarId, VarId)> = net.arcs().filter(|&(a, b)| net.alternate_path(a, b).is_none()).collect();
        if !legal.is_empty() {
            let (a, b) = legal[rng.random_range(0..legal.len())];
            let r = reverse_arc(&net, a, b).map_err(err)?;
            let all = var_names(&net);
            e_rev = e_rev.max(max_abs(
                &joint_marginal_by_name(&net, &all).map_err(err)?,
                &joint_marginal_by_name(&r, &all).map_err(err)?,
            ));
            n_rev += 1;
        }

        // reduction of a random single-child node: marginal of the rest
        let single: Vec<VarId> = net.ids().filter(|&v| net.children(v).len() == 1).collect();
        if !single.is_empty() {
            let x = single[rng.random_range(0..single.len())];
            let r = reduce_node(&net, x).map_err(err)?;
            let rest = var_names(&r);
            e_red = e_red.max(max_abs(
                &joint_marginal_by_name(&net, &rest).map_err(err)?,
                &joint_marginal_by_name(&r, &rest).map_err(err)?,
            ));
            n_red += 1;
        }

        // evidence absorption
        let (_, absorbed) = absorb_evidence(&net, &ev, &query).map_err(err)?;
        if !unobserved_evidence_parents(&absorbed, &remap_assignment(&net, &absorbed, &ev)).is_empty() {
            abs_violations += 1;
        }
        e_abs = e_abs.max(posterior_gap(&net, &absorbed, &ev, &query)?);
        n_abs += 1;
    }
    out.flag("random networks per transform", &format!(">= {TARGET}"), n_prune.min(n_rev).min(n_red).min(n_abs),
        n_prune.min(n_rev).min(n_red).min(n_abs) >= TARGET);
    out.abs("prune: survivor marginal", 0.0, e_prune, 1e-9);
    out.abs("prune: P(K|J)", 0.0, e_prune_post, 1e-9);
    out.abs("reverse: full joint", 0.0, e_rev, 1e-9);
    out.abs("reduce: remaining marginal", 0.0, e_red, 1e-9);
    out.flag("absorb: evidence with unobserved parents", "0", abs_violations, abs_violations == 0);
    out.abs("absorb: P(K|J)", 0.0, e_abs, 1e-9);

    // double reversal on strictly positive two-node networks
    let mut e_double = 0.0f64;
    for _ in 0..TARGET {
        let net = random_network(
            &mut rng,
            &RandomNetworkOptions {
                nodes: 2,
                max_parents: 1,
                arc_probability: 1.0,
                deterministic_row_probability: 0.0,
                min_entry: 0.001,
            },
        );
        let back = reverse_arc(&reverse_arc(&net, VarId(0), VarId(1)).map_err(err)?, VarId(1), VarId(0)).map_err(err)?;
        for v in net.ids() {
            let x: Vec<f64> = net.cpt(v).rows().flatten().copied().collect();
            let y: Vec<f64> = back.cpt(v).rows().flatten().copied().collect();
            e_double = e_double.max(max_abs(&x, &y));
        }
    }
    out.abs("reverse twice: CPTs recovered", 0.0, e_double, 1e-9);
    Ok(())
}

fn c8_stationarity(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let mut cases: Vec<(String, BeliefNetwork, Assignment)> = Vec::new();
    for (name, ev) in [("fig2-1", "E=TRUE"), ("fig2-2", ""), ("fig2-4", "")] {
        let net = fx.get(name)?.clone();
        let ev = Assignment::parse(&net, ev).map_err(err)?;
        cases.push((name.to_string(), net, ev));
    }
    let mut rng = s.stream(8).rng();
    for i in 0..25 {
        let opts = RandomNetworkOptions {
            nodes: rng.random_range(2..=6),
            ..Default::default()
        };
        let net = random_network(&mut rng, &opts);
        let (ev, _) = random_evidence(&mut rng, &net, 2);
        cases.push((format!("random #{i}"), net, ev));
    }
    let (mut worst_stat, mut worst_block) = (0.0f64, 0.0f64);
    for (name, net, ev) in &cases {
        let scan: Vec<VarId> = net.topological_order().iter().copied().filter(|&v| !ev.contains(v)).collect();
        let k = gibbs_sweep_kernel(net, ev, &scan).map_err(|e| format!("{name}: {e}"))?;
        let (_, pi) = exact_free_posterior(net, ev).map_err(err)?;
        let res = k.stationarity_residual(&pi);
        let blocked = blocked_sweep_kernel(net, ev, &[]).map_err(|e| format!("{name}: {e}"))?;
        let diff = k.max_abs_difference(&blocked);
        if name.starts_with("fig") {
            out.abs(format!("{name}: ‖πK − π‖∞"), 0.0, res, 1e-9);
            out.abs(format!("{name}: blocked vs unblocked kernel"), 0.0, diff, 1e-12);
            continue;
        }
        worst_stat = worst_stat.max(res);
        worst_block = worst_block.max(diff);
    }
    out.abs("25 random networks: worst ‖πK − π‖∞", 0.0, worst_stat, 1e-9);
    out.abs("25 random networks: worst kernel difference", 0.0, worst_block, 1e-12);
    Ok(())
}

fn c9_deterministic_group(_: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fixtures::deterministic_pair();
    let none = Assignment::empty(&net);
    let a = VarId(0);
    let sweeps = 100_000;
    let (plain, _) = gibbs_run(&net, &none, &[a], &GibbsOptions::sweeps(sweeps), &s.stream(9)).map_err(err)?;
    out.flag("plain: fixation reported", "yes", plain.fixation.is_some(), plain.fixation.is_some());
    out.flag("plain: state changes", "0", plain.state_changes.unwrap_or(usize::MAX), plain.state_changes == Some(0));
    let groups = vec![vec![VarId(0), VarId(1)]];
    let (blocked, _) = blocked_gibbs_run(&net, &none, &[a], &groups, &GibbsOptions::sweeps(sweeps), &s.stream(9).derive(1))
        .map_err(err)?;
    let (p, se) = blocked.probabilities("A").ok_or("no estimate")?;
    let se = se.ok_or("no standard error")?[1];
    out.sigma("blocked: P(a)", 0.5, p[1], se, 3.0);
    Ok(())
}

fn c10_sm_curve(_: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let opts = SmSweepOptions {
        runs: 2,
        ..Default::default()
    };
    let points = sm_sweep(&opts, &s.stream(10), s.exec).map_err(err)?;
    for p in points {
        let sm = 1.0 / (2.0 * p.q);
        out.range(format!("q={}: tau ({} sweeps)", p.q, p.sweeps), p.tau_hat, sm / 2.0, sm * 2.0);
    }
    Ok(())
}

fn c11_reduction_speedup(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let net = fx.get("fig3-3-like")?;
    let [b, c] = ids(net, &["B", "C"])?[..] else { unreachable!() };
    let link = pairwise_dependence(net, b, c).map_err(err)?;
    out.rel("SM of removed link", 500.0, link.sm.value().unwrap_or(f64::INFINITY), 1e-9);
    let sweeps = 1_000_000;
    let before = gibbs_trace(net, &Assignment::empty(net), sweeps, &s.stream(11))?;
    let tau_before = integrated_autocorrelation_time(&before, c, true_index(net, c)? as u8).map_err(err)?;
    let reduced = reduce_node(net, b).map_err(err)?;
    let c2 = reduced.id("C").map_err(err)?;
    let after = gibbs_trace(&reduced, &Assignment::empty(&reduced), sweeps, &s.stream(11).derive(1))?;
    let tau_after = integrated_autocorrelation_time(&after, c2, true_index(&reduced, c2)? as u8).map_err(err)?;
    let ratio = tau_before / tau_after;
    out.push(
        "tau(C) before / after reduction",
        ">= 50".into(),
        format!("{} ({} / {})", fmt(ratio), fmt(tau_before), fmt(tau_after)),
        "lower bound".into(),
        ratio >= 50.0,
    );
    Ok(())
}

struct Case {
    fixture: &'static str,
    evidence: &'static str,
    groups: &'static [&'static [&'static str]],
}

const CASES: [Case; 9] = [
    Case { fixture: "fig2-1", evidence: "", groups: &[&["B", "D", "E"]] },
    Case { fixture: "fig2-1", evidence: "E=TRUE", groups: &[&["B", "D", "E"]] },
    Case { fixture: "fig2-2", evidence: "", groups: &[&["A", "B"]] },
    Case { fixture: "fig2-2", evidence: "B=TRUE", groups: &[&["A", "B"]] },
    Case { fixture: "fig2-4", evidence: "", groups: &[&["A", "B"]] },
    Case { fixture: "fig3-2-like", evidence: "", groups: &[&["A", "B"]] },
    Case { fixture: "fig3-2-like", evidence: fixtures::FIG3_2_EVIDENCE, groups: &[&["A", "B"]] },
    Case { fixture: "fig3-3-like", evidence: "", groups: &[&["B", "C"]] },
    Case { fixture: "fig3-3-like", evidence: "C=TRUE", groups: &[&["A", "B"]] },
];

const SCHEMES: [&str; 7] = ["logic", "rejection", "lw", "uniform", "gibbs", "blocked-gibbs", "clamped-forward"];

/// Runs one scheme on one case and compares every free variable's P(TRUE)
/// to the oracle within 5 reported standard errors. `Ok(None)` when the
/// scheme does not apply.
fn consistency_job(net: &BeliefNetwork, case: &Case, scheme: &str, stream: &RngStream, exec: Execution) -> Result<Option<Vec<Check>>, String> {
    const N: usize = 1_000_000;
    let ev = Assignment::parse(net, case.evidence).map_err(err)?;
    let free: Vec<VarId> = net.ids().filter(|&v| !ev.contains(v)).collect();
    let gibbs = GibbsOptions::sweeps(N);
    let report: EstimateReport = match scheme {
        "logic" if ev.is_empty() => logic_estimate(net, &free, N, stream, exec).map_err(err)?.0,
        "logic" => return Ok(None),
        "rejection" => rejection_estimate(net, &ev, &free, N, stream, exec).map_err(err)?.0,
        "lw" => likelihood_weighting_estimate(net, &ev, &free, N, stream, exec).map_err(err)?.0,
        "uniform" => uniform_proposal_estimate(net, &ev, &free, N, stream, exec).map_err(err)?.0,
        "gibbs" => {
            // single-site updates cannot leave the support slice of an
            // unobserved deterministic group; that case belongs to the
            // blocked scheme
            let stuck = detect_deterministic_groups(net)
                .iter()
                .any(|g| g.members.iter().all(|&m| !ev.contains(m)));
            if stuck {
                return Ok(None);
            }
            gibbs_run(net, &ev, &free, &gibbs, stream).map_err(err)?.0
        }
        "blocked-gibbs" => {
            let groups: Vec<Vec<VarId>> = case
                .groups
                .iter()
                .map(|g| ids(net, g))
                .collect::<Result<_, _>>()?;
            blocked_gibbs_run(net, &ev, &free, &groups, &gibbs, stream).map_err(err)?.0
        }
        "clamped-forward" => {
            let (_, absorbed) = absorb_evidence(net, &ev, &free).map_err(err)?;
            let ev2 = remap_assignment(net, &absorbed, &ev);
            let free2: Vec<VarId> = free
                .iter()
                .map(|&v| absorbed.id(net.name(v)).map_err(err))
                .collect::<Result<_, _>>()?;
            clamped_forward_estimate(&absorbed, &ev2, &free2, N, stream, exec).map_err(err)?.0
        }
        other => return Err(format!("unknown scheme {other}")),
    };
    let truth = exact_posteriors(net, &ev, &free).map_err(err)?;
    let label = if case.evidence.is_empty() {
        format!("{} {}", scheme, case.fixture)
    } else {
        format!("{} {} | {}", scheme, case.fixture, case.evidence)
    };
    let mut checks = Checks::default();
    for &v in &free {
        let name = net.name(v);
        let t = true_index(net, v)?;
        let exact = truth.get(name).ok_or("evidence has probability 0")?[t];
        match report.probabilities(name) {
            Some((p, Some(se))) => checks.sigma(format!("{label}: P({name})"), exact, p[t], se[t], 5.0),
            _ => checks.flag(format!("{label}: P({name})"), "estimate", "none", false),
        }
    }
    Ok(Some(checks.0))
}

fn c12_consistency(fx: &FixtureSet, s: &ReproSettings, out: &mut Checks) -> Result<(), String> {
    let mut jobs: Vec<(usize, &str)> = Vec::new();
    for (i, case) in CASES.iter().enumerate() {
        if !s.only_fixtures.is_empty() && !s.only_fixtures.iter().any(|f| stem(f) == case.fixture) {
            continue;
        }
        fx.get(case.fixture)?;
        jobs.extend(SCHEMES.iter().map(|&sc| (i, sc)));
    }
    let base = s.stream(12);
    // each job is sequential inside; jobs run side by side
    let results = map_items(&jobs, s.exec, |j, &(i, scheme)| {
        let net = fx.get(CASES[i].fixture)?;
        consistency_job(net, &CASES[i], scheme, &base.derive(j as u64), Execution::Sequential)
    });
    let mut ran = 0;
    for r in results {
        if let Some(checks) = r? {
            ran += 1;
            out.0.extend(checks);
        }
    }
    out.flag("scheme/case runs", "> 0", ran, ran > 0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection() {
        assert_eq!(select(&[]).len(), 12);
        assert_eq!(select(&["c7".into()]).iter().map(|c| c.id).collect::<Vec<_>>(), vec![7]);
        assert_eq!(select(&["fig2-2".into()]).iter().map(|c| c.id).collect::<Vec<_>>(), vec![2, 8, 12]);
        assert_eq!(select(&["fig2-4.json".into()]).iter().map(|c| c.id).collect::<Vec<_>>(), vec![3, 8, 12]);
    }

    #[test]
    fn corrupted_fixture_is_named() {
        let dir = std::env::temp_dir().join(format!("beliefsim-repro-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for (file, text) in fixtures::ALL {
            std::fs::write(dir.join(file), text).unwrap();
        }
        std::fs::write(dir.join("fig2-2.json"), "{ not json").unwrap();
        let fx = FixtureSet::from_dir(&dir);
        let out = run_criterion(&CRITERIA[1], &fx, &ReproSettings::default());
        assert!(!out.passed);
        assert!(out.error.as_deref().unwrap().contains("fig2-2.json"));
        assert!(out.line().starts_with("FAIL [PRIMARY] C02"));
        assert!(run_criterion(&CRITERIA[0], &fx, &ReproSettings::default()).passed);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn worked_conditionals_pass() {
        let out = run_criterion(&CRITERIA[0], &FixtureSet::embedded(), &ReproSettings::default());
        assert!(out.passed, "{}", out.line());
    }
}

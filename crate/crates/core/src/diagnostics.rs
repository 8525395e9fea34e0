//! Local intransigence: dependence scores, simulation multiples, sojourns,
//! autocorrelation times and convergence profiles.

use std::fmt;
use std::io::Write;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::exec::{map_items, Execution, RngStream};
use crate::fixtures;
use crate::network::{Assignment, BeliefNetwork, VarId};
use crate::oracle::{blanket_weights, markov_blanket, OracleError, StateSpace, SweepKernel};
use crate::samplers::{gibbs_run, GibbsOptions, SamplerError};
use crate::trace::SampleTrace;

/// Blanket configurations enumerated by [`worst_case_flip_probability`].
pub const FLIP_CONFIG_LIMIT: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("pairwise dependence needs a binary arc into a single-parent child: {0}")]
    NotPairwise(String),
    #[error("`{0}` is not binary")]
    NonBinary(String),
    #[error("series is constant; autocorrelation time is undefined")]
    ConstantSeries,
    #[error("series is too short ({0} records)")]
    TooShort(usize),
    #[error("empty trace")]
    EmptyTrace,
    #[error("variable index {0} is outside the trace")]
    NodeOutOfRange(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Dependence
// ---------------------------------------------------------------------------

/// `1/D`, infinite when `D = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimulationMultiple {
    Finite(f64),
    Infinite,
}

impl SimulationMultiple {
    pub fn from_dependence(d: f64) -> Self {
        if d > 0.0 {
            SimulationMultiple::Finite(1.0 / d)
        } else {
            SimulationMultiple::Infinite
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            SimulationMultiple::Finite(x) => Some(x),
            SimulationMultiple::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == SimulationMultiple::Infinite
    }
}

impl fmt::Display for SimulationMultiple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimulationMultiple::Finite(x) => write!(f, "{x}"),
            SimulationMultiple::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for SimulationMultiple {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SimulationMultiple::Finite(x) => s.serialize_f64(*x),
            SimulationMultiple::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DependenceMethod {
    Pairwise,
    BlanketFormula,
    WorstCaseFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    /// `A->B` for an arc, the node name otherwise.
    pub subject: String,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "SM")]
    pub sm: SimulationMultiple,
    pub method: DependenceMethod,
}

impl DependenceReport {
    fn new(subject: String, d: f64, method: DependenceMethod) -> Self {
        DependenceReport {
            subject,
            d,
            sm: SimulationMultiple::from_dependence(d),
            method,
        }
    }
}

/// Smaller entry of a binary CPT row, `Min[p, 1-p]`.
fn row_min(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `D = Σ_i Min[p_i, 1-p_i]` over the rows of the child's CPT, for an arc
/// into a child with no other parent.
pub fn pairwise_dependence(
    net: &BeliefNetwork,
    from: VarId,
    to: VarId,
) -> Result<DependenceReport, DiagnosticsError> {
    let subject = format!("{}->{}", net.name(from), net.name(to));
    if net.parents(to) != [from] {
        return Err(DiagnosticsError::NotPairwise(subject));
    }
    for v in [from, to] {
        if net.card(v) != 2 {
            return Err(DiagnosticsError::NonBinary(net.name(v).to_string()));
        }
    }
    let d = net.cpt(to).rows().map(row_min).sum();
    Ok(DependenceReport::new(subject, d, DependenceMethod::Pairwise))
}

/// Blanket extension of [`pairwise_dependence`]. Each CPT touching the node
/// (its own when it has parents, and each child's) contributes the sum of
/// its row minima; `D` is the product of those sums, that is the sum over
/// one row per factor of the product of the row minima. A node with no
/// parents and no children uses its prior row.
pub fn blanket_dependence(net: &BeliefNetwork, node: VarId) -> Result<DependenceReport, DiagnosticsError> {
    if let Some(v) = net.variables().iter().find(|v| !v.is_binary()) {
        return Err(DiagnosticsError::NonBinary(v.name().to_string()));
    }
    let mut factors: Vec<VarId> = net.children(node).to_vec();
    if !net.parents(node).is_empty() || factors.is_empty() {
        factors.push(node);
    }
    let d = factors
        .iter()
        .map(|&f| net.cpt(f).rows().map(row_min).sum::<f64>())
        .product();
    Ok(DependenceReport::new(
        net.name(node).to_string(),
        d,
        DependenceMethod::BlanketFormula,
    ))
}

/// Smallest value probability of the node over every evidence-consistent
/// configuration of its Markov blanket. Configurations with zero
/// probability are skipped.
pub fn worst_case_flip_probability(
    net: &BeliefNetwork,
    node: VarId,
    evidence: &Assignment,
) -> Result<f64, DiagnosticsError> {
    evidence.check(net).map_err(OracleError::from)?;
    let free: Vec<VarId> = markov_blanket(net, node)
        .members()
        .into_iter()
        .filter(|&v| !evidence.contains(v))
        .collect();
    let space = StateSpace::new(net, &free, FLIP_CONFIG_LIMIT)?;
    let mut state: Vec<u8> = net.ids().map(|v| evidence.get(v).unwrap_or(0)).collect();
    let mut buf = vec![0.0; net.card(node)];
    let mut worst = f64::INFINITY;
    for i in 0..space.size() {
        space.write(i, &mut state);
        let z = blanket_weights(net, node, &mut state, &mut buf);
        if z > 0.0 {
            worst = worst.min(row_min(&buf) / z);
        }
    }
    Ok(worst.min(1.0))
}

/// [`worst_case_flip_probability`] as a report with `D` the flip probability.
pub fn flip_dependence(
    net: &BeliefNetwork,
    node: VarId,
    evidence: &Assignment,
) -> Result<DependenceReport, DiagnosticsError> {
    let d = worst_case_flip_probability(net, node, evidence)?;
    Ok(DependenceReport::new(
        net.name(node).to_string(),
        d,
        DependenceMethod::WorstCaseFlip,
    ))
}

// ---------------------------------------------------------------------------
// Sojourns
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLengths {
    /// Maximal runs in sweep units, in trace order.
    pub runs: Vec<usize>,
    /// The last run reaches the end of the trace.
    pub censored: bool,
}

impl RunLengths {
    /// Runs that ended inside the trace.
    pub fn completed(&self) -> &[usize] {
        if self.censored {
            &self.runs[..self.runs.len() - 1]
        } else {
            &self.runs
        }
    }

    /// Mean of the completed runs, or of the censored run when it is the
    /// only one.
    pub fn mean(&self) -> Option<f64> {
        let done = self.completed();
        let runs = if done.is_empty() { &self.runs[..] } else { done };
        (!runs.is_empty()).then(|| runs.iter().sum::<usize>() as f64 / runs.len() as f64)
    }

    pub fn count(&self) -> usize {
        self.runs.len()
    }

    pub fn max(&self) -> Option<usize> {
        self.runs.iter().copied().max()
    }
}

/// Lengths of the maximal runs where `flags` is true.
pub fn true_runs(flags: impl IntoIterator<Item = bool>) -> RunLengths {
    let mut runs = Vec::new();
    let mut cur = 0usize;
    for f in flags {
        if f {
            cur += 1;
        } else if cur > 0 {
            runs.push(cur);
            cur = 0;
        }
    }
    let censored = cur > 0;
    if censored {
        runs.push(cur);
    }
    RunLengths { runs, censored }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueSojourns {
    pub value: String,
    pub mean: Option<f64>,
    pub count: usize,
    pub max: Option<usize>,
    #[serde(flatten)]
    pub runs: RunLengths,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SojournStatistics {
    pub node: String,
    pub values: Vec<ValueSojourns>,
}

impl SojournStatistics {
    pub fn get(&self, value: &str) -> Option<&ValueSojourns> {
        self.values.iter().find(|v| v.value == value)
    }
}

/// Run-length distribution of each value of `node` over the trace.
pub fn sojourn_statistics(
    net: &BeliefNetwork,
    trace: &SampleTrace,
    node: VarId,
) -> Result<SojournStatistics, DiagnosticsError> {
    if trace.is_empty() {
        return Err(DiagnosticsError::EmptyTrace);
    }
    if node.0 >= trace.width() {
        return Err(DiagnosticsError::NodeOutOfRange(node.0));
    }
    let values = (0..net.card(node) as u8)
        .map(|x| {
            let runs = true_runs(trace.series(node).map(|s| s == x));
            ValueSojourns {
                value: net.variable(node).values()[x as usize].clone(),
                mean: runs.mean(),
                count: runs.count(),
                max: runs.max(),
                runs,
            }
        })
        .collect();
    Ok(SojournStatistics {
        node: net.name(node).to_string(),
        values,
    })
}

/// Runs of consecutive records satisfying `mode`, such as a joint
/// configuration of several nodes.
pub fn mode_sojourns(trace: &SampleTrace, mode: impl Fn(&[u8]) -> bool) -> RunLengths {
    true_runs(trace.states().map(mode))
}

// ---------------------------------------------------------------------------
// Autocorrelation
// ---------------------------------------------------------------------------

/// Normalized autocorrelations `ρ_0..ρ_{n-1}` via zero-padded FFT.
pub fn autocorrelation(series: &[f64]) -> Result<Vec<f64>, DiagnosticsError> {
    let n = series.len();
    if n < 2 {
        return Err(DiagnosticsError::TooShort(n));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if c0.is_nan() || c0 <= 0.0 {
        return Err(DiagnosticsError::ConstantSeries);
    }
    Ok(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Integrated autocorrelation time `1 + 2 Σ ρ_t`, truncated by the initial
/// positive sequence rule: pairs `ρ_{2k} + ρ_{2k+1}` are summed while
/// positive. Equals 1 for an i.i.d. series.
pub fn series_autocorrelation_time(series: &[f64]) -> Result<f64, DiagnosticsError> {
    if series.iter().all(|&x| x == series[0]) {
        return Err(DiagnosticsError::ConstantSeries);
    }
    let rho = autocorrelation(series)?;
    let mut sum = 0.0;
    for pair in rho.chunks_exact(2) {
        let g = pair[0] + pair[1];
        if g <= 0.0 {
            break;
        }
        sum += g;
    }
    Ok((2.0 * sum - 1.0).max(1.0))
}

/// τ̂ of the indicator series `node == value`: the empirical simulation multiple.
pub fn integrated_autocorrelation_time(
    trace: &SampleTrace,
    node: VarId,
    value: u8,
) -> Result<f64, DiagnosticsError> {
    if node.0 >= trace.width() {
        return Err(DiagnosticsError::NodeOutOfRange(node.0));
    }
    series_autocorrelation_time(&trace.indicator(node, value))
}

/// Exact integrated autocorrelation time of `f(X)` under a sweep kernel
/// started from its stationary distribution `pi`, summing `ρ_k` from
/// kernel powers until they fall below `tol` or `max_lag` is reached.
pub fn kernel_autocorrelation_time(
    kernel: &SweepKernel,
    pi: &[f64],
    f: &[f64],
    max_lag: usize,
    tol: f64,
) -> Option<f64> {
    let n = kernel.size();
    let mean: f64 = pi.iter().zip(f).map(|(p, x)| p * x).sum();
    let var: f64 = pi.iter().zip(f).map(|(p, x)| p * (x - mean) * (x - mean)).sum();
    if var <= 0.0 {
        return None;
    }
    // g_k = K^k (f - mean), as a column vector
    let mut g: Vec<f64> = f.iter().map(|x| x - mean).collect();
    let mut tau = 1.0;
    for _ in 0..max_lag {
        g = (0..n)
            .map(|i| kernel.row(i).iter().zip(&g).map(|(k, x)| k * x).sum())
            .collect();
        let rho = pi
            .iter()
            .zip(f)
            .zip(&g)
            .map(|((p, x), gk)| p * (x - mean) * gk)
            .sum::<f64>()
            / var;
        tau += 2.0 * rho;
        if rho.abs() < tol {
            break;
        }
    }
    Some(tau)
}

/// Analytic τ of node A's indicator in the symmetric two-node family
/// scanned A then B: the lag-one correlation is `(1-2q)^2`.
pub fn two_node_autocorrelation_time(q: f64) -> f64 {
    let rho = (1.0 - 2.0 * q).powi(2);
    (1.0 + rho) / (1.0 - rho)
}

// ---------------------------------------------------------------------------
// Convergence profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceProfile {
    pub node: String,
    pub value: String,
    pub truth: f64,
    pub epsilon: f64,
    /// Running (weighted) frequency after each record; NaN while no record
    /// has positive weight.
    pub estimates: Vec<f64>,
    /// First 1-based sweep from which `|estimate - truth| < epsilon` for the
    /// rest of the run.
    pub entry_index: Option<usize>,
    pub tau_hat: Option<f64>,
    pub sojourns: SojournStatistics,
}

impl ConvergenceProfile {
    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.estimates.iter().map(move |e| e - self.truth)
    }

    /// `sweep,estimate,error`, one row per record.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DiagnosticsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sweep", "estimate", "error"])
            .map_err(std::io::Error::from)?;
        for (i, e) in self.estimates.iter().enumerate() {
            w.write_record(&[(i + 1).to_string(), e.to_string(), (e - self.truth).to_string()])
                .map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Running estimates of `P(node = value)` from the trace's weighted,
/// accepted records.
pub fn running_estimates(trace: &SampleTrace, node: VarId, value: u8) -> Vec<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    (0..trace.len())
        .map(|i| {
            if trace.is_accepted(i) {
                let w = trace.weight(i);
                den += w;
                if trace.state(i)[node.0] == value {
                    num += w;
                }
            }
            if den > 0.0 {
                num / den
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// First 1-based index from which every error is below `epsilon`.
pub fn entry_index(estimates: &[f64], truth: f64, epsilon: f64) -> Option<usize> {
    let last_bad = estimates
        .iter()
        .rposition(|e| e.is_nan() || (e - truth).abs() >= epsilon);
    match last_bad {
        None if estimates.is_empty() => None,
        None => Some(1),
        Some(i) if i + 1 == estimates.len() => None,
        Some(i) => Some(i + 2),
    }
}

pub fn convergence_profile(
    net: &BeliefNetwork,
    trace: &SampleTrace,
    node: VarId,
    value: u8,
    truth: f64,
    epsilon: f64,
) -> Result<ConvergenceProfile, DiagnosticsError> {
    let sojourns = sojourn_statistics(net, trace, node)?;
    let estimates = running_estimates(trace, node, value);
    let tau_hat = if trace.scheme.is_markov_chain() {
        integrated_autocorrelation_time(trace, node, value).ok()
    } else {
        None
    };
    Ok(ConvergenceProfile {
        node: net.name(node).to_string(),
        value: net.variable(node).values()[value as usize].clone(),
        truth,
        epsilon,
        entry_index: entry_index(&estimates, truth, epsilon),
        estimates,
        tau_hat,
        sojourns,
    })
}

// ---------------------------------------------------------------------------
// Simulation-multiple sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmSweepOptions {
    pub grid: Vec<f64>,
    pub runs: usize,
    /// Each point runs `max(min_sweeps, ceil(sweeps_per_inverse_q / q))` sweeps.
    pub sweeps_per_inverse_q: f64,
    pub min_sweeps: usize,
}

impl Default for SmSweepOptions {
    fn default() -> Self {
        SmSweepOptions {
            grid: vec![0.5, 0.25, 0.1, 0.05, 0.01, 0.005, 0.001],
            runs: 1,
            sweeps_per_inverse_q: 1000.0,
            min_sweeps: 100_000,
        }
    }
}

impl SmSweepOptions {
    pub fn sweeps_for(&self, q: f64) -> usize {
        ((self.sweeps_per_inverse_q / q).ceil() as usize).max(self.min_sweeps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmPoint {
    pub q: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "SM_pred")]
    pub sm_pred: SimulationMultiple,
    pub tau_hat: f64,
    pub runs: usize,
    pub sweeps: usize,
}

/// Predicted and measured simulation multiple across the symmetric
/// two-node family `P(a) = 0.5, P(b|a) = 1-q, P(b|¬a) = q`. τ̂ is that of
/// A's TRUE indicator, averaged over runs. Runs are independent and
/// execute in parallel.
pub fn sm_sweep(
    opts: &SmSweepOptions,
    stream: &RngStream,
    exec: Execution,
) -> Result<Vec<SmPoint>, DiagnosticsError> {
    if let Some(&q) = opts.grid.iter().find(|&&q| !(q > 0.0 && q <= 0.5)) {
        return Err(DiagnosticsError::Sampler(SamplerError::InvalidRequest(format!(
            "q = {q} outside (0, 0.5]"
        ))));
    }
    let runs = opts.runs.max(1);
    let jobs: Vec<(usize, usize)> = (0..opts.grid.len())
        .flat_map(|p| (0..runs).map(move |r| (p, r)))
        .collect();
    let taus = map_items(&jobs, exec, |j, &(p, _)| {
        let q = opts.grid[p];
        let net = fixtures::two_node(q);
        let a = VarId(0);
        let (_, trace) = gibbs_run(
            &net,
            &Assignment::empty(&net),
            &[],
            &GibbsOptions::sweeps(opts.sweeps_for(q)),
            &stream.derive(j as u64),
        )?;
        integrated_autocorrelation_time(&trace, a, 1)
    });
    let taus: Vec<f64> = taus.into_iter().collect::<Result<_, _>>()?;
    Ok(opts
        .grid
        .iter()
        .enumerate()
        .map(|(p, &q)| {
            let d = 2.0 * q;
            SmPoint {
                q,
                d,
                sm_pred: SimulationMultiple::from_dependence(d),
                tau_hat: taus[p * runs..(p + 1) * runs].iter().sum::<f64>() / runs as f64,
                runs,
                sweeps: opts.sweeps_for(q),
            }
        })
        .collect())
}

/// `q,D,SM_pred,tau_hat,runs`.
pub fn write_sm_csv<W: Write>(points: &[SmPoint], out: W) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["q", "D", "SM_pred", "tau_hat", "runs"])
        .map_err(std::io::Error::from)?;
    for p in points {
        w.write_record(&[
            p.q.to_string(),
            p.d.to_string(),
            p.sm_pred.to_string(),
            p.tau_hat.to_string(),
            p.runs.to_string(),
        ])
        .map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_free_posterior, gibbs_sweep_kernel};
    use crate::trace::Scheme;
    use rand::Rng;

    fn id(net: &BeliefNetwork, name: &str) -> VarId {
        net.id(name).unwrap()
    }

    #[test]
    fn pairwise_examples() {
        let net = fixtures::fig2_2();
        let r = pairwise_dependence(&net, VarId(0), VarId(1)).unwrap();
        assert_eq!(r.d, 0.002);
        assert_eq!(r.sm, SimulationMultiple::Finite(500.0));

        let r = pairwise_dependence(&fixtures::fig2_4(), VarId(0), VarId(1)).unwrap();
        assert_eq!(r.d, 0.501);
        assert!((r.sm.value().unwrap() - 1.996_008).abs() < 1e-6);

        let r = pairwise_dependence(&fixtures::two_node(0.5), VarId(0), VarId(1)).unwrap();
        assert_eq!((r.d, r.sm), (1.0, SimulationMultiple::Finite(1.0)));
    }

    #[test]
    fn pairwise_refuses_multi_parent() {
        let net = fixtures::fig2_1();
        assert!(matches!(
            pairwise_dependence(&net, id(&net, "B"), id(&net, "E")),
            Err(DiagnosticsError::NotPairwise(_))
        ));
    }

    #[test]
    fn blanket_examples() {
        let net = fixtures::fig2_2();
        assert_eq!(blanket_dependence(&net, VarId(0)).unwrap().d, 0.002);
        assert_eq!(blanket_dependence(&net, VarId(1)).unwrap().d, 0.002);

        let net = fixtures::fig2_1();
        let r = blanket_dependence(&net, id(&net, "B")).unwrap();
        assert_eq!(r.d, 0.0);
        assert!(r.sm.is_infinite());

        let r = blanket_dependence(&fixtures::single_node(0.3), VarId(0)).unwrap();
        assert!((r.d - 0.3).abs() < 1e-15);
        assert!((r.sm.value().unwrap() - 3.333_333).abs() < 1e-6);
        assert_eq!(
            serde_json::to_value(blanket_dependence(&net, id(&net, "B")).unwrap()).unwrap()["SM"],
            "inf"
        );
    }

    #[test]
    fn flip_examples() {
        let net = fixtures::fig2_2();
        let p = worst_case_flip_probability(&net, VarId(0), &Assignment::empty(&net)).unwrap();
        assert!((p - 0.001).abs() < 1e-12);

        let net = fixtures::fig2_1();
        let e = Assignment::parse(&net, "E=TRUE").unwrap();
        assert_eq!(worst_case_flip_probability(&net, id(&net, "B"), &e).unwrap(), 0.0);

        let p = worst_case_flip_probability(&fixtures::single_node(0.5), VarId(0), &Assignment::empty(&fixtures::single_node(0.5)))
            .unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn run_lengths() {
        let r = true_runs([true, true, false, true, false, false, true]);
        assert_eq!(r.runs, vec![2, 1, 1]);
        assert!(r.censored);
        assert_eq!(r.completed(), &[2, 1]);
        assert_eq!(r.mean(), Some(1.5));
    }

    #[test]
    fn constant_trace_is_one_censored_run() {
        let net = fixtures::fig2_2();
        let mut t = SampleTrace::new(Scheme::Gibbs, &net, Assignment::empty(&net), vec![]);
        for _ in 0..50 {
            t.push(&[1, 1], 1.0, true);
        }
        let s = sojourn_statistics(&net, &t, VarId(0)).unwrap();
        let tr = s.get("TRUE").unwrap();
        assert_eq!(tr.runs.runs, vec![50]);
        assert!(tr.runs.censored);
        assert_eq!(s.get("FALSE").unwrap().count, 0);
        assert!(matches!(
            integrated_autocorrelation_time(&t, VarId(0), 1),
            Err(DiagnosticsError::ConstantSeries)
        ));
    }

    #[test]
    fn iid_series_has_unit_tau() {
        let mut rng = RngStream::new(17).rng();
        let x: Vec<f64> = (0..200_000).map(|_| rng.random_bool(0.3) as u8 as f64).collect();
        let tau = series_autocorrelation_time(&x).unwrap();
        assert!((tau - 1.0).abs() < 0.1, "{tau}");
    }

    /// Two-state chain with flip probability `f`: ρ_k = (1-2f)^k.
    fn two_state_chain(f: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed).rng();
        let mut s = 0u8;
        (0..n)
            .map(|_| {
                if rng.random_bool(f) {
                    s ^= 1;
                }
                s as f64
            })
            .collect()
    }

    #[test]
    fn tau_matches_analytic_two_state_chains() {
        for (i, f) in [0.25, 0.05, 0.01].into_iter().enumerate() {
            let x = two_state_chain(f, 1_000_000, 100 + i as u64);
            let rho: f64 = 1.0 - 2.0 * f;
            let truth = (1.0 + rho) / (1.0 - rho);
            let tau = series_autocorrelation_time(&x).unwrap();
            assert!((tau / truth - 1.0).abs() < 0.25, "f={f}: {tau} vs {truth}");
        }
    }

    #[test]
    fn sojourn_matches_flip_probability() {
        let f = 0.02;
        let x = two_state_chain(f, 1_000_000, 5);
        let runs = true_runs(x.iter().map(|&v| v == 1.0));
        let mean = runs.mean().unwrap();
        assert!(mean > 0.5 / f && mean < 2.0 / f, "{mean}");
    }

    #[test]
    fn analytic_two_node_tau_agrees_with_kernel() {
        for q in [0.25, 0.1, 0.01] {
            let net = fixtures::two_node(q);
            let ev = Assignment::empty(&net);
            let k = gibbs_sweep_kernel(&net, &ev, net.topological_order()).unwrap();
            let (space, pi) = exact_free_posterior(&net, &ev).unwrap();
            let f: Vec<f64> = (0..space.size()).map(|i| k.state(i)[0] as f64).collect();
            let exact = kernel_autocorrelation_time(&k, &pi, &f, 100_000, 1e-14).unwrap();
            let analytic = two_node_autocorrelation_time(q);
            assert!((exact - analytic).abs() < 1e-6 * analytic, "{q}: {exact} vs {analytic}");
        }
        assert!((two_node_autocorrelation_time(0.25) - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_node_sojourn_matches_kernel() {
        let q = 0.02;
        let net = fixtures::two_node(q);
        let ev = Assignment::empty(&net);
        let (_, trace) = gibbs_run(&net, &ev, &[], &GibbsOptions::sweeps(1_000_000), &RngStream::new(9)).unwrap();
        let k = gibbs_sweep_kernel(&net, &ev, net.topological_order()).unwrap();
        // per-sweep probability that A leaves TRUE from (TRUE, TRUE)
        let tt = k.space().index_of(&[1, 1]);
        let leave: f64 = (0..k.size()).filter(|&j| k.state(j)[0] == 0).map(|j| k.entry(tt, j)).sum();
        let mean = sojourn_statistics(&net, &trace, VarId(0)).unwrap().get("TRUE").unwrap().mean.unwrap();
        assert!(mean > 0.5 / leave && mean < 2.0 / leave, "{mean} vs {}", 1.0 / leave);
    }

    #[test]
    fn entry_index_rules() {
        assert_eq!(entry_index(&[0.5, 0.5], 0.5, 10.0), Some(1));
        assert_eq!(entry_index(&[0.0, 0.45, 0.52], 0.5, 0.1), Some(2));
        assert_eq!(entry_index(&[0.5, 0.0], 0.5, 0.1), None);
        assert_eq!(entry_index(&[], 0.5, 0.1), None);
    }

    #[test]
    fn profile_is_recomputable_from_trace() {
        let net = fixtures::fig2_4();
        let ev = Assignment::empty(&net);
        let (_, trace) = gibbs_run(&net, &ev, &[], &GibbsOptions::sweeps(5000), &RngStream::new(2)).unwrap();
        let p = convergence_profile(&net, &trace, VarId(0), 1, 0.5, 0.02).unwrap();
        for t in [1usize, 10, 4999] {
            let freq = trace.series(VarId(0)).take(t + 1).filter(|&x| x == 1).count() as f64 / (t + 1) as f64;
            assert!((p.estimates[t] - freq).abs() < 1e-12);
        }
        let mut csv = Vec::new();
        p.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("sweep,estimate,error\n1,"));
        assert!(p.tau_hat.is_some());
    }

    #[test]
    fn sm_sweep_small_grid() {
        let opts = SmSweepOptions {
            grid: vec![0.5, 0.25],
            runs: 2,
            sweeps_per_inverse_q: 1000.0,
            min_sweeps: 50_000,
        };
        let pts = sm_sweep(&opts, &RngStream::new(1), Execution::Auto).unwrap();
        assert_eq!(pts[0].sm_pred, SimulationMultiple::Finite(1.0));
        assert!((pts[0].tau_hat - 1.0).abs() < 0.15);
        assert_eq!(pts[1].d, 0.5);
        assert!(pts[1].tau_hat > 1.0 && pts[1].tau_hat < 4.0);
        let mut csv = Vec::new();
        write_sm_csv(&pts, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("q,D,SM_pred,tau_hat,runs\n0.5,1,1,"));
    }
}

//! Exact inference by full-joint enumeration, Markov blankets, the exact
//! blanket conditional sampled by the clamped simulator, and the exact
//! transition matrix of one Gibbs sweep.
//!
//! Everything here is brute force on purpose: these are the reference values
//! the samplers and diagnostics are checked against.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::network::{Assignment, BeliefNetwork, NetworkError, VarId};

/// Joint states enumerated by [`exact_posteriors`] (about 22 binary variables).
pub const ENUMERATION_LIMIT: usize = 1 << 22;

/// States of a sweep kernel (12 binary variables).
pub const KERNEL_LIMIT: usize = 1 << 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration needs {states} states, limit is {limit}")]
    BudgetExceeded { states: usize, limit: usize },
    #[error("conditional of {node} is degenerate in state {state}: every value has probability 0")]
    Degenerate {
        node: String,
        state: String,
        vector: Vec<f64>,
    },
    #[error("blanket member `{member}` of `{node}` is unassigned")]
    MissingBlanketMember { node: String, member: String },
    #[error("scan order entry `{0}` is clamped or repeated")]
    BadScanOrder(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// Mixed-radix index over a list of variables, first variable most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    vars: Vec<VarId>,
    cards: Vec<usize>,
    size: usize,
}

impl StateSpace {
    pub fn new(net: &BeliefNetwork, vars: &[VarId], limit: usize) -> Result<Self, OracleError> {
        let size = net.state_count(vars);
        if size > limit {
            return Err(OracleError::BudgetExceeded {
                states: size,
                limit,
            });
        }
        Ok(StateSpace {
            vars: vars.to_vec(),
            cards: vars.iter().map(|&v| net.card(v)).collect(),
            size,
        })
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Writes configuration `index` into the variables' slots of `state`.
    pub fn write(&self, mut index: usize, state: &mut [u8]) {
        for (v, &c) in self.vars.iter().zip(&self.cards).rev() {
            state[v.0] = (index % c) as u8;
            index /= c;
        }
    }

    pub fn index_of(&self, state: &[u8]) -> usize {
        self.vars
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (v, &c)| acc * c + state[v.0] as usize)
    }
}

/// Exact posterior marginals for a set of queries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorTable {
    /// P(evidence).
    pub evidence_probability: f64,
    /// False when P(evidence) = 0; the probability vectors are then absent.
    pub defined: bool,
    pub posteriors: Vec<VariablePosterior>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariablePosterior {
    pub variable: String,
    pub values: Vec<String>,
    pub probabilities: Option<Vec<f64>>,
}

impl PosteriorTable {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.posteriors
            .iter()
            .find(|p| p.variable == name)
            .and_then(|p| p.probabilities.as_deref())
    }
}

fn free_vars(net: &BeliefNetwork, evidence: &Assignment) -> Vec<VarId> {
    net.ids().filter(|&v| !evidence.contains(v)).collect()
}

fn base_state(net: &BeliefNetwork, evidence: &Assignment) -> Vec<u8> {
    let mut state = vec![0u8; net.len()];
    for (v, x) in evidence.iter() {
        state[v.0] = x;
    }
    state
}

/// P(query | evidence) by summing the joint over every completion of the evidence.
pub fn exact_posteriors(
    net: &BeliefNetwork,
    evidence: &Assignment,
    queries: &[VarId],
) -> Result<PosteriorTable, OracleError> {
    evidence.check(net)?;
    let space = StateSpace::new(net, &free_vars(net, evidence), ENUMERATION_LIMIT)?;
    let mut state = base_state(net, evidence);
    let mut sums: Vec<Vec<f64>> = queries.iter().map(|&q| vec![0.0; net.card(q)]).collect();
    let mut total = 0.0;
    for i in 0..space.size() {
        space.write(i, &mut state);
        let p = net.joint_of_state(&state);
        if p == 0.0 {
            continue;
        }
        total += p;
        for (acc, &q) in sums.iter_mut().zip(queries) {
            acc[state[q.0] as usize] += p;
        }
    }
    let defined = total > 0.0;
    let posteriors = queries
        .iter()
        .zip(sums)
        .map(|(&q, acc)| VariablePosterior {
            variable: net.name(q).to_string(),
            values: net.variable(q).values().to_vec(),
            probabilities: defined.then(|| acc.iter().map(|p| p / total).collect()),
        })
        .collect();
    Ok(PosteriorTable {
        evidence_probability: total,
        defined,
        posteriors,
    })
}

/// Marginal joint distribution over `vars`, row-major with the first
/// variable most significant.
pub fn joint_marginal(net: &BeliefNetwork, vars: &[VarId]) -> Result<Vec<f64>, OracleError> {
    let all: Vec<VarId> = net.ids().collect();
    let space = StateSpace::new(net, &all, ENUMERATION_LIMIT)?;
    let target = StateSpace::new(net, vars, ENUMERATION_LIMIT)?;
    let mut out = vec![0.0; target.size()];
    let mut state = vec![0u8; net.len()];
    for i in 0..space.size() {
        space.write(i, &mut state);
        out[target.index_of(&state)] += net.joint_of_state(&state);
    }
    Ok(out)
}

/// Like [`joint_marginal`] but with variables named, so networks with
/// different variable sets can be compared.
pub fn joint_marginal_by_name(net: &BeliefNetwork, names: &[&str]) -> Result<Vec<f64>, OracleError> {
    let vars = names
        .iter()
        .map(|n| net.id(n))
        .collect::<Result<Vec<_>, _>>()?;
    joint_marginal(net, &vars)
}

/// Exact posterior over the non-evidence variables, indexed like the
/// corresponding [`SweepKernel`]. All zeros if P(evidence) = 0.
pub fn exact_free_posterior(
    net: &BeliefNetwork,
    evidence: &Assignment,
) -> Result<(StateSpace, Vec<f64>), OracleError> {
    let space = StateSpace::new(net, &free_vars(net, evidence), ENUMERATION_LIMIT)?;
    let mut state = base_state(net, evidence);
    let mut pi: Vec<f64> = (0..space.size())
        .map(|i| {
            space.write(i, &mut state);
            net.joint_of_state(&state)
        })
        .collect();
    let z: f64 = pi.iter().sum();
    if z > 0.0 {
        pi.iter_mut().for_each(|p| *p /= z);
    }
    Ok((space, pi))
}

// ---------------------------------------------------------------------------
// Markov blankets
// ---------------------------------------------------------------------------

/// Parents, children and co-parents of children. The three sets are
/// disjoint: a co-parent that is already a parent or child is listed there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkovBlanket {
    pub node: VarId,
    pub parents: BTreeSet<VarId>,
    pub children: BTreeSet<VarId>,
    pub spouses: BTreeSet<VarId>,
}

impl MarkovBlanket {
    pub fn members(&self) -> BTreeSet<VarId> {
        self.parents
            .iter()
            .chain(&self.children)
            .chain(&self.spouses)
            .copied()
            .collect()
    }
}

pub fn markov_blanket(net: &BeliefNetwork, node: VarId) -> MarkovBlanket {
    let parents: BTreeSet<VarId> = net.parents(node).iter().copied().collect();
    let children: BTreeSet<VarId> = net.children(node).iter().copied().collect();
    let spouses = children
        .iter()
        .flat_map(|&c| net.parents(c).iter().copied())
        .filter(|s| *s != node && !parents.contains(s) && !children.contains(s))
        .collect();
    MarkovBlanket {
        node,
        parents,
        children,
        spouses,
    }
}

/// Unnormalized blanket weights `P(x | parents) * prod_c P(c | pa(c))` for each
/// value x of `node`, written into `out`. Returns their sum. `state` is
/// restored before returning.
#[inline]
pub fn blanket_weights(net: &BeliefNetwork, node: VarId, state: &mut [u8], out: &mut [f64]) -> f64 {
    let saved = state[node.0];
    let mut z = 0.0;
    for (x, w) in out.iter_mut().enumerate() {
        state[node.0] = x as u8;
        let mut p = net.cpt(node).prob(state);
        for &c in net.children(node) {
            if p == 0.0 {
                break;
            }
            p *= net.cpt(c).prob(state);
        }
        *w = p;
        z += p;
    }
    state[node.0] = saved;
    z
}

pub(crate) fn describe_state(net: &BeliefNetwork, state: &[u8], skip: VarId) -> String {
    net.ids()
        .filter(|&v| v != skip)
        .map(|v| net.label(v, state[v.0]))
        .collect::<Vec<_>>()
        .join(",")
}

/// Blanket conditional on a total state (the node's own slot is ignored).
pub fn blanket_conditional_state(
    net: &BeliefNetwork,
    node: VarId,
    state: &mut [u8],
) -> Result<Vec<f64>, OracleError> {
    let mut w = vec![0.0; net.card(node)];
    let z = blanket_weights(net, node, state, &mut w);
    if z == 0.0 {
        return Err(OracleError::Degenerate {
            node: net.name(node).to_string(),
            state: describe_state(net, state, node),
            vector: w,
        });
    }
    w.iter_mut().for_each(|p| *p /= z);
    Ok(w)
}

/// P(node | W_node): the distribution of `node` given the values of every
/// other variable, which only depends on the Markov blanket. `others` must
/// assign at least the blanket; assignments outside it are ignored.
pub fn blanket_conditional(
    net: &BeliefNetwork,
    node: VarId,
    others: &Assignment,
) -> Result<Vec<f64>, OracleError> {
    others.check(net)?;
    let blanket = markov_blanket(net, node);
    let mut state = vec![0u8; net.len()];
    for m in blanket.members() {
        match others.get(m) {
            Some(x) => state[m.0] = x,
            None => {
                return Err(OracleError::MissingBlanketMember {
                    node: net.name(node).to_string(),
                    member: net.name(m).to_string(),
                })
            }
        }
    }
    blanket_conditional_state(net, node, &mut state)
}

// ---------------------------------------------------------------------------
// Sweep kernels
// ---------------------------------------------------------------------------

/// Exact transition matrix of one full sweep over the non-evidence variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepKernel {
    space: StateSpace,
    base: Vec<u8>,
    matrix: Vec<f64>,
}

impl SweepKernel {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.size() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let n = self.size();
        &self.matrix[from * n..(from + 1) * n]
    }

    /// Total state (evidence included) for a kernel index.
    pub fn state(&self, index: usize) -> Vec<u8> {
        let mut s = self.base.clone();
        self.space.write(index, &mut s);
        s
    }

    /// `pi * K`.
    pub fn apply(&self, pi: &[f64]) -> Vec<f64> {
        let n = self.size();
        let mut out = vec![0.0; n];
        for (i, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, k) in out.iter_mut().zip(self.row(i)) {
                *o += p * k;
            }
        }
        out
    }

    /// `max |pi K - pi|`.
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        self.apply(pi)
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of a row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.size())
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_difference(&self, other: &SweepKernel) -> f64 {
        self.matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Composes per-unit update kernels into one sweep kernel. Each unit is a
/// list of free variables updated jointly; `conditional` returns the
/// distribution over the unit's configurations (row-major, as [`StateSpace`])
/// given the rest of the state.
pub fn compose_sweep_kernel<F>(
    net: &BeliefNetwork,
    evidence: &Assignment,
    units: &[Vec<VarId>],
    mut conditional: F,
) -> Result<SweepKernel, OracleError>
where
    F: FnMut(&[VarId], &mut [u8]) -> Result<Vec<f64>, OracleError>,
{
    evidence.check(net)?;
    let mut seen = vec![false; net.len()];
    for &v in units.iter().flatten() {
        if evidence.contains(v) || seen[v.0] {
            return Err(OracleError::BadScanOrder(net.name(v).to_string()));
        }
        seen[v.0] = true;
    }
    let free = free_vars(net, evidence);
    let space = StateSpace::new(net, &free, KERNEL_LIMIT)?;
    let base = base_state(net, evidence);
    let n = space.size();

    // one-unit kernels in sparse form: (target index, probability) per state
    let mut steps: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(units.len());
    let mut state = base.clone();
    for unit in units {
        let unit_space = StateSpace::new(net, unit, usize::MAX)?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            space.write(i, &mut state);
            let probs = conditional(unit, &mut state)?;
            let mut row = Vec::with_capacity(probs.len());
            for (u, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    unit_space.write(u, &mut state);
                    row.push((space.index_of(&state), p));
                }
            }
            rows.push(row);
        }
        steps.push(rows);
    }

    let mut matrix = vec![0.0; n * n];
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    for start in 0..n {
        cur.iter_mut().for_each(|x| *x = 0.0);
        cur[start] = 1.0;
        for rows in &steps {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (s, &mass) in cur.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for &(t, p) in &rows[s] {
                    next[t] += mass * p;
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        matrix[start * n..(start + 1) * n].copy_from_slice(&cur);
    }
    Ok(SweepKernel {
        space,
        base,
        matrix,
    })
}

/// Sweep kernel of the single-site clamped simulator visiting `scan_order`
/// (non-evidence variables only), each update drawn from
/// [`blanket_conditional`].
pub fn gibbs_sweep_kernel(
    net: &BeliefNetwork,
    evidence: &Assignment,
    scan_order: &[VarId],
) -> Result<SweepKernel, OracleError> {
    let units: Vec<Vec<VarId>> = scan_order.iter().map(|&v| vec![v]).collect();
    compose_sweep_kernel(net, evidence, &units, |unit, state| {
        blanket_conditional_state(net, unit[0], state)
    })
}

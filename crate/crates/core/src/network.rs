//! Belief-network data model, the JSON network file format, validation and
//! elementary joint-probability computations.
//!
//! A [`BeliefNetwork`] is immutable once built. Every other module in the crate
//! consumes it by shared reference, so it can be handed to any number of
//! concurrent readers.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest absolute row-sum deviation that is repaired by normalization.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Deviations at or below this are floating-point noise and are normalized
/// without a warning.
const ROW_SUM_NOISE: f64 = 4.0 * f64::EPSILON;

/// Variables carry at most this many values (states are stored as `u8`).
pub const MAX_VALUES: usize = u8::MAX as usize;

pub const FALSE: &str = "FALSE";
pub const TRUE: &str = "TRUE";

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {}", .0.summary())]
    Invalid(ValidationReport),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{variable}` has no value `{value}`")]
    UnknownValue { variable: String, value: String },
    #[error("assignment is partial: `{0}` is unassigned")]
    PartialAssignment(String),
    #[error("contradictory assignment for `{variable}`: `{first}` and `{second}`")]
    Contradiction {
        variable: String,
        first: String,
        second: String,
    },
    #[error("malformed assignment term `{0}` (expected VAR=VALUE)")]
    MalformedTerm(String),
}

/// Index of a variable within its network (declaration order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// On-disk representation of a network. Field order is the serialized key
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub variables: Vec<VariableDecl>,
    pub cpts: Vec<CptDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDecl {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptDecl {
    pub child: String,
    pub parents: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl VariableDecl {
    pub fn binary(name: impl Into<String>) -> Self {
        VariableDecl {
            name: name.into(),
            values: vec![FALSE.to_string(), TRUE.to_string()],
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    /// Where the problem is, e.g. `cpt B row 1` or `variable A`.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    fn error(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        });
    }

    fn summary(&self) -> String {
        let errors: Vec<String> = self
            .errors()
            .map(|f| format!("{}: {}", f.location, f.message))
            .collect();
        errors.join("; ")
    }
}

/// Checks every structural and numeric invariant of a network file.
///
/// Rows whose sum is within [`ROW_SUM_TOLERANCE`] of one are reported as
/// warnings (they get normalized on construction); larger deviations,
/// entries outside `[0, 1]`, shape mismatches, unknown or duplicate names and
/// cycles are errors.
pub fn validate(file: &NetworkFile) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut index: HashMap<&str, usize> = HashMap::new();

    for (i, var) in file.variables.iter().enumerate() {
        let loc = format!("variable {}", var.name);
        if var.name.is_empty() {
            report.error(format!("variable #{i}"), "name is empty");
        }
        if index.insert(var.name.as_str(), i).is_some() {
            report.error(&loc, "duplicate variable name");
        }
        if var.values.len() < 2 {
            report.error(&loc, "needs at least two values");
        }
        if var.values.len() > MAX_VALUES {
            report.error(&loc, format!("more than {MAX_VALUES} values"));
        }
        let distinct: BTreeSet<&String> = var.values.iter().collect();
        if distinct.len() != var.values.len() {
            report.error(&loc, "values are not distinct");
        }
        if var.values.len() == 2
            && distinct.contains(&TRUE.to_string())
            && distinct.contains(&FALSE.to_string())
            && var.values[0] != FALSE
        {
            report.error(&loc, "binary values must be ordered [FALSE, TRUE]");
        }
    }

    let mut cpt_of: Vec<Option<usize>> = vec![None; file.variables.len()];
    let mut parents_of: Vec<Vec<usize>> = vec![Vec::new(); file.variables.len()];
    for (ci, cpt) in file.cpts.iter().enumerate() {
        let Some(&child) = index.get(cpt.child.as_str()) else {
            report.error(
                format!("cpt #{ci}"),
                format!("child `{}` is not a declared variable", cpt.child),
            );
            continue;
        };
        let loc = format!("cpt {}", cpt.child);
        if cpt_of[child].replace(ci).is_some() {
            report.error(&loc, "variable has more than one cpt");
            continue;
        }
        let mut parent_ids = Vec::with_capacity(cpt.parents.len());
        let mut shape_ok = true;
        for p in &cpt.parents {
            match index.get(p.as_str()) {
                Some(&pid) if parent_ids.contains(&pid) => {
                    report.error(&loc, format!("parent `{p}` listed twice"));
                    shape_ok = false;
                }
                Some(&pid) => parent_ids.push(pid),
                None => {
                    report.error(&loc, format!("parent `{p}` is not a declared variable"));
                    shape_ok = false;
                }
            }
        }
        if parent_ids.contains(&child) {
            report.error(&loc, "variable is its own parent");
            shape_ok = false;
        }
        parents_of[child] = parent_ids.clone();
        if !shape_ok {
            continue;
        }
        let expected_rows: usize = parent_ids
            .iter()
            .map(|&p| file.variables[p].values.len())
            .product();
        if cpt.rows.len() != expected_rows {
            report.error(
                &loc,
                format!("has {} rows, expected {expected_rows}", cpt.rows.len()),
            );
            continue;
        }
        let card = file.variables[child].values.len();
        for (ri, row) in cpt.rows.iter().enumerate() {
            let rloc = format!("cpt {} row {ri}", cpt.child);
            if row.len() != card {
                report.error(&rloc, format!("has {} entries, expected {card}", row.len()));
                continue;
            }
            if let Some(bad) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                report.error(&rloc, format!("entry {bad} outside [0, 1]"));
                continue;
            }
            let sum: f64 = row.iter().sum();
            let dev = (sum - 1.0).abs();
            if dev > ROW_SUM_TOLERANCE {
                report.error(&rloc, format!("sums to {sum}, not 1"));
            } else if dev > ROW_SUM_NOISE {
                report.warning(&rloc, format!("sums to {sum}; normalized"));
            }
        }
    }

    for (i, var) in file.variables.iter().enumerate() {
        if cpt_of[i].is_none() {
            report.error(format!("variable {}", var.name), "has no cpt");
        }
    }

    if let Some(cycle) = find_cycle(&parents_of) {
        let names: Vec<&str> = cycle
            .iter()
            .map(|&i| file.variables[i].name.as_str())
            .collect();
        report.error("graph", format!("arcs form a cycle: {}", names.join(" -> ")));
    }

    report
}

/// Returns one directed cycle (as a node sequence) if the parent relation has any.
fn find_cycle(parents_of: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = parents_of.len();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents_of.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut mark = vec![Mark::New; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        stack.push((root, 0));
        mark[root] = Mark::Active;
        path.push(root);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < children[node].len() {
                let c = children[node][*next];
                *next += 1;
                match mark[c] {
                    Mark::New => {
                        mark[c] = Mark::Active;
                        stack.push((c, 0));
                        path.push(c);
                    }
                    Mark::Active => {
                        let start = path.iter().position(|&x| x == c).unwrap();
                        let mut cycle = path[start..].to_vec();
                        cycle.push(c);
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    name: String,
    values: Vec<String>,
}

impl Variable {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn card(&self) -> usize {
        self.values.len()
    }

    pub fn is_binary(&self) -> bool {
        self.values.len() == 2
    }

    pub fn value_index(&self, label: &str) -> Option<u8> {
        self.values.iter().position(|v| v == label).map(|i| i as u8)
    }
}

/// Conditional probability table. Rows are indexed row-major over the parent
/// list (first parent most significant), each parent in its declared value
/// order; the table is stored flat with the child value varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    child: VarId,
    parents: Vec<VarId>,
    /// Stride of each parent in the row index.
    strides: Vec<usize>,
    card: usize,
    table: Vec<f64>,
}

impl Cpt {
    pub fn child(&self) -> VarId {
        self.child
    }

    pub fn parents(&self) -> &[VarId] {
        &self.parents
    }

    pub fn card(&self) -> usize {
        self.card
    }

    pub fn row_count(&self) -> usize {
        self.table.len() / self.card
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.table[r * self.card..(r + 1) * self.card]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.table.chunks(self.card)
    }

    pub fn entry_count(&self) -> usize {
        self.table.len()
    }

    /// Row index selected by the parents' values in a total state.
    #[inline]
    pub fn row_index(&self, state: &[u8]) -> usize {
        self.parents
            .iter()
            .zip(&self.strides)
            .map(|(p, s)| state[p.0] as usize * s)
            .sum()
    }

    /// `P(child = state[child] | parents = state[parents])`.
    #[inline]
    pub fn prob(&self, state: &[u8]) -> f64 {
        self.table[self.row_index(state) * self.card + state[self.child.0] as usize]
    }

    /// Every row is a point mass.
    pub fn is_functional(&self) -> bool {
        self.table.iter().all(|&p| p == 0.0 || p == 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefNetwork {
    variables: Vec<Variable>,
    cpts: Vec<Cpt>,
    children: Vec<Vec<VarId>>,
    topo: Vec<VarId>,
    by_name: HashMap<String, VarId>,
}

impl BeliefNetwork {
    /// Builds a network from its file form, normalizing rows that are off by
    /// at most [`ROW_SUM_TOLERANCE`]. Returns the validation report so callers
    /// can surface warnings.
    pub fn from_file(file: &NetworkFile) -> Result<(Self, ValidationReport), NetworkError> {
        let report = validate(file);
        if report.has_errors() {
            return Err(NetworkError::Invalid(report));
        }
        let by_name: HashMap<String, VarId> = file
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), VarId(i)))
            .collect();
        let variables: Vec<Variable> = file
            .variables
            .iter()
            .map(|v| Variable {
                name: v.name.clone(),
                values: v.values.clone(),
            })
            .collect();
        let mut cpts: Vec<Option<Cpt>> = vec![None; variables.len()];
        for decl in &file.cpts {
            let child = by_name[&decl.child];
            let parents: Vec<VarId> = decl.parents.iter().map(|p| by_name[p]).collect();
            let mut strides = vec![0; parents.len()];
            let mut acc = 1;
            for (i, p) in parents.iter().enumerate().rev() {
                strides[i] = acc;
                acc *= variables[p.0].card();
            }
            let card = variables[child.0].card();
            let mut table = Vec::with_capacity(decl.rows.len() * card);
            for row in &decl.rows {
                let sum: f64 = row.iter().sum();
                table.extend(row.iter().map(|p| p / sum));
            }
            cpts[child.0] = Some(Cpt {
                child,
                parents,
                strides,
                card,
                table,
            });
        }
        let cpts: Vec<Cpt> = cpts.into_iter().map(Option::unwrap).collect();
        let mut children = vec![Vec::new(); variables.len()];
        for cpt in &cpts {
            for p in &cpt.parents {
                children[p.0].push(cpt.child);
            }
        }
        let topo = kahn_order(&cpts, &children);
        Ok((
            BeliefNetwork {
                variables,
                cpts,
                children,
                topo,
                by_name,
            },
            report,
        ))
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            variables: self
                .variables
                .iter()
                .map(|v| VariableDecl {
                    name: v.name.clone(),
                    values: v.values.clone(),
                })
                .collect(),
            cpts: self
                .cpts
                .iter()
                .map(|c| CptDecl {
                    child: self.name(c.child).to_string(),
                    parents: c.parents.iter().map(|&p| self.name(p).to_string()).collect(),
                    rows: c.rows().map(<[f64]>::to_vec).collect(),
                })
                .collect(),
        }
    }

    /// Pretty-printed JSON in the network file format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network file serializes")
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.variables.len()).map(VarId)
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.variables[id.0].name
    }

    pub fn card(&self, id: VarId) -> usize {
        self.variables[id.0].card()
    }

    pub fn id(&self, name: &str) -> Result<VarId, NetworkError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::UnknownVariable(name.to_string()))
    }

    pub fn cpt(&self, id: VarId) -> &Cpt {
        &self.cpts[id.0]
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn parents(&self, id: VarId) -> &[VarId] {
        &self.cpts[id.0].parents
    }

    pub fn children(&self, id: VarId) -> &[VarId] {
        &self.children[id.0]
    }

    /// Parent-before-child order: roots first, then each variable after the
    /// longest path reaching it; ties go to the earlier declared variable.
    pub fn topological_order(&self) -> &[VarId] {
        &self.topo
    }

    pub fn is_binary(&self) -> bool {
        self.variables.iter().all(Variable::is_binary)
    }

    pub fn arcs(&self) -> impl Iterator<Item = (VarId, VarId)> + '_ {
        self.cpts
            .iter()
            .flat_map(|c| c.parents.iter().map(move |&p| (p, c.child)))
    }

    pub fn has_arc(&self, from: VarId, to: VarId) -> bool {
        self.parents(to).contains(&from)
    }

    /// Number of joint states over the given variables, saturating.
    pub fn state_count(&self, vars: &[VarId]) -> usize {
        vars.iter()
            .fold(1usize, |acc, &v| acc.saturating_mul(self.card(v)))
    }

    /// Product of CPT entries selected by a total state.
    #[inline]
    pub fn joint_of_state(&self, state: &[u8]) -> f64 {
        self.cpts.iter().map(|c| c.prob(state)).product()
    }

    /// Strict ancestors plus the seeds themselves.
    pub fn ancestral_closure(&self, seeds: &[VarId]) -> BTreeSet<VarId> {
        let mut seen: BTreeSet<VarId> = BTreeSet::new();
        let mut stack: Vec<VarId> = seeds.to_vec();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.parents(v).iter().copied());
            }
        }
        seen
    }

    /// A directed path from `from` to `to` avoiding the direct arc, if any.
    pub fn alternate_path(&self, from: VarId, to: VarId) -> Option<Vec<VarId>> {
        let mut prev: Vec<Option<VarId>> = vec![None; self.len()];
        let mut stack: Vec<VarId> = Vec::new();
        for &c in self.children(from) {
            if c != to && prev[c.0].is_none() {
                prev[c.0] = Some(from);
                stack.push(c);
            }
        }
        while let Some(v) = stack.pop() {
            if v == to {
                let mut path = vec![to];
                let mut cur = to;
                while let Some(p) = prev[cur.0] {
                    path.push(p);
                    if p == from {
                        break;
                    }
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for &c in self.children(v) {
                if prev[c.0].is_none() && c != from {
                    prev[c.0] = Some(v);
                    stack.push(c);
                }
            }
        }
        None
    }

    /// Short textual label `NAME=VALUE`.
    pub fn label(&self, id: VarId, value: u8) -> String {
        format!("{}={}", self.name(id), self.variable(id).values[value as usize])
    }
}

fn kahn_order(cpts: &[Cpt], children: &[Vec<VarId>]) -> Vec<VarId> {
    // generation order: roots first, then by longest distance from a root;
    // declaration order within a generation
    let mut indeg: Vec<usize> = cpts.iter().map(|c| c.parents.len()).collect();
    let mut depth = vec![0usize; cpts.len()];
    let mut queue: Vec<usize> = (0..cpts.len()).filter(|&i| indeg[i] == 0).collect();
    while let Some(v) = queue.pop() {
        for c in &children[v] {
            depth[c.0] = depth[c.0].max(depth[v] + 1);
            indeg[c.0] -= 1;
            if indeg[c.0] == 0 {
                queue.push(c.0);
            }
        }
    }
    let mut order: Vec<VarId> = (0..cpts.len()).map(VarId).collect();
    order.sort_by_key(|v| (depth[v.0], v.0));
    order
}

impl fmt::Display for BeliefNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &v in &self.topo {
            let parents: Vec<&str> = self.parents(v).iter().map(|&p| self.name(p)).collect();
            writeln!(
                f,
                "{} [{}] <- ({})",
                self.name(v),
                self.variable(v).values.join(", "),
                parents.join(", ")
            )?;
        }
        Ok(())
    }
}

/// Parses and validates network-file content.
pub fn parse_network(text: &str) -> Result<BeliefNetwork, NetworkError> {
    parse_network_with_report(text).map(|(net, _)| net)
}

/// Like [`parse_network`] but also returns the (warning-only) validation report.
pub fn parse_network_with_report(
    text: &str,
) -> Result<(BeliefNetwork, ValidationReport), NetworkError> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| NetworkError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    BeliefNetwork::from_file(&file)
}

/// Returns every variable ordered so that parents precede children.
pub fn topological_order(net: &BeliefNetwork) -> Vec<VarId> {
    net.topological_order().to_vec()
}

// ---------------------------------------------------------------------------
// Assignments
// ---------------------------------------------------------------------------

/// A partial or total mapping from variables to value indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: Vec<Option<u8>>,
}

/// Observed variables (the clamped set).
pub type Evidence = Assignment;

impl Assignment {
    pub fn empty(net: &BeliefNetwork) -> Self {
        Assignment {
            values: vec![None; net.len()],
        }
    }

    pub fn from_state(state: &[u8]) -> Self {
        Assignment {
            values: state.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// Builds from `(name, value label)` pairs; repeated names must agree.
    pub fn from_pairs<'a>(
        net: &BeliefNetwork,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, NetworkError> {
        let mut a = Assignment::empty(net);
        for (name, label) in pairs {
            let id = net.id(name)?;
            let value = net
                .variable(id)
                .value_index(label)
                .ok_or_else(|| NetworkError::UnknownValue {
                    variable: name.to_string(),
                    value: label.to_string(),
                })?;
            if let Some(prev) = a.get(id) {
                if prev != value {
                    return Err(NetworkError::Contradiction {
                        variable: name.to_string(),
                        first: net.variable(id).values[prev as usize].clone(),
                        second: label.to_string(),
                    });
                }
            }
            a.set(id, value);
        }
        Ok(a)
    }

    /// Parses `VAR=VALUE,VAR=VALUE`. An empty string is the empty assignment.
    pub fn parse(net: &BeliefNetwork, text: &str) -> Result<Self, NetworkError> {
        let mut pairs = Vec::new();
        for term in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (name, value) = term
                .split_once('=')
                .ok_or_else(|| NetworkError::MalformedTerm(term.to_string()))?;
            pairs.push((name.trim(), value.trim()));
        }
        Assignment::from_pairs(net, pairs)
    }

    pub fn get(&self, id: VarId) -> Option<u8> {
        self.values[id.0]
    }

    pub fn set(&mut self, id: VarId, value: u8) {
        self.values[id.0] = Some(value);
    }

    pub fn unset(&mut self, id: VarId) {
        self.values[id.0] = None;
    }

    pub fn contains(&self, id: VarId) -> bool {
        self.values[id.0].is_some()
    }

    pub fn len(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_total(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, u8)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (VarId(i), v)))
    }

    pub fn vars(&self) -> Vec<VarId> {
        self.iter().map(|(v, _)| v).collect()
    }

    /// Dense state if total.
    pub fn to_state(&self) -> Option<Vec<u8>> {
        self.values.iter().copied().collect()
    }

    /// True iff every assigned variable agrees with `state`.
    pub fn agrees_with(&self, state: &[u8]) -> bool {
        self.iter().all(|(v, x)| state[v.0] == x)
    }

    /// Checks value ranges against a network.
    pub fn check(&self, net: &BeliefNetwork) -> Result<(), NetworkError> {
        if self.values.len() != net.len() {
            return Err(NetworkError::UnknownVariable(format!(
                "assignment sized for {} variables, network has {}",
                self.values.len(),
                net.len()
            )));
        }
        for (v, x) in self.iter() {
            if x as usize >= net.card(v) {
                return Err(NetworkError::UnknownValue {
                    variable: net.name(v).to_string(),
                    value: x.to_string(),
                });
            }
        }
        Ok(())
    }

    /// `A=TRUE,B=FALSE` in declaration order.
    pub fn display(&self, net: &BeliefNetwork) -> String {
        self.iter()
            .map(|(v, x)| net.label(v, x))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Product over variables of the CPT entry selected by a total assignment.
pub fn joint_probability(net: &BeliefNetwork, full: &Assignment) -> Result<f64, NetworkError> {
    full.check(net)?;
    let state = full.to_state().ok_or_else(|| {
        let missing = net.ids().find(|&v| !full.contains(v)).unwrap();
        NetworkError::PartialAssignment(net.name(missing).to_string())
    })?;
    Ok(net.joint_of_state(&state))
}

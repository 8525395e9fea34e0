//! Network modifications that preserve the answer to a query: pruning,
//! arc reversal, node reduction and the evidence-absorption planner.
//!
//! Every transform returns a new network. Steps name variables rather than
//! indices because pruning and reduction renumber them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::factor::Factor;
use crate::network::{Assignment, BeliefNetwork, CptDecl, NetworkError, NetworkFile, VarId};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("no arc {0} -> {1}")]
    NoArc(String, String),
    #[error("reversing {from} -> {to} would create a cycle via {}", .path.join(" -> "))]
    AlternatePath {
        from: String,
        to: String,
        path: Vec<String>,
    },
    #[error("node reduction needs exactly one child; {node} has {children}")]
    ChildCount { node: String, children: usize },
    #[error("evidence and query overlap on {0}")]
    EvidenceQueryOverlap(String),
    #[error("plan was made for network {expected}, got {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("malformed step: {0}")]
    BadStep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Prune,
    Reverse,
    Reduce,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCost {
    pub cpt_entries_created: usize,
    pub arcs_added: usize,
}

impl std::ops::AddAssign for StepCost {
    fn add_assign(&mut self, o: StepCost) {
        self.cpt_entries_created += o.cpt_entries_created;
        self.arcs_added += o.arcs_added;
    }
}

/// One transform. Operands: `[from, to]` for a reversal, `[node]` for a
/// reduction, the retained seed set `J ∪ K` for pruning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformStep {
    pub kind: StepKind,
    pub operands: Vec<String>,
    pub cost: StepCost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformPlan {
    /// sha256 of the input network's compact JSON.
    pub input_digest: String,
    pub evidence: Vec<String>,
    pub query: Vec<String>,
    pub steps: Vec<TransformStep>,
    pub total_cost: StepCost,
}

impl TransformPlan {
    pub fn new(net: &BeliefNetwork, evidence: Vec<String>, query: Vec<String>) -> Self {
        TransformPlan {
            input_digest: network_digest(net),
            evidence,
            query,
            steps: Vec::new(),
            total_cost: StepCost::default(),
        }
    }

    fn push(&mut self, kind: StepKind, operands: Vec<String>, cost: StepCost) {
        self.total_cost += cost;
        self.steps.push(TransformStep {
            kind,
            operands,
            cost,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Applies the steps to `net`, which must match the recorded digest.
    pub fn replay(&self, net: &BeliefNetwork) -> Result<BeliefNetwork, TransformError> {
        let found = network_digest(net);
        if found != self.input_digest {
            return Err(TransformError::DigestMismatch {
                expected: self.input_digest.clone(),
                found,
            });
        }
        let mut cur = net.clone();
        for step in &self.steps {
            cur = apply_step(&cur, step)?.0;
        }
        Ok(cur)
    }
}

/// Hex sha256 of the network's canonical compact JSON.
pub fn network_digest(net: &BeliefNetwork) -> String {
    let json = serde_json::to_string(&net.to_file()).expect("network file serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn lookup(net: &BeliefNetwork, names: &[String]) -> Result<Vec<VarId>, TransformError> {
    Ok(names.iter().map(|n| net.id(n)).collect::<Result<_, _>>()?)
}

/// Re-applies a recorded step.
pub fn apply_step(
    net: &BeliefNetwork,
    step: &TransformStep,
) -> Result<(BeliefNetwork, StepCost), TransformError> {
    let ops = lookup(net, &step.operands)?;
    match (step.kind, ops.as_slice()) {
        (StepKind::Prune, seeds) => Ok((prune_to(net, seeds)?.0, StepCost::default())),
        (StepKind::Reverse, &[a, b]) => reverse_arc_with_cost(net, a, b),
        (StepKind::Reduce, &[x]) => reduce_node_with_cost(net, x),
        _ => Err(TransformError::BadStep(format!(
            "{:?} with operands {:?}",
            step.kind, step.operands
        ))),
    }
}

fn rebuild(file: &NetworkFile) -> Result<BeliefNetwork, TransformError> {
    Ok(BeliefNetwork::from_file(file)?.0)
}

fn names(net: &BeliefNetwork, vars: &[VarId]) -> Vec<String> {
    vars.iter().map(|&v| net.name(v).to_string()).collect()
}

fn arcs_added(before: &BeliefNetwork, after: &BeliefNetwork) -> usize {
    let old: BTreeSet<(String, String)> = before
        .arcs()
        .map(|(p, c)| (before.name(p).to_string(), before.name(c).to_string()))
        .collect();
    after
        .arcs()
        .filter(|&(p, c)| !old.contains(&(after.name(p).to_string(), after.name(c).to_string())))
        .count()
}

/// Keeps only `J ∪ K` and their ancestors. Returns the removed names.
pub fn prune(
    net: &BeliefNetwork,
    evidence: &[VarId],
    query: &[VarId],
) -> Result<(BeliefNetwork, Vec<String>), TransformError> {
    let seeds: Vec<VarId> = evidence.iter().chain(query).copied().collect();
    prune_to(net, &seeds)
}

fn prune_to(net: &BeliefNetwork, seeds: &[VarId]) -> Result<(BeliefNetwork, Vec<String>), TransformError> {
    let keep = net.ancestral_closure(seeds);
    let file = net.to_file();
    let removed = net
        .ids()
        .filter(|v| !keep.contains(v))
        .map(|v| net.name(v).to_string())
        .collect();
    let out = NetworkFile {
        variables: file
            .variables
            .into_iter()
            .enumerate()
            .filter(|(i, _)| keep.contains(&VarId(*i)))
            .map(|(_, v)| v)
            .collect(),
        cpts: file
            .cpts
            .into_iter()
            .enumerate()
            .filter(|(i, _)| keep.contains(&VarId(*i)))
            .map(|(_, c)| c)
            .collect(),
    };
    Ok((rebuild(&out)?, removed))
}

fn cpt_decl(net: &BeliefNetwork, child: VarId, parents: Vec<VarId>, rows: Vec<Vec<f64>>) -> CptDecl {
    CptDecl {
        child: net.name(child).to_string(),
        parents: names(net, &parents),
        rows,
    }
}

fn set_cpt(file: &mut NetworkFile, net: &BeliefNetwork, child: VarId, decl: CptDecl) {
    let slot = file
        .cpts
        .iter_mut()
        .find(|c| c.child == net.name(child))
        .expect("every variable has a cpt");
    *slot = decl;
}

/// Reverses `from -> to` by Bayes' rule. `to` inherits `from`'s parents and
/// `from` inherits `to`'s other parents; the joint is unchanged. Parent
/// configurations of zero probability get a uniform row for `from`.
pub fn reverse_arc(net: &BeliefNetwork, from: VarId, to: VarId) -> Result<BeliefNetwork, TransformError> {
    Ok(reverse_arc_with_cost(net, from, to)?.0)
}

pub fn reverse_arc_with_cost(
    net: &BeliefNetwork,
    a: VarId,
    b: VarId,
) -> Result<(BeliefNetwork, StepCost), TransformError> {
    if !net.has_arc(a, b) {
        return Err(TransformError::NoArc(net.name(a).to_string(), net.name(b).to_string()));
    }
    if let Some(path) = net.alternate_path(a, b) {
        return Err(TransformError::AlternatePath {
            from: net.name(a).to_string(),
            to: net.name(b).to_string(),
            path: names(net, &path),
        });
    }
    let b_others: Vec<VarId> = net.parents(b).iter().copied().filter(|&p| p != a).collect();
    let mut b_parents = b_others.clone();
    b_parents.extend(net.parents(a).iter().filter(|p| !b_others.contains(p)));
    let mut a_parents = net.parents(a).to_vec();
    a_parents.extend(b_others.iter().filter(|p| !net.parents(a).contains(p)));
    a_parents.push(b);

    let joint = Factor::from_cpt(net, net.cpt(a)).product(&Factor::from_cpt(net, net.cpt(b)));
    let mut b_vars = b_parents.clone();
    b_vars.push(b);
    let (_, b_rows) = joint.sum_out(a).reorder(&b_vars).into_rows();
    let mut a_vars = a_parents.clone();
    a_vars.push(a);
    let (_, a_rows) = joint.reorder(&a_vars).into_rows();

    let cost = StepCost {
        cpt_entries_created: b_rows.len() * net.card(b) + a_rows.len() * net.card(a),
        arcs_added: 0,
    };
    let mut file = net.to_file();
    set_cpt(&mut file, net, b, cpt_decl(net, b, b_parents, b_rows));
    set_cpt(&mut file, net, a, cpt_decl(net, a, a_parents, a_rows));
    let out = rebuild(&file)?;
    let cost = StepCost {
        arcs_added: arcs_added(net, &out),
        ..cost
    };
    Ok((out, cost))
}

/// Sums a single-child node out into its child; the child inherits its
/// parents.
pub fn reduce_node(net: &BeliefNetwork, x: VarId) -> Result<BeliefNetwork, TransformError> {
    Ok(reduce_node_with_cost(net, x)?.0)
}

pub fn reduce_node_with_cost(net: &BeliefNetwork, x: VarId) -> Result<(BeliefNetwork, StepCost), TransformError> {
    let &[c] = net.children(x) else {
        return Err(TransformError::ChildCount {
            node: net.name(x).to_string(),
            children: net.children(x).len(),
        });
    };
    let mut c_parents: Vec<VarId> = net.parents(c).iter().copied().filter(|&p| p != x).collect();
    let inherited: Vec<VarId> = net
        .parents(x)
        .iter()
        .copied()
        .filter(|p| !c_parents.contains(p))
        .collect();
    c_parents.extend(&inherited);
    let mut c_vars = c_parents.clone();
    c_vars.push(c);
    let (_, rows) = Factor::from_cpt(net, net.cpt(x))
        .product(&Factor::from_cpt(net, net.cpt(c)))
        .sum_out(x)
        .reorder(&c_vars)
        .into_rows();
    let cost = StepCost {
        cpt_entries_created: rows.len() * net.card(c),
        arcs_added: 0,
    };
    let mut file = net.to_file();
    set_cpt(&mut file, net, c, cpt_decl(net, c, c_parents, rows));
    let name = net.name(x);
    file.variables.retain(|v| v.name != name);
    file.cpts.retain(|d| d.child != name);
    let out = rebuild(&file)?;
    let cost = StepCost {
        arcs_added: arcs_added(net, &out),
        ..cost
    };
    Ok((out, cost))
}

/// The same assignment expressed over another network's variables, by name.
/// Variables missing from `to` are dropped.
pub fn remap_assignment(from: &BeliefNetwork, to: &BeliefNetwork, a: &Assignment) -> Assignment {
    let mut out = Assignment::empty(to);
    for (v, x) in a.iter() {
        if let Ok(t) = to.id(from.name(v)) {
            out.set(t, x);
        }
    }
    out
}

/// Reverses arcs until no evidence variable has an unobserved parent, then
/// prunes to the ancestors of `J ∪ K`.
///
/// Order: repeatedly take the first evidence variable (in the current
/// topological order) with an unobserved parent and reverse the arc from
/// its last unobserved parent in that order. Earlier evidence variables
/// already have only observed parents, so no alternate path can exist.
pub fn absorb_evidence(
    net: &BeliefNetwork,
    evidence: &Assignment,
    query: &[VarId],
) -> Result<(TransformPlan, BeliefNetwork), TransformError> {
    evidence.check(net)?;
    let j = evidence.vars();
    if let Some(&v) = query.iter().find(|q| evidence.contains(**q)) {
        return Err(TransformError::EvidenceQueryOverlap(net.name(v).to_string()));
    }
    let j_names = names(net, &j);
    let k_names = names(net, query);
    let mut plan = TransformPlan::new(net, j_names.clone(), k_names.clone());
    let mut cur = net.clone();
    loop {
        let observed = lookup(&cur, &j_names)?;
        let next = cur.topological_order().iter().find_map(|&e| {
            if !observed.contains(&e) {
                return None;
            }
            let pos = |v: VarId| cur.topological_order().iter().position(|&x| x == v);
            cur.parents(e)
                .iter()
                .copied()
                .filter(|p| !observed.contains(p))
                .max_by_key(|&p| pos(p))
                .map(|p| (p, e))
        });
        let Some((p, e)) = next else { break };
        let (out, cost) = reverse_arc_with_cost(&cur, p, e)?;
        plan.push(
            StepKind::Reverse,
            vec![cur.name(p).to_string(), cur.name(e).to_string()],
            cost,
        );
        cur = out;
    }
    let seeds: Vec<String> = j_names.iter().chain(&k_names).cloned().collect();
    let (out, _) = prune_to(&cur, &lookup(&cur, &seeds)?)?;
    plan.push(StepKind::Prune, seeds, StepCost::default());
    Ok((plan, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::oracle::{exact_posteriors, joint_marginal_by_name};
    use crate::samplers::unobserved_evidence_parents;

    fn id(net: &BeliefNetwork, n: &str) -> VarId {
        net.id(n).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn reverse_two_node() {
        let net = fixtures::fig2_2();
        let r = reverse_arc(&net, VarId(0), VarId(1)).unwrap();
        assert!(r.has_arc(VarId(1), VarId(0)));
        assert!((r.cpt(VarId(1)).row(0)[1] - 0.5).abs() < 1e-12);
        assert!((r.cpt(VarId(0)).row(1)[1] - 0.999).abs() < 1e-12);
        let back = reverse_arc(&r, VarId(1), VarId(0)).unwrap();
        for v in net.ids() {
            let a: Vec<f64> = net.cpt(v).rows().flatten().copied().collect();
            let b: Vec<f64> = back.cpt(v).rows().flatten().copied().collect();
            assert!(max_diff(&a, &b) < 1e-9);
        }
    }

    #[test]
    fn reverse_independent_arc() {
        let net = crate::parse_network(
            r#"{"variables":[{"name":"A","values":["FALSE","TRUE"]},{"name":"B","values":["FALSE","TRUE"]}],
               "cpts":[{"child":"A","parents":[],"rows":[[0.7,0.3]]},
                       {"child":"B","parents":["A"],"rows":[[0.4,0.6],[0.4,0.6]]}]}"#,
        )
        .unwrap();
        let r = reverse_arc(&net, VarId(0), VarId(1)).unwrap();
        assert!((r.cpt(VarId(1)).row(0)[1] - 0.6).abs() < 1e-12);
        assert!((r.cpt(VarId(0)).row(0)[1] - 0.3).abs() < 1e-12);
        assert!((r.cpt(VarId(0)).row(1)[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn reverse_refuses_cycle() {
        let net = fixtures::fig3_3_like();
        let chain = crate::parse_network(
            r#"{"variables":[{"name":"A","values":["FALSE","TRUE"]},{"name":"B","values":["FALSE","TRUE"]},{"name":"C","values":["FALSE","TRUE"]}],
               "cpts":[{"child":"A","parents":[],"rows":[[0.5,0.5]]},
                       {"child":"B","parents":["A"],"rows":[[0.8,0.2],[0.3,0.7]]},
                       {"child":"C","parents":["A","B"],"rows":[[0.9,0.1],[0.5,0.5],[0.4,0.6],[0.2,0.8]]}]}"#,
        )
        .unwrap();
        match reverse_arc(&chain, id(&chain, "A"), id(&chain, "C")) {
            Err(TransformError::AlternatePath { path, .. }) => assert_eq!(path, vec!["A", "B", "C"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            reverse_arc(&net, id(&net, "A"), id(&net, "C")),
            Err(TransformError::NoArc(..))
        ));
    }

    #[test]
    fn reverse_preserves_joint_with_shared_parents() {
        let net = fixtures::fig2_1();
        let r = reverse_arc(&net, id(&net, "B"), id(&net, "E")).unwrap();
        let all = ["A", "B", "C", "D", "E"];
        let before = joint_marginal_by_name(&net, &all).unwrap();
        let after = joint_marginal_by_name(&r, &all).unwrap();
        assert!(max_diff(&before, &after) < 1e-12);
        assert_eq!(r.parents(id(&r, "E")), &[id(&r, "D"), id(&r, "A")]);
        assert_eq!(r.parents(id(&r, "B")), &[id(&r, "A"), id(&r, "D"), id(&r, "E")]);
    }

    #[test]
    fn reduce_chain_example() {
        let net = fixtures::fig3_3_like();
        let r = reduce_node(&net, id(&net, "B")).unwrap();
        assert_eq!(r.len(), 2);
        let c = r.cpt(id(&r, "C"));
        assert!((c.row(1)[1] - 0.6996).abs() < 1e-12);
        assert!((c.row(0)[1] - 0.2006).abs() < 1e-12);
        let before = joint_marginal_by_name(&net, &["A", "C"]).unwrap();
        let after = joint_marginal_by_name(&r, &["A", "C"]).unwrap();
        assert!(max_diff(&before, &after) < 1e-12);
    }

    #[test]
    fn reduce_deterministic_copy_is_substitution() {
        let net = crate::parse_network(
            r#"{"variables":[{"name":"A","values":["FALSE","TRUE"]},{"name":"X","values":["FALSE","TRUE"]},{"name":"C","values":["FALSE","TRUE"]}],
               "cpts":[{"child":"A","parents":[],"rows":[[0.5,0.5]]},
                       {"child":"X","parents":["A"],"rows":[[1,0],[0,1]]},
                       {"child":"C","parents":["X"],"rows":[[0.9,0.1],[0.35,0.65]]}]}"#,
        )
        .unwrap();
        let r = reduce_node(&net, id(&net, "X")).unwrap();
        let c = r.cpt(id(&r, "C"));
        assert_eq!(c.parents(), &[id(&r, "A")]);
        assert_eq!(c.row(0), &[0.9, 0.1]);
        assert_eq!(c.row(1), &[0.35, 0.65]);
    }

    #[test]
    fn reduce_refuses_multiple_children() {
        let net = fixtures::fork();
        assert!(matches!(
            reduce_node(&net, id(&net, "X")),
            Err(TransformError::ChildCount { children: 2, .. })
        ));
    }

    #[test]
    fn prune_examples() {
        // barren leaf below the evidence
        let mut file = fixtures::fig2_1().to_file();
        file.variables.push(crate::network::VariableDecl::binary("F"));
        file.cpts.push(CptDecl {
            child: "F".into(),
            parents: vec!["E".into()],
            rows: vec![vec![0.5, 0.5], vec![0.2, 0.8]],
        });
        let net = BeliefNetwork::from_file(&file).unwrap().0;
        let (p, removed) = prune(&net, &[id(&net, "E")], &[id(&net, "A")]).unwrap();
        assert_eq!(removed, vec!["F"]);
        assert_eq!(p.len(), 5);

        // every node reaches J ∪ K
        let net = fixtures::fig2_1();
        let (_, removed) = prune(&net, &[id(&net, "E")], &[]).unwrap();
        assert!(removed.is_empty());

        // two detached clusters
        let net = fixtures::fig3_2_like();
        let (p, removed) = prune(&net, &[id(&net, "A")], &[]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(removed.len(), 6);
    }

    #[test]
    fn absorb_two_node() {
        let net = fixtures::fig2_2();
        let ev = Assignment::parse(&net, "B=TRUE").unwrap();
        let (plan, out) = absorb_evidence(&net, &ev, &[VarId(0)]).unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert_eq!(plan.steps[0].kind, StepKind::Reverse);
        assert_eq!(plan.steps[0].operands, vec!["A", "B"]);
        assert_eq!(plan.steps[1].kind, StepKind::Prune);
        assert_eq!(out.len(), 2);
        assert_eq!(plan.replay(&net).unwrap(), out);
    }

    #[test]
    fn absorb_without_evidence_only_prunes() {
        let net = fixtures::fig2_1();
        let (plan, out) = absorb_evidence(&net, &Assignment::empty(&net), &[id(&net, "B")]).unwrap();
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.steps[0].kind, StepKind::Prune);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn absorb_layered_fixture() {
        let net = fixtures::fig3_2_like();
        let ev = Assignment::parse(&net, fixtures::FIG3_2_EVIDENCE).unwrap();
        let k = id(&net, "K");
        let (plan, out) = absorb_evidence(&net, &ev, &[k]).unwrap();
        let ev2 = remap_assignment(&net, &out, &ev);
        assert!(unobserved_evidence_parents(&out, &ev2).is_empty());
        // roots have been pruned away
        assert!(out.id("A").is_err() && out.id("B").is_err());
        let before = exact_posteriors(&net, &ev, &[k]).unwrap();
        let after = exact_posteriors(&out, &ev2, &[out.id("K").unwrap()]).unwrap();
        assert!(max_diff(before.get("K").unwrap(), after.get("K").unwrap()) < 1e-12);
        assert!(plan.total_cost.cpt_entries_created > 0);

        let json = plan.to_json();
        let back = TransformPlan::from_json(&json).unwrap();
        assert_eq!(back.replay(&net).unwrap(), out);
        assert!(json.contains("\"kind\": \"reverse\""));
        assert!(matches!(back.replay(&out), Err(TransformError::DigestMismatch { .. })));
    }

    #[test]
    fn absorb_rejects_overlap() {
        let net = fixtures::fig2_2();
        let ev = Assignment::parse(&net, "B=TRUE").unwrap();
        assert!(matches!(
            absorb_evidence(&net, &ev, &[VarId(1)]),
            Err(TransformError::EvidenceQueryOverlap(_))
        ));
    }

    #[test]
    fn digest_is_stable_hex() {
        let d = network_digest(&fixtures::fig2_2());
        assert_eq!(d.len(), 64);
        assert_eq!(d, network_digest(&fixtures::fig2_2()));
        assert_ne!(d, network_digest(&fixtures::fig2_4()));
    }
}

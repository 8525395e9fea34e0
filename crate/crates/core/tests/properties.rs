use beliefsim::diagnostics::{
    blanket_dependence, pairwise_dependence, running_estimates, worst_case_flip_probability,
    SimulationMultiple,
};
use beliefsim::exec::RngStream;
use beliefsim::fixtures::{random_network, RandomNetworkOptions};
use beliefsim::network::{CptDecl, NetworkFile, VariableDecl};
use beliefsim::oracle::{
    blanket_conditional, exact_free_posterior, exact_posteriors, gibbs_sweep_kernel,
    joint_marginal_by_name, markov_blanket,
};
use beliefsim::samplers::{blocked_sweep_kernel, sample_index, unobserved_evidence_parents};
use beliefsim::trace::{SampleTrace, Scheme};
use beliefsim::transforms::{absorb_evidence, prune, reduce_node, remap_assignment, reverse_arc};
use beliefsim::{Assignment, BeliefNetwork, VarId};
use proptest::prelude::*;
use rand::Rng;

fn net_from(seed: u64, nodes: usize, det: f64) -> BeliefNetwork {
    let mut rng = RngStream::new(seed).rng();
    random_network(
        &mut rng,
        &RandomNetworkOptions {
            nodes,
            max_parents: 3,
            arc_probability: 0.45,
            deterministic_row_probability: det,
            min_entry: 0.02,
        },
    )
}

fn evidence_from(seed: u64, net: &BeliefNetwork, max: usize) -> (Assignment, Vec<VarId>) {
    let mut rng = RngStream::new(seed).substream(1);
    let mut ev = Assignment::empty(net);
    let k = rng.random_range(0..=max.min(net.len() - 1));
    while ev.len() < k {
        ev.set(VarId(rng.random_range(0..net.len())), rng.random_range(0..2));
    }
    let free: Vec<VarId> = net.ids().filter(|&v| !ev.contains(v)).collect();
    (ev, vec![free[rng.random_range(0..free.len())]])
}

fn names(net: &BeliefNetwork) -> Vec<&str> {
    net.variables().iter().map(|v| v.name()).collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn two_node(prior: f64, p_false: f64, p_true: f64) -> BeliefNetwork {
    let file = NetworkFile {
        variables: vec![VariableDecl::binary("A"), VariableDecl::binary("B")],
        cpts: vec![
            CptDecl { child: "A".into(), parents: vec![], rows: vec![vec![1.0 - prior, prior]] },
            CptDecl {
                child: "B".into(),
                parents: vec!["A".into()],
                rows: vec![vec![1.0 - p_false, p_false], vec![1.0 - p_true, p_true]],
            },
        ],
    };
    BeliefNetwork::from_file(&file).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn threshold_inversion_picks_bracketing_value(
        raw in prop::collection::vec(0.0f64..1.0, 1..6),
        u in 0.0f64..1.0,
    ) {
        let z: f64 = raw.iter().sum();
        prop_assume!(z > 1e-6);
        let probs: Vec<f64> = raw.iter().map(|p| p / z).collect();
        let i = sample_index(&probs, u);
        let below: f64 = probs[..i].iter().sum();
        prop_assert!(probs[i] > 0.0);
        prop_assert!(below <= u + 1e-12);
    }

    #[test]
    fn blanket_conditional_matches_enumeration(seed in any::<u64>(), nodes in 2usize..7) {
        let net = net_from(seed, nodes, 0.0);
        let mut rng = RngStream::new(seed).substream(2);
        let node = VarId(rng.random_range(0..net.len()));
        let mut given = Assignment::empty(&net);
        for v in net.ids().filter(|&v| v != node) {
            given.set(v, rng.random_range(0..2));
        }
        let p = blanket_conditional(&net, node, &given).unwrap();
        let exact = exact_posteriors(&net, &given, &[node]).unwrap();
        prop_assert!(max_abs(&p, exact.get(net.name(node)).unwrap()) < 1e-9);
        // only the blanket matters
        let mut blanket_only = Assignment::empty(&net);
        for m in markov_blanket(&net, node).members() {
            blanket_only.set(m, given.get(m).unwrap());
        }
        prop_assert_eq!(blanket_conditional(&net, node, &blanket_only).unwrap(), p);
    }

    #[test]
    fn sweep_kernels_leave_posterior_invariant(seed in any::<u64>(), nodes in 2usize..7) {
        let net = net_from(seed, nodes, 0.0);
        let (ev, _) = evidence_from(seed, &net, 2);
        let scan: Vec<VarId> = net.topological_order().iter().copied().filter(|&v| !ev.contains(v)).collect();
        let k = gibbs_sweep_kernel(&net, &ev, &scan).unwrap();
        let (_, pi) = exact_free_posterior(&net, &ev).unwrap();
        prop_assert!(k.stationarity_residual(&pi) < 1e-9);
        prop_assert!(k.row_sum_error() < 1e-12);
        let blocked = blocked_sweep_kernel(&net, &ev, &[]).unwrap();
        prop_assert!(k.max_abs_difference(&blocked) < 1e-12);
    }

    #[test]
    fn prune_preserves_posterior(seed in any::<u64>(), nodes in 2usize..9) {
        let net = net_from(seed, nodes, 0.1);
        let (ev, q) = evidence_from(seed, &net, 3);
        let (pruned, removed) = prune(&net, &ev.vars(), &q).unwrap();
        prop_assert_eq!(pruned.len() + removed.len(), net.len());
        let keep = names(&pruned);
        let a = joint_marginal_by_name(&net, &keep).unwrap();
        let b = joint_marginal_by_name(&pruned, &keep).unwrap();
        prop_assert!(max_abs(&a, &b) < 1e-9);
    }

    #[test]
    fn reversal_preserves_joint(seed in any::<u64>(), nodes in 2usize..9) {
        let net = net_from(seed, nodes, 0.1);
        let legal: Vec<(VarId, VarId)> = net.arcs().filter(|&(a, b)| net.alternate_path(a, b).is_none()).collect();
        prop_assume!(!legal.is_empty());
        let (a, b) = legal[(seed % legal.len() as u64) as usize];
        let r = reverse_arc(&net, a, b).unwrap();
        prop_assert!(r.has_arc(b, a) && !r.has_arc(a, b));
        let all = names(&net);
        let x = joint_marginal_by_name(&net, &all).unwrap();
        let y = joint_marginal_by_name(&r, &all).unwrap();
        prop_assert!(max_abs(&x, &y) < 1e-9);
    }

    #[test]
    fn reduction_preserves_marginal(seed in any::<u64>(), nodes in 2usize..9) {
        let net = net_from(seed, nodes, 0.1);
        let single: Vec<VarId> = net.ids().filter(|&v| net.children(v).len() == 1).collect();
        prop_assume!(!single.is_empty());
        let x = single[(seed % single.len() as u64) as usize];
        let r = reduce_node(&net, x).unwrap();
        let rest = names(&r);
        let a = joint_marginal_by_name(&net, &rest).unwrap();
        let b = joint_marginal_by_name(&r, &rest).unwrap();
        prop_assert!(max_abs(&a, &b) < 1e-9);
    }

    #[test]
    fn absorption_meets_clamped_precondition(seed in any::<u64>(), nodes in 2usize..9) {
        let net = net_from(seed, nodes, 0.1);
        let (ev, q) = evidence_from(seed, &net, 3);
        let (plan, out) = absorb_evidence(&net, &ev, &q).unwrap();
        let ev2 = remap_assignment(&net, &out, &ev);
        prop_assert!(unobserved_evidence_parents(&out, &ev2).is_empty());
        let q2 = [out.id(net.name(q[0])).unwrap()];
        let before = exact_posteriors(&net, &ev, &q).unwrap();
        let after = exact_posteriors(&out, &ev2, &q2).unwrap();
        prop_assert_eq!(before.defined, after.defined);
        if before.defined {
            let name = net.name(q[0]);
            prop_assert!(max_abs(before.get(name).unwrap(), after.get(name).unwrap()) < 1e-9);
        }
        prop_assert_eq!(plan.replay(&net).unwrap(), out);
    }

    #[test]
    fn double_reversal_is_identity(prior in 0.001f64..0.999, p0 in 0.001f64..0.999, p1 in 0.001f64..0.999) {
        let net = two_node(prior, p0, p1);
        let back = reverse_arc(&reverse_arc(&net, VarId(0), VarId(1)).unwrap(), VarId(1), VarId(0)).unwrap();
        for v in net.ids() {
            let x: Vec<f64> = net.cpt(v).rows().flatten().copied().collect();
            let y: Vec<f64> = back.cpt(v).rows().flatten().copied().collect();
            prop_assert!(max_abs(&x, &y) < 1e-9);
        }
    }

    #[test]
    fn simulation_multiple_is_inverse_dependence(prior in 0.01f64..0.99, p0 in 0.0f64..=1.0, p1 in 0.0f64..=1.0) {
        let net = two_node(prior, p0, p1);
        let pair = pairwise_dependence(&net, VarId(0), VarId(1)).unwrap();
        match pair.sm {
            SimulationMultiple::Finite(sm) => prop_assert!((sm * pair.d - 1.0).abs() < 1e-12),
            SimulationMultiple::Infinite => prop_assert_eq!(pair.d, 0.0),
        }
        // the blanket formula reduces to the pairwise one on both nodes
        for v in net.ids() {
            prop_assert!((blanket_dependence(&net, v).unwrap().d - pair.d).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_flip_iff_degenerate_configuration(seed in any::<u64>(), nodes in 2usize..6) {
        let net = net_from(seed, nodes, 0.3);
        let node = VarId((seed % nodes as u64) as usize);
        let flip = worst_case_flip_probability(&net, node, &Assignment::empty(&net)).unwrap();
        // brute force over total states
        let mut degenerate = false;
        for i in 0..(1usize << net.len()) {
            let mut given = Assignment::empty(&net);
            for v in net.ids().filter(|&v| v != node) {
                given.set(v, ((i >> v.0) & 1) as u8);
            }
            if let Ok(p) = blanket_conditional(&net, node, &given) {
                degenerate |= p.contains(&0.0);
            }
        }
        prop_assert_eq!(flip == 0.0, degenerate);
    }

    #[test]
    fn trace_csv_round_trips(seed in any::<u64>(), len in 1usize..50) {
        let net = net_from(seed, 4, 0.0);
        let mut rng = RngStream::new(seed).rng();
        let mut t = SampleTrace::new(Scheme::LikelihoodWeighting, &net, Assignment::empty(&net), vec![]);
        for _ in 0..len {
            let s: Vec<u8> = (0..net.len()).map(|_| rng.random_range(0..2)).collect();
            t.push(&s, rng.random::<f64>(), rng.random());
        }
        let mut buf = Vec::new();
        t.write_csv(&net, &mut buf).unwrap();
        let back = SampleTrace::read_csv(&net, &buf[..]).unwrap();
        prop_assert_eq!(back.len(), len);
        for i in 0..len {
            prop_assert_eq!(back.state(i), t.state(i));
            prop_assert_eq!(back.weight(i), t.weight(i));
            prop_assert_eq!(back.is_accepted(i), t.is_accepted(i));
        }
        // running estimates are recomputable from the stored records
        let r1 = running_estimates(&t, VarId(0), 1);
        let r2 = running_estimates(&back, VarId(0), 1);
        prop_assert!(r1.iter().zip(&r2).all(|(a, b)| a == b || (a.is_nan() && b.is_nan())));
    }
}

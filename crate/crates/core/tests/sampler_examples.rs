use beliefsim::exec::{Execution, RngStream};
use beliefsim::fixtures;
use beliefsim::oracle::exact_posteriors;
use beliefsim::samplers::{
    blocked_gibbs_run, clamped_forward_estimate, gibbs_run, likelihood_weighting_estimate,
    logic_estimate, rejection_estimate, uniform_proposal_estimate, GibbsOptions,
};
use beliefsim::transforms::reverse_arc;
use beliefsim::{Assignment, BeliefNetwork, VarId};

const P_A_GIVEN_E: f64 = 0.252_55;

fn id(net: &BeliefNetwork, name: &str) -> VarId {
    net.id(name).unwrap()
}

fn within(p: f64, truth: f64, se: f64, k: f64) -> bool {
    (p - truth).abs() <= k * se
}

#[test]
fn oracle_value_of_a_given_e() {
    let net = fixtures::fig2_1();
    let ev = Assignment::parse(&net, "E=TRUE").unwrap();
    let t = exact_posteriors(&net, &ev, &[id(&net, "A")]).unwrap();
    assert!((t.get("A").unwrap()[1] - P_A_GIVEN_E).abs() < 1e-5);
    assert!((t.evidence_probability - (1.0 - 0.9802f64.powi(2))).abs() < 1e-15);
}

#[test]
fn logic_frequency_of_e() {
    let net = fixtures::fig2_1();
    let e = id(&net, "E");
    let n = 1_000_000;
    let (r, _) = logic_estimate(&net, &[e], n, &RngStream::new(31), Execution::Auto).unwrap();
    let pe = 1.0 - 0.9802f64.powi(2);
    let sigma = (pe * (1.0 - pe) / n as f64).sqrt();
    assert!(within(r.get("E").unwrap().probabilities.as_ref().unwrap()[1], pe, sigma, 3.0));
}

#[test]
fn rejection_and_weighting_recover_a_given_e() {
    let net = fixtures::fig2_1();
    let ev = Assignment::parse(&net, "E=TRUE").unwrap();
    let a = [id(&net, "A")];
    let s = RngStream::new(5);
    let (rej, _) = rejection_estimate(&net, &ev, &a, 1_000_000, &s, Execution::Auto).unwrap();
    let (p, se) = rej.probabilities("A").unwrap();
    assert!(within(p[1], P_A_GIVEN_E, se.unwrap()[1], 3.0), "{p:?}");
    assert!((1.0 / rej.acceptance_rate.unwrap() - 25.5).abs() < 1.0);

    let (lw, _) = likelihood_weighting_estimate(&net, &ev, &a, 1_000_000, &s, Execution::Auto).unwrap();
    let (p, se) = lw.probabilities("A").unwrap();
    assert!(within(p[1], P_A_GIVEN_E, se.unwrap()[1], 3.0), "{p:?}");
    // mean weight estimates P(J)
    let pe = 1.0 - 0.9802f64.powi(2);
    assert!((lw.evidence_probability_estimate.unwrap() - pe).abs() < 0.002);
    let ess = lw.effective_sample_size.unwrap();
    assert!(ess > 0.0 && ess <= 1_000_000.0);
}

#[test]
fn uniform_proposal_examples() {
    let net = fixtures::fig2_2();
    let ev = Assignment::parse(&net, "B=TRUE").unwrap();
    let (r, _) = uniform_proposal_estimate(&net, &ev, &[VarId(0)], 400_000, &RngStream::new(2), Execution::Auto).unwrap();
    let (p, se) = r.probabilities("A").unwrap();
    assert!(within(p[1], 0.999, se.unwrap()[1], 3.0), "{p:?} {se:?}");
    // scaled weights reproduce P(J) = 0.5
    assert!((r.evidence_probability_estimate.unwrap() - 0.5).abs() < 0.01);
}

#[test]
fn estimates_are_distributions() {
    let net = fixtures::fig3_2_like();
    let ev = Assignment::parse(&net, fixtures::FIG3_2_EVIDENCE).unwrap();
    let q: Vec<VarId> = net.ids().filter(|v| !ev.contains(*v)).collect();
    let (r, trace) = likelihood_weighting_estimate(&net, &ev, &q, 50_000, &RngStream::new(3), Execution::Auto).unwrap();
    assert_eq!(trace.len(), 50_000);
    for e in &r.estimates {
        let p = e.probabilities.as_ref().unwrap();
        assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    for i in 0..trace.len() {
        assert!(trace.weight(i) >= 0.0);
        if trace.is_accepted(i) {
            assert!(ev.agrees_with(trace.state(i)));
        }
    }
}

#[test]
fn gibbs_two_node_wide_band() {
    let net = fixtures::fig2_2();
    let (r, trace) = gibbs_run(&net, &Assignment::empty(&net), &[VarId(0)], &GibbsOptions::sweeps(1_000_000), &RngStream::new(7)).unwrap();
    let p = r.get("A").unwrap().probabilities.as_ref().unwrap()[1];
    assert!((0.45..=0.55).contains(&p), "{p}");
    assert_eq!(trace.len(), 1_000_000);
    assert_eq!(trace.initial_state.as_deref(), Some(&[1u8, 1][..]));
}

#[test]
fn blocked_fig2_1_with_or_group() {
    let net = fixtures::fig2_1();
    let ev = Assignment::parse(&net, "E=TRUE").unwrap();
    let groups = vec![vec![id(&net, "B"), id(&net, "D"), id(&net, "E")]];
    let (r, _) = blocked_gibbs_run(&net, &ev, &[id(&net, "A")], &groups, &GibbsOptions::sweeps(200_000), &RngStream::new(4)).unwrap();
    let (p, se) = r.probabilities("A").unwrap();
    assert!(within(p[1], P_A_GIVEN_E, se.unwrap()[1], 3.0), "{p:?}");
}

#[test]
fn clamped_forward_after_reversal() {
    let net = reverse_arc(&fixtures::fig2_2(), VarId(0), VarId(1)).unwrap();
    let ev = Assignment::parse(&net, "B=TRUE").unwrap();
    let (r, _) = clamped_forward_estimate(&net, &ev, &[VarId(0)], 200_000, &RngStream::new(8), Execution::Auto).unwrap();
    assert_eq!(r.acceptance_rate, Some(1.0));
    let (p, se) = r.probabilities("A").unwrap();
    assert!(within(p[1], 0.999, se.unwrap()[1], 3.0));
}

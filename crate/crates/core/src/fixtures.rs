//! Shipped reference networks and small network builders.
//!
//! The JSON sources under the workspace `fixtures/` directory are embedded so
//! that tests and the reproduction suite work without a path.

use rand::Rng;

use crate::network::{BeliefNetwork, CptDecl, NetworkFile, VariableDecl};

pub const FIG2_1_JSON: &str = include_str!("../../../fixtures/fig2-1.json");
pub const FIG2_2_JSON: &str = include_str!("../../../fixtures/fig2-2.json");
pub const FIG2_4_JSON: &str = include_str!("../../../fixtures/fig2-4.json");
pub const FIG3_2_LIKE_JSON: &str = include_str!("../../../fixtures/fig3-2-like.json");
pub const FIG3_3_LIKE_JSON: &str = include_str!("../../../fixtures/fig3-3-like.json");

/// `(file name, embedded content)` for every shipped fixture.
pub const ALL: [(&str, &str); 5] = [
    ("fig2-1.json", FIG2_1_JSON),
    ("fig2-2.json", FIG2_2_JSON),
    ("fig2-4.json", FIG2_4_JSON),
    ("fig3-2-like.json", FIG3_2_LIKE_JSON),
    ("fig3-3-like.json", FIG3_3_LIKE_JSON),
];

/// Standard evidence for the four observed nodes of `fig3-2-like.json`.
pub const FIG3_2_EVIDENCE: &str = "J1=TRUE,J2=TRUE,J3=FALSE,J4=TRUE";

fn load(text: &str) -> BeliefNetwork {
    crate::network::parse_network(text).expect("shipped fixture is valid")
}

/// Five-node network with the OR node E.
pub fn fig2_1() -> BeliefNetwork {
    load(FIG2_1_JSON)
}

/// Two-node network with the 0.999 / 0.001 link.
pub fn fig2_2() -> BeliefNetwork {
    load(FIG2_2_JSON)
}

/// Well-behaved two-node network (weakest link 0.5).
pub fn fig2_4() -> BeliefNetwork {
    load(FIG2_4_JSON)
}

pub fn fig3_2_like() -> BeliefNetwork {
    load(FIG3_2_LIKE_JSON)
}

pub fn fig3_3_like() -> BeliefNetwork {
    load(FIG3_3_LIKE_JSON)
}

/// `(child, parents, rows)`
type CptSpec<'a> = (&'a str, Vec<&'a str>, Vec<Vec<f64>>);

fn binary_net(vars: &[&str], cpts: Vec<CptSpec>) -> BeliefNetwork {
    let file = NetworkFile {
        variables: vars.iter().map(|&v| VariableDecl::binary(v)).collect(),
        cpts: cpts
            .into_iter()
            .map(|(child, parents, rows)| CptDecl {
                child: child.to_string(),
                parents: parents.into_iter().map(String::from).collect(),
                rows,
            })
            .collect(),
    };
    BeliefNetwork::from_file(&file)
        .expect("builder produces a valid network")
        .0
}

/// Symmetric two-node family: P(a) = 0.5, P(b|a) = 1 - q, P(b|¬a) = q.
pub fn two_node(q: f64) -> BeliefNetwork {
    binary_net(
        &["A", "B"],
        vec![
            ("A", vec![], vec![vec![0.5, 0.5]]),
            ("B", vec!["A"], vec![vec![1.0 - q, q], vec![q, 1.0 - q]]),
        ],
    )
}

/// A with prior 0.5 and B a deterministic copy of A.
pub fn deterministic_pair() -> BeliefNetwork {
    two_node(0.0)
}

/// Single binary node with P(TRUE) = p.
pub fn single_node(p: f64) -> BeliefNetwork {
    binary_net(&["X"], vec![("X", vec![], vec![vec![1.0 - p, p]])])
}

/// A -> X, X -> B, X -> C: X has two children.
pub fn fork() -> BeliefNetwork {
    binary_net(
        &["A", "X", "B", "C"],
        vec![
            ("A", vec![], vec![vec![0.6, 0.4]]),
            ("X", vec!["A"], vec![vec![0.8, 0.2], vec![0.3, 0.7]]),
            ("B", vec!["X"], vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
            ("C", vec!["X"], vec![vec![0.7, 0.3], vec![0.4, 0.6]]),
        ],
    )
}

/// Options for [`random_network`].
#[derive(Debug, Clone)]
pub struct RandomNetworkOptions {
    pub nodes: usize,
    pub max_parents: usize,
    /// Probability that an arc between an ordered pair is proposed.
    pub arc_probability: f64,
    /// Probability that a CPT row is a point mass.
    pub deterministic_row_probability: f64,
    /// Non-deterministic entries lie in `[min_entry, 1 - min_entry]`.
    pub min_entry: f64,
}

impl Default for RandomNetworkOptions {
    fn default() -> Self {
        RandomNetworkOptions {
            nodes: 6,
            max_parents: 3,
            arc_probability: 0.4,
            deterministic_row_probability: 0.0,
            min_entry: 0.02,
        }
    }
}

/// Random binary DAG named `V0..Vn`, arcs only from lower to higher index.
pub fn random_network<R: Rng + ?Sized>(rng: &mut R, opts: &RandomNetworkOptions) -> BeliefNetwork {
    let names: Vec<String> = (0..opts.nodes).map(|i| format!("V{i}")).collect();
    let mut cpts = Vec::with_capacity(opts.nodes);
    for child in 0..opts.nodes {
        let mut parents: Vec<usize> = (0..child)
            .filter(|_| rng.random::<f64>() < opts.arc_probability)
            .collect();
        while parents.len() > opts.max_parents {
            let drop = rng.random_range(0..parents.len());
            parents.remove(drop);
        }
        let rows = (0..1usize << parents.len())
            .map(|_| {
                if rng.random::<f64>() < opts.deterministic_row_probability {
                    if rng.random::<bool>() {
                        vec![0.0, 1.0]
                    } else {
                        vec![1.0, 0.0]
                    }
                } else {
                    let p = opts.min_entry + (1.0 - 2.0 * opts.min_entry) * rng.random::<f64>();
                    vec![1.0 - p, p]
                }
            })
            .collect();
        cpts.push(CptDecl {
            child: names[child].clone(),
            parents: parents.iter().map(|&p| names[p].clone()).collect(),
            rows,
        });
    }
    let file = NetworkFile {
        variables: names.iter().map(VariableDecl::binary).collect(),
        cpts,
    };
    BeliefNetwork::from_file(&file)
        .expect("random network is valid")
        .0
}

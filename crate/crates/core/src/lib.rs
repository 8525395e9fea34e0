//! Stochastic simulation of discrete belief networks.
//!
//! The crate covers forward (logic) sampling and its rejection and weighted
//! variants, clamped Markov-blanket (Gibbs) simulation with an optional
//! blocked update for deterministic groups, exact enumeration as the reference
//! oracle, mixing diagnostics that quantify how strongly coupled nodes slow a
//! Gibbs chain down, and the graph modifications (pruning, arc reversal, node
//! reduction, evidence absorption) that make a network cheaper to simulate.

pub mod diagnostics;
pub mod exec;
pub mod fixtures;
pub mod network;
pub mod oracle;
pub mod repro;
pub mod samplers;
pub mod trace;
pub mod transforms;

mod factor;

pub use network::{
    joint_probability, parse_network, topological_order, validate, Assignment, BeliefNetwork,
    Evidence, NetworkError, NetworkFile, VarId,
};

//! Per-iteration sample records and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Assignment, BeliefNetwork, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Logic,
    Rejection,
    #[serde(rename = "lw")]
    LikelihoodWeighting,
    #[serde(rename = "uniform")]
    UniformProposal,
    Gibbs,
    BlockedGibbs,
    ClampedForward,
    /// Read back from a CSV file; the producing scheme is unknown.
    Imported,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Logic => "logic",
            Scheme::Rejection => "rejection",
            Scheme::LikelihoodWeighting => "lw",
            Scheme::UniformProposal => "uniform",
            Scheme::Gibbs => "gibbs",
            Scheme::BlockedGibbs => "blocked-gibbs",
            Scheme::ClampedForward => "clamped-forward",
            Scheme::Imported => "imported",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        [
            Scheme::Logic,
            Scheme::Rejection,
            Scheme::LikelihoodWeighting,
            Scheme::UniformProposal,
            Scheme::Gibbs,
            Scheme::BlockedGibbs,
            Scheme::ClampedForward,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    pub fn is_markov_chain(self) -> bool {
        matches!(self, Scheme::Gibbs | Scheme::BlockedGibbs | Scheme::Imported)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace header mismatch: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Every iteration of one run: the total state, its weight and whether it
/// was accepted. For Markov-chain schemes one record is one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub scheme: Scheme,
    pub evidence: Assignment,
    /// Visit order (chain schemes) or sampling order (forward schemes).
    pub scan_order: Vec<VarId>,
    pub initial_state: Option<Vec<u8>>,
    width: usize,
    states: Vec<u8>,
    weights: Vec<f64>,
    accepted: Vec<bool>,
}

impl SampleTrace {
    pub fn new(scheme: Scheme, net: &BeliefNetwork, evidence: Assignment, scan_order: Vec<VarId>) -> Self {
        SampleTrace {
            scheme,
            evidence,
            scan_order,
            initial_state: None,
            width: net.len(),
            states: Vec::new(),
            weights: Vec::new(),
            accepted: Vec::new(),
        }
    }

    pub fn with_capacity(mut self, n: usize) -> Self {
        self.states.reserve(n * self.width);
        self.weights.reserve(n);
        self.accepted.reserve(n);
        self
    }

    pub fn push(&mut self, state: &[u8], weight: f64, accepted: bool) {
        debug_assert_eq!(state.len(), self.width);
        debug_assert!(weight >= 0.0);
        self.states.extend_from_slice(state);
        self.weights.push(weight);
        self.accepted.push(accepted);
    }

    pub(crate) fn append(&mut self, other: SampleTrace) {
        self.states.extend(other.states);
        self.weights.extend(other.weights);
        self.accepted.extend(other.accepted);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i * self.width..(i + 1) * self.width]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> {
        self.states.chunks(self.width.max(1))
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_accepted(&self, i: usize) -> bool {
        self.accepted[i]
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|&&a| a).count()
    }

    /// Values of one variable over all records.
    pub fn series(&self, node: VarId) -> impl Iterator<Item = u8> + '_ {
        self.states().map(move |s| s[node.0])
    }

    /// 1.0 where `node == value`, else 0.0.
    pub fn indicator(&self, node: VarId, value: u8) -> Vec<f64> {
        self.series(node)
            .map(|x| if x == value { 1.0 } else { 0.0 })
            .collect()
    }

    /// Writes `sweep,<var1>,...,<varN>,weight,accepted` with value labels.
    pub fn write_csv<W: Write>(&self, net: &BeliefNetwork, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sweep".to_string()];
        header.extend(net.variables().iter().map(|v| v.name().to_string()));
        header.push("weight".into());
        header.push("accepted".into());
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.push((i + 1).to_string());
            for (v, &x) in self.state(i).iter().enumerate() {
                record.push(net.variables()[v].values()[x as usize].clone());
            }
            record.push(self.weights[i].to_string());
            record.push(self.accepted[i].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a trace written by [`SampleTrace::write_csv`] for the same network.
    pub fn read_csv<R: Read>(net: &BeliefNetwork, input: R) -> Result<SampleTrace, TraceError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let mut expected = vec!["sweep".to_string()];
        expected.extend(net.variables().iter().map(|v| v.name().to_string()));
        expected.push("weight".into());
        expected.push("accepted".into());
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(TraceError::Header(format!(
                "expected `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let order = net.topological_order().to_vec();
        let mut trace = SampleTrace::new(Scheme::Imported, net, Assignment::empty(net), order);
        let mut state = vec![0u8; net.len()];
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| TraceError::Row { row: row + 1, message };
            for (v, var) in net.variables().iter().enumerate() {
                let label = &rec[v + 1];
                state[v] = var
                    .value_index(label)
                    .ok_or_else(|| bad(format!("`{label}` is not a value of {}", var.name())))?;
            }
            let weight: f64 = rec[net.len() + 1]
                .parse()
                .map_err(|e| bad(format!("weight: {e}")))?;
            let accepted: bool = rec[net.len() + 2]
                .parse()
                .map_err(|e| bad(format!("accepted: {e}")))?;
            trace.push(&state, weight, accepted);
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn csv_round_trip() {
        let net = fixtures::fig2_1();
        let mut t = SampleTrace::new(Scheme::Gibbs, &net, Assignment::empty(&net), vec![]);
        t.push(&[1, 1, 0, 0, 1], 1.0, true);
        t.push(&[0, 0, 0, 1, 1], 0.25, false);
        let mut buf = Vec::new();
        t.write_csv(&net, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sweep,A,B,C,D,E,weight,accepted\n1,TRUE,TRUE,FALSE,FALSE,TRUE,1,true\n"));
        let back = SampleTrace::read_csv(&net, &buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.state(1), t.state(1));
        assert_eq!(back.weight(1), 0.25);
        assert!(!back.is_accepted(1));
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let net = fixtures::fig2_2();
        let err = SampleTrace::read_csv(&net, "sweep,A,weight,accepted\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Header(_)));
    }
}

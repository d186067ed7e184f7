//! Held-out routing quality: micro-averaged precision, recall and F1 over
//! predicted nodes and edges.

use serde::{Deserialize, Serialize};

use super::generate::{generate_sdag, GenerateConfig};
use super::params::RouterParams;
use super::train::TrainSample;
use crate::embedding::Embedder;
use crate::error::Result;
use crate::subject::SDag;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }

    /// 1.0 when there is nothing to find and nothing was predicted.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.true_pos + self.false_pos + self.false_neg;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.true_pos as f64 / denom as f64
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingMetrics {
    pub samples: usize,
    pub nodes: Counts,
    pub edges: Counts,
    /// Predictions identical to the target in nodes and edges.
    pub exact: usize,
}

impl RoutingMetrics {
    pub fn node_f1(&self) -> f64 {
        self.nodes.f1()
    }

    pub fn edge_f1(&self) -> f64 {
        self.edges.f1()
    }

    pub fn add(&mut self, predicted: &SDag, target: &SDag) {
        self.samples += 1;
        let (p, t) = (predicted.adjacency(), target.adjacency());
        let mut exact = true;
        for s in crate::subject::Subject::ALL {
            tally(&mut self.nodes, predicted.contains(s), target.contains(s), &mut exact);
        }
        for i in 0..p.len() {
            for j in 0..p.len() {
                tally(&mut self.edges, p[i][j], t[i][j], &mut exact);
            }
        }
        if exact {
            self.exact += 1;
        }
    }
}

fn tally(c: &mut Counts, predicted: bool, target: bool, exact: &mut bool) {
    match (predicted, target) {
        (true, true) => c.true_pos += 1,
        (true, false) => c.false_pos += 1,
        (false, true) => c.false_neg += 1,
        (false, false) => {}
    }
    *exact &= predicted == target;
}

/// Routes every sample and compares against its target graph.
pub fn routing_metrics(
    samples: &[TrainSample],
    params: &RouterParams,
    embedder: &dyn Embedder,
    cfg: &GenerateConfig,
) -> Result<RoutingMetrics> {
    let mut m = RoutingMetrics::default();
    for s in samples {
        m.add(&generate_sdag(&s.question, params, embedder, cfg)?, &s.dag);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{DagEdge, DagNode, Subject};

    fn g(nodes: &[Subject], edges: &[(Subject, Subject)]) -> SDag {
        SDag {
            nodes: nodes.iter().map(|s| DagNode { subject: *s, score: 0.5 }).collect(),
            edges: edges.iter().map(|(a, b)| DagEdge { src: *a, dst: *b, score: 0.5 }).collect(),
        }
    }

    #[test]
    fn counts_and_f1() {
        use Subject::*;
        let mut m = RoutingMetrics::default();
        m.add(&g(&[Math, Law], &[(Law, Math)]), &g(&[Math, Law], &[(Law, Math)]));
        assert_eq!(m.exact, 1);
        m.add(&g(&[Math, Physics], &[]), &g(&[Math, Law], &[(Law, Math)]));
        assert_eq!(m.nodes, Counts { true_pos: 3, false_pos: 1, false_neg: 1 });
        assert_eq!(m.edges, Counts { true_pos: 1, false_pos: 0, false_neg: 1 });
        assert!((m.node_f1() - 0.75).abs() < 1e-12);
        assert!((m.edge_f1() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(RoutingMetrics::default().edge_f1(), 1.0);
    }
}

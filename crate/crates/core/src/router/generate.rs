use serde::{Deserialize, Serialize};

use super::model::{forward, RouterOutput};
use super::params::RouterParams;
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::subject::{DagEdge, DagNode, SDag, Subject, MAX_DAG_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub node_threshold: f64,
    pub edge_threshold: f64,
    pub max_nodes: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            node_threshold: 0.5,
            edge_threshold: 0.5,
            max_nodes: MAX_DAG_NODES,
        }
    }
}

/// `a` ranks strictly below `b`: lower probability, or equal probability and
/// earlier canonical position. A strict total order, so edges that respect it
/// can never form a cycle.
fn ranks_below(out: &RouterOutput, a: Subject, b: Subject) -> bool {
    let (pa, pb) = (out.node_probs[a.index()], out.node_probs[b.index()]);
    pa < pb || (pa == pb && a < b)
}

/// Turns router scores into a valid subject DAG.
///
/// `Other` is never a candidate. Nodes above the threshold are kept (at most
/// `max_nodes`, highest first); if none pass, the single best node is kept.
/// Edges between kept nodes above the edge threshold survive only when they
/// point from the lower-ranked to the higher-ranked node.
pub fn sdag_from_output(out: &RouterOutput, cfg: &GenerateConfig) -> SDag {
    let mut candidates: Vec<Subject> = Subject::ALL
        .iter()
        .copied()
        .filter(|s| *s != Subject::Other)
        .collect();
    // highest probability first, canonical order among ties
    candidates.sort_by(|a, b| {
        out.node_probs[b.index()]
            .total_cmp(&out.node_probs[a.index()])
            .then(a.cmp(b))
    });
    let mut kept: Vec<Subject> = candidates
        .iter()
        .copied()
        .filter(|s| out.node_probs[s.index()] > cfg.node_threshold)
        .take(cfg.max_nodes.max(1))
        .collect();
    if kept.is_empty() {
        kept.push(candidates[0]);
    }
    kept.sort();

    let nodes = kept
        .iter()
        .map(|s| DagNode {
            subject: *s,
            score: out.node_probs[s.index()],
        })
        .collect();
    let mut edges = Vec::new();
    for &src in &kept {
        for &dst in &kept {
            if src == dst {
                continue;
            }
            let p = out.edge_probs[src.index()][dst.index()];
            if p > cfg.edge_threshold && ranks_below(out, src, dst) {
                edges.push(DagEdge { src, dst, score: p });
            }
        }
    }
    SDag { nodes, edges }
}

/// Scores every subject for `question` with the trained router.
pub fn route(question: &str, params: &RouterParams, embedder: &dyn Embedder) -> Result<RouterOutput> {
    let q = embedder.embed(question)?;
    if q.dim() != params.dims.question_dim {
        return Err(Error::DimensionMismatch(format!(
            "embedder returned {} values, router expects {}",
            q.dim(),
            params.dims.question_dim
        )));
    }
    Ok(forward(params, q.as_slice())?.output)
}

/// Predicts the subject DAG of a question.
pub fn generate_sdag(
    question: &str,
    params: &RouterParams,
    embedder: &dyn Embedder,
    cfg: &GenerateConfig,
) -> Result<SDag> {
    Ok(sdag_from_output(&route(question, params, embedder)?, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{validate_dag, NUM_SUBJECTS};

    fn output(node: &[(Subject, f64)], edges: &[(Subject, Subject, f64)]) -> RouterOutput {
        let mut np = vec![0.1; NUM_SUBJECTS];
        for (s, p) in node {
            np[s.index()] = *p;
        }
        let mut ep = vec![vec![0.1; NUM_SUBJECTS]; NUM_SUBJECTS];
        for (a, b, p) in edges {
            ep[a.index()][b.index()] = *p;
        }
        RouterOutput::from_probs(np, ep)
    }

    #[test]
    fn repair_keeps_upward_edge() {
        let out = output(
            &[(Subject::Math, 0.9), (Subject::Physics, 0.7)],
            &[
                (Subject::Physics, Subject::Math, 0.8),
                (Subject::Math, Subject::Physics, 0.6),
            ],
        );
        let g = sdag_from_output(&out, &GenerateConfig::default());
        assert_eq!(g.subjects(), vec![Subject::Math, Subject::Physics]);
        assert_eq!(g.edges.len(), 1);
        assert_eq!((g.edges[0].src, g.edges[0].dst), (Subject::Physics, Subject::Math));
        assert_eq!(g.edges[0].score, 0.8);
        assert!(validate_dag(&g).is_valid());
    }

    #[test]
    fn fallback_to_best_node() {
        let out = output(&[(Subject::Biology, 0.4)], &[]);
        let g = sdag_from_output(&out, &GenerateConfig::default());
        assert_eq!(g.subjects(), vec![Subject::Biology]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn caps_at_five_nodes() {
        let seven: Vec<(Subject, f64)> = Subject::ALL[..7]
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, 0.6 + 0.05 * i as f64))
            .collect();
        let g = sdag_from_output(&output(&seven, &[]), &GenerateConfig::default());
        assert_eq!(g.nodes.len(), 5);
        assert!(!g.contains(Subject::Math));
        assert!(!g.contains(Subject::Physics));
    }

    #[test]
    fn ties_use_canonical_order() {
        let six: Vec<(Subject, f64)> = Subject::ALL[..6].iter().map(|s| (*s, 0.8)).collect();
        let edges = vec![
            (Subject::Math, Subject::Physics, 0.9),
            (Subject::Physics, Subject::Math, 0.9),
        ];
        let g = sdag_from_output(&output(&six, &edges), &GenerateConfig::default());
        assert_eq!(g.subjects(), Subject::ALL[..5].to_vec());
        assert_eq!(g.edges.len(), 1);
        assert_eq!((g.edges[0].src, g.edges[0].dst), (Subject::Math, Subject::Physics));
    }

    #[test]
    fn other_is_never_a_node() {
        let out = output(&[(Subject::Other, 0.99)], &[]);
        let g = sdag_from_output(&out, &GenerateConfig::default());
        assert!(!g.contains(Subject::Other));
        assert_eq!(g.nodes.len(), 1);
    }
}

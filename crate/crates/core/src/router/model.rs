//! Forward pass, masked multi-task BCE loss and the hand-derived backward
//! pass of the subject graph network.

use serde::{Deserialize, Serialize};

use super::params::{Activation, RouterParams};
use crate::error::{Error, Result};
use crate::subject::{SDag, NUM_SUBJECTS};

const K: usize = NUM_SUBJECTS;

/// Probability clamp used inside the log of the BCE.
pub const BCE_EPS: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-subject relevance and per-pair dependency scores. Diagonal entries of
/// the edge matrices are zero and never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterOutput {
    pub node_logits: Vec<f64>,
    pub node_probs: Vec<f64>,
    pub edge_logits: Vec<Vec<f64>>,
    pub edge_probs: Vec<Vec<f64>>,
}

impl RouterOutput {
    /// Builds an output from probabilities only (logits derived by inversion).
    pub fn from_probs(node_probs: Vec<f64>, edge_probs: Vec<Vec<f64>>) -> Self {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let node_logits = node_probs.iter().map(|p| logit(*p)).collect();
        let edge_logits = edge_probs
            .iter()
            .map(|row| row.iter().map(|p| logit(*p)).collect())
            .collect();
        Self {
            node_logits,
            node_probs,
            edge_logits,
            edge_probs,
        }
    }
}

/// Binary supervision targets derived from a ground-truth graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub nodes: [f64; K],
    pub edges: [[f64; K]; K],
}

impl Labels {
    pub fn from_dag(g: &SDag) -> Self {
        let mut nodes = [0.0; K];
        for n in &g.nodes {
            nodes[n.subject.index()] = 1.0;
        }
        let mut edges = [[0.0; K]; K];
        for e in &g.edges {
            edges[e.src.index()][e.dst.index()] = 1.0;
        }
        Self { nodes, edges }
    }

    /// Edge terms between two irrelevant subjects carry no loss.
    pub fn edge_masked(&self, i: usize, j: usize) -> bool {
        self.nodes[i] == 0.0 && self.nodes[j] == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub node: f64,
    pub edge: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { node: 1.0, edge: 1.0 }
    }
}

/// `ln(1 + e^x)` without overflow or cancellation.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Clamped binary cross-entropy of logit `z` and its derivative with respect
/// to `z`. Evaluated from the logit, so saturated predictions keep full
/// precision: `-ln max(p, ε)` equals `min(softplus(-z), -ln ε)`.
fn bce(z: f64, y: f64) -> (f64, f64) {
    let cap = -BCE_EPS.ln();
    let p = sigmoid(z);
    let (pos, neg) = (softplus(-z), softplus(z));
    let mut loss = 0.0;
    let mut grad = 0.0;
    if y != 0.0 {
        loss += y * pos.min(cap);
        if pos < cap {
            grad += y * (p - 1.0);
        }
    }
    if y != 1.0 {
        loss += (1.0 - y) * neg.min(cap);
        if neg < cap {
            grad += (1.0 - y) * p;
        }
    }
    (loss, grad)
}

/// Neumaier summation; keeps the total loss accurate to the last bit so
/// finite differences of it stay meaningful.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Loss value plus its gradient with respect to every logit.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub node_logits: Vec<f64>,
    pub edge_logits: Vec<Vec<f64>>,
}

/// Masked multi-task BCE over node and edge predictions.
pub fn loss_and_logit_grad(out: &RouterOutput, labels: &Labels, weights: LossWeights) -> Result<LossGrad> {
    let mut loss = CompensatedSum::default();
    let mut node_logits = vec![0.0; K];
    for i in 0..K {
        let (l, g) = bce(out.node_logits[i], labels.nodes[i]);
        loss.add(weights.node * l);
        node_logits[i] = weights.node * g;
    }
    let mut edge_logits = vec![vec![0.0; K]; K];
    for i in 0..K {
        for j in 0..K {
            if i == j || labels.edge_masked(i, j) {
                continue;
            }
            let (l, g) = bce(out.edge_logits[i][j], labels.edges[i][j]);
            loss.add(weights.edge * l);
            edge_logits[i][j] = weights.edge * g;
        }
    }
    let loss = loss.value();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, sample: 0 });
    }
    Ok(LossGrad {
        loss,
        node_logits,
        edge_logits,
    })
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    question: Vec<f64>,
    init_pre: Vec<Vec<f64>>,
    /// `states[0]` is the initial node state, `states[l + 1]` the output of layer `l`.
    states: Vec<Vec<Vec<f64>>>,
    means: Vec<Vec<Vec<f64>>>,
    pre: Vec<Vec<Vec<f64>>>,
    node_hidden_pre: Vec<Vec<f64>>,
    edge_src: Vec<Vec<f64>>,
    edge_dst: Vec<Vec<f64>>,
    edge_shared: Vec<f64>,
    pub output: RouterOutput,
}

impl ForwardCache {
    pub fn final_states(&self) -> &[Vec<f64>] {
        self.states.last().expect("at least the initial state")
    }

    /// Which side of every non-smooth point the pass landed on: ReLU
    /// pre-activations and both BCE clamps of every logit. Two passes with
    /// equal patterns lie on the same smooth piece of the loss.
    pub(crate) fn activation_pattern(&self, act: Activation) -> Vec<bool> {
        let mut out = Vec::new();
        out.extend(self.init_pre.iter().flatten().map(|v| *v > 0.0));
        if act == Activation::Relu {
            out.extend(self.pre.iter().flatten().flatten().map(|v| *v > 0.0));
        }
        out.extend(self.node_hidden_pre.iter().flatten().map(|v| *v > 0.0));
        for i in 0..K {
            for j in 0..K {
                if i == j {
                    continue;
                }
                for k in 0..self.edge_shared.len() {
                    out.push(self.edge_src[i][k] + self.edge_dst[j][k] + self.edge_shared[k] > 0.0);
                }
            }
        }
        let cap = -BCE_EPS.ln();
        let logits = self
            .output
            .node_logits
            .iter()
            .chain(self.output.edge_logits.iter().flatten());
        for z in logits {
            out.push(softplus(-z) < cap);
            out.push(softplus(*z) < cap);
        }
        out
    }
}

fn check_question(params: &RouterParams, question: &[f64]) -> Result<()> {
    if question.len() != params.dims.question_dim {
        return Err(Error::DimensionMismatch(format!(
            "question embedding has {} values, router expects {}",
            question.len(),
            params.dims.question_dim
        )));
    }
    Ok(())
}

/// Initial node states: `relu(W · [h_subject; h_question] + b)` per subject.
pub fn init_node_features(params: &RouterParams, question: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_question(params, question)?;
    Ok(init_pre(params, question)
        .into_iter()
        .map(|row| row.into_iter().map(|v| v.max(0.0)).collect())
        .collect())
}

fn init_pre(params: &RouterParams, question: &[f64]) -> Vec<Vec<f64>> {
    let ds = params.dims.subject_dim;
    let w = &params.init.weight;
    // the question block is shared by every subject
    let mut shared = params.init.bias.clone();
    w.add_matvec_block(ds, question, &mut shared);
    (0..K)
        .map(|i| {
            let mut u = shared.clone();
            let emb = &params.subject_embeddings.data[i * ds..(i + 1) * ds];
            w.add_matvec_block(0, emb, &mut u);
            u
        })
        .collect()
}

fn neighbour_means(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = x[0].len();
    let mut total = vec![0.0; h];
    for row in x {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    let n = (x.len() - 1) as f64;
    x.iter()
        .map(|row| total.iter().zip(row).map(|(t, v)| (t - v) / n).collect())
        .collect()
}

/// One message-passing layer over the fully connected subject graph.
/// Returns (pre-activation, mean of the other nodes, output).
fn layer_forward(
    params: &RouterParams,
    l: usize,
    x: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let layer = &params.layers[l];
    let act = params.dims.activation;
    let means = neighbour_means(x);
    let mut pre = Vec::with_capacity(K);
    let mut out = Vec::with_capacity(K);
    for i in 0..K {
        let mut u = layer.bias.clone();
        layer.w_self.add_matvec_block(0, &x[i], &mut u);
        // in- and out-neighbourhoods coincide on the complete graph
        layer.w_in.add_matvec_block(0, &means[i], &mut u);
        layer.w_out.add_matvec_block(0, &means[i], &mut u);
        out.push(u.iter().map(|v| act.apply(*v)).collect());
        pre.push(u);
    }
    (pre, means, out)
}

/// Applies every message-passing layer to `x`.
pub fn message_pass(params: &RouterParams, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if x.len() != K || x.iter().any(|r| r.len() != params.dims.hidden) {
        return Err(Error::DimensionMismatch(format!(
            "node states must be {K} x {}",
            params.dims.hidden
        )));
    }
    let mut cur = x.to_vec();
    for l in 0..params.layers.len() {
        cur = layer_forward(params, l, &cur).2;
    }
    Ok(cur)
}

struct HeadPass {
    node_hidden_pre: Vec<Vec<f64>>,
    edge_src: Vec<Vec<f64>>,
    edge_dst: Vec<Vec<f64>>,
    edge_shared: Vec<f64>,
    output: RouterOutput,
}

fn heads_forward(params: &RouterParams, x: &[Vec<f64>], question: &[f64]) -> HeadPass {
    let h = params.dims.hidden;
    let nh = &params.node_head;
    let mut node_hidden_pre = Vec::with_capacity(K);
    let mut node_logits = Vec::with_capacity(K);
    for xi in x {
        let z = {
            let mut z = nh.hidden.bias.clone();
            nh.hidden.weight.add_matvec_block(0, xi, &mut z);
            z
        };
        let r: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        node_logits.push(nh.out.bias[0] + nh.out.weight.matvec(&r)[0]);
        node_hidden_pre.push(z);
    }

    // The first edge layer is linear in [x_i; x_j; q], so split it per block.
    let eh = &params.edge_head;
    let g = params.dims.head_hidden;
    let edge_src: Vec<Vec<f64>> = x
        .iter()
        .map(|xi| {
            let mut v = vec![0.0; g];
            eh.hidden.weight.add_matvec_block(0, xi, &mut v);
            v
        })
        .collect();
    let edge_dst: Vec<Vec<f64>> = x
        .iter()
        .map(|xj| {
            let mut v = vec![0.0; g];
            eh.hidden.weight.add_matvec_block(h, xj, &mut v);
            v
        })
        .collect();
    let mut edge_shared = eh.hidden.bias.clone();
    eh.hidden.weight.add_matvec_block(2 * h, question, &mut edge_shared);

    let w2 = &eh.out.weight.data;
    let b2 = eh.out.bias[0];
    let mut edge_logits = vec![vec![0.0; K]; K];
    let mut edge_probs = vec![vec![0.0; K]; K];
    for i in 0..K {
        for j in 0..K {
            if i == j {
                continue;
            }
            let mut logit = b2;
            for k in 0..g {
                let z = edge_src[i][k] + edge_dst[j][k] + edge_shared[k];
                if z > 0.0 {
                    logit += w2[k] * z;
                }
            }
            edge_logits[i][j] = logit;
            edge_probs[i][j] = sigmoid(logit);
        }
    }
    let node_probs = node_logits.iter().map(|v| sigmoid(*v)).collect();
    HeadPass {
        node_hidden_pre,
        edge_src,
        edge_dst,
        edge_shared,
        output: RouterOutput {
            node_logits,
            node_probs,
            edge_logits,
            edge_probs,
        },
    }
}

/// Node and edge predictions from final node states.
pub fn predict(params: &RouterParams, x: &[Vec<f64>], question: &[f64]) -> Result<RouterOutput> {
    check_question(params, question)?;
    if x.len() != K || x.iter().any(|r| r.len() != params.dims.hidden) {
        return Err(Error::DimensionMismatch(format!(
            "node states must be {K} x {}",
            params.dims.hidden
        )));
    }
    Ok(heads_forward(params, x, question).output)
}

/// Full forward pass, keeping what the backward pass needs.
pub fn forward(params: &RouterParams, question: &[f64]) -> Result<ForwardCache> {
    check_question(params, question)?;
    let init_pre = init_pre(params, question);
    let x0: Vec<Vec<f64>> = init_pre
        .iter()
        .map(|row| row.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let mut states = vec![x0];
    let mut means = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    for l in 0..params.layers.len() {
        let (u, m, x) = layer_forward(params, l, states.last().expect("non-empty"));
        pre.push(u);
        means.push(m);
        states.push(x);
    }
    let heads = heads_forward(params, states.last().expect("non-empty"), question);
    Ok(ForwardCache {
        question: question.to_vec(),
        init_pre,
        states,
        means,
        pre,
        node_hidden_pre: heads.node_hidden_pre,
        edge_src: heads.edge_src,
        edge_dst: heads.edge_dst,
        edge_shared: heads.edge_shared,
        output: heads.output,
    })
}

/// Accumulates `∂L/∂params` into `grads` given `∂L/∂logits`.
pub fn backward(params: &RouterParams, cache: &ForwardCache, dlogits: &LossGrad, grads: &mut RouterParams) {
    let h = params.dims.hidden;
    let g = params.dims.head_hidden;
    let ds = params.dims.subject_dim;
    let x_final = cache.final_states();
    let mut dx = vec![vec![0.0; h]; K];

    // node head
    let nh = &params.node_head;
    for i in 0..K {
        let dn = dlogits.node_logits[i];
        if dn == 0.0 {
            continue;
        }
        let z = &cache.node_hidden_pre[i];
        let r: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        grads.node_head.out.bias[0] += dn;
        grads.node_head.out.weight.add_outer_block(0, &[dn], &r);
        let dz: Vec<f64> = (0..g)
            .map(|k| if z[k] > 0.0 { dn * nh.out.weight.data[k] } else { 0.0 })
            .collect();
        for (b, d) in grads.node_head.hidden.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        grads.node_head.hidden.weight.add_outer_block(0, &dz, &x_final[i]);
        nh.hidden.weight.add_matvec_t_block(0, &dz, &mut dx[i]);
    }

    // edge head
    let eh = &params.edge_head;
    let w2 = &eh.out.weight.data;
    let mut d_src = vec![vec![0.0; g]; K];
    let mut d_dst = vec![vec![0.0; g]; K];
    let mut d_shared = vec![0.0; g];
    for i in 0..K {
        for j in 0..K {
            let de = dlogits.edge_logits[i][j];
            if i == j || de == 0.0 {
                continue;
            }
            grads.edge_head.out.bias[0] += de;
            for k in 0..g {
                let z = cache.edge_src[i][k] + cache.edge_dst[j][k] + cache.edge_shared[k];
                if z > 0.0 {
                    grads.edge_head.out.weight.data[k] += de * z;
                    let dz = de * w2[k];
                    d_src[i][k] += dz;
                    d_dst[j][k] += dz;
                    d_shared[k] += dz;
                }
            }
        }
    }
    for i in 0..K {
        grads.edge_head.hidden.weight.add_outer_block(0, &d_src[i], &x_final[i]);
        eh.hidden.weight.add_matvec_t_block(0, &d_src[i], &mut dx[i]);
        grads.edge_head.hidden.weight.add_outer_block(h, &d_dst[i], &x_final[i]);
        eh.hidden.weight.add_matvec_t_block(h, &d_dst[i], &mut dx[i]);
    }
    grads
        .edge_head
        .hidden
        .weight
        .add_outer_block(2 * h, &d_shared, &cache.question);
    for (b, d) in grads.edge_head.hidden.bias.iter_mut().zip(&d_shared) {
        *b += d;
    }

    // message-passing layers, last to first
    let act: Activation = params.dims.activation;
    let n = (K - 1) as f64;
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let x_in = &cache.states[l];
        let mut dx_in = vec![vec![0.0; h]; K];
        let mut dm = vec![vec![0.0; h]; K];
        for i in 0..K {
            let du: Vec<f64> = (0..h)
                .map(|k| dx[i][k] * act.derivative(cache.pre[l][i][k]))
                .collect();
            let gl = &mut grads.layers[l];
            for (b, d) in gl.bias.iter_mut().zip(&du) {
                *b += d;
            }
            gl.w_self.add_outer_block(0, &du, &x_in[i]);
            gl.w_in.add_outer_block(0, &du, &cache.means[l][i]);
            gl.w_out.add_outer_block(0, &du, &cache.means[l][i]);
            layer.w_self.add_matvec_t_block(0, &du, &mut dx_in[i]);
            layer.w_in.add_matvec_t_block(0, &du, &mut dm[i]);
            layer.w_out.add_matvec_t_block(0, &du, &mut dm[i]);
        }
        // m_i = (Σ_j x_j − x_i) / (K − 1)
        let mut dm_total = vec![0.0; h];
        for row in &dm {
            for (t, v) in dm_total.iter_mut().zip(row) {
                *t += v;
            }
        }
        for j in 0..K {
            for k in 0..h {
                dx_in[j][k] += (dm_total[k] - dm[j][k]) / n;
            }
        }
        dx = dx_in;
    }

    // initial features
    let w = &params.init.weight;
    for i in 0..K {
        let du: Vec<f64> = (0..h)
            .map(|k| if cache.init_pre[i][k] > 0.0 { dx[i][k] } else { 0.0 })
            .collect();
        for (b, d) in grads.init.bias.iter_mut().zip(&du) {
            *b += d;
        }
        let emb = &params.subject_embeddings.data[i * ds..(i + 1) * ds];
        grads.init.weight.add_outer_block(0, &du, emb);
        grads.init.weight.add_outer_block(ds, &du, &cache.question);
        let demb = &mut grads.subject_embeddings.data[i * ds..(i + 1) * ds];
        w.add_matvec_t_block(0, &du, demb);
    }
}

/// Loss of one sample and its gradient with respect to every parameter.
pub fn compute_loss(
    params: &RouterParams,
    question: &[f64],
    labels: &Labels,
    weights: LossWeights,
) -> Result<(f64, RouterParams)> {
    let cache = forward(params, question)?;
    let lg = loss_and_logit_grad(&cache.output, labels, weights)?;
    let mut grads = params.zeros_like();
    backward(params, &cache, &lg, &mut grads);
    Ok((lg.loss, grads))
}

/// Loss only; used by finite-difference checks.
pub fn loss_value(params: &RouterParams, question: &[f64], labels: &Labels, weights: LossWeights) -> Result<f64> {
    let cache = forward(params, question)?;
    Ok(loss_and_logit_grad(&cache.output, labels, weights)?.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::params::{Matrix, RouterDims};
    use crate::subject::{DagEdge, DagNode, Subject};

    fn toy_dims() -> RouterDims {
        RouterDims {
            subject_dim: 1,
            question_dim: 1,
            hidden: 1,
            layers: 1,
            head_hidden: 1,
            activation: Activation::Identity,
        }
    }

    #[test]
    fn zero_init_gives_zero_features() {
        let p = RouterParams::zeros(RouterDims {
            subject_dim: 3,
            question_dim: 4,
            hidden: 5,
            layers: 2,
            head_hidden: 2,
            activation: Activation::Relu,
        });
        let x = init_node_features(&p, &[0.3, -0.2, 0.1, 0.9]).unwrap();
        assert!(x.iter().flatten().all(|v| *v == 0.0));
        let xl = message_pass(&p, &x).unwrap();
        assert!(xl.iter().flatten().all(|v| *v == 0.0));
        let out = predict(&p, &xl, &[0.0; 4]).unwrap();
        assert!(out.node_probs.iter().all(|v| *v == 0.5));
        for i in 0..K {
            for j in 0..K {
                if i != j {
                    assert_eq!(out.edge_probs[i][j], 0.5);
                }
            }
        }
    }

    #[test]
    fn toy_init_arithmetic() {
        let mut p = RouterParams::zeros(toy_dims());
        p.init.weight.data = vec![1.0, 1.0];
        p.subject_embeddings.data[0] = 0.2;
        p.subject_embeddings.data[1] = -1.0;
        let x = init_node_features(&p, &[0.3]).unwrap();
        assert!((x[0][0] - 0.5).abs() < 1e-15);
        let x = init_node_features(&p, &[0.0]).unwrap();
        assert_eq!(x[1][0], 0.0);
        assert!(matches!(
            init_node_features(&p, &[0.0, 1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn identity_and_mean_layers() {
        let dims = RouterDims {
            hidden: 3,
            ..toy_dims()
        };
        let mut p = RouterParams::zeros(dims);
        p.layers[0].w_self = Matrix::identity(3);
        let x: Vec<Vec<f64>> = (0..K).map(|i| vec![i as f64, -(i as f64), 0.5]).collect();
        assert_eq!(message_pass(&p, &x).unwrap(), x);

        let mut p = RouterParams::zeros(dims);
        p.layers[0].w_in = Matrix::identity(3);
        let v = vec![0.25, -1.5, 2.0];
        let same: Vec<Vec<f64>> = (0..K).map(|_| v.clone()).collect();
        let out = message_pass(&p, &same).unwrap();
        for row in out {
            for (a, b) in row.iter().zip(&v) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn node_head_saturates() {
        let mut p = RouterParams::zeros(toy_dims());
        p.node_head.hidden.weight.data = vec![1.0];
        p.node_head.out.weight.data = vec![1.0];
        let mut x = vec![vec![0.0]; K];
        x[3][0] = 20.0;
        let out = predict(&p, &x, &[0.0]).unwrap();
        assert!((out.node_probs[3] - 1.0).abs() < 1e-8);
    }

    /// Saturated logits that reproduce the labels exactly.
    fn probs_matching(labels: &Labels) -> RouterOutput {
        let logit = |y: f64| if y > 0.5 { 800.0 } else { -800.0 };
        let node_logits: Vec<f64> = labels.nodes.iter().map(|y| logit(*y)).collect();
        let edge_logits: Vec<Vec<f64>> = labels.edges.iter().map(|r| r.iter().map(|y| logit(*y)).collect()).collect();
        RouterOutput {
            node_probs: node_logits.iter().map(|z| sigmoid(*z)).collect(),
            edge_probs: edge_logits.iter().map(|r| r.iter().map(|z| sigmoid(*z)).collect()).collect(),
            node_logits,
            edge_logits,
        }
    }

    fn set_node(out: &mut RouterOutput, i: usize, z: f64) {
        out.node_logits[i] = z;
        out.node_probs[i] = sigmoid(z);
    }

    fn set_edge(out: &mut RouterOutput, i: usize, j: usize, z: f64) {
        out.edge_logits[i][j] = z;
        out.edge_probs[i][j] = sigmoid(z);
    }

    fn sample_dag() -> SDag {
        SDag {
            nodes: vec![
                DagNode { subject: Subject::Math, score: 0.6 },
                DagNode { subject: Subject::Physics, score: 0.4 },
            ],
            edges: vec![DagEdge { src: Subject::Physics, dst: Subject::Math, score: 1.0 }],
        }
    }

    #[test]
    fn exact_predictions_have_zero_loss() {
        let labels = Labels::from_dag(&sample_dag());
        let lg = loss_and_logit_grad(&probs_matching(&labels), &labels, LossWeights::default()).unwrap();
        assert_eq!(lg.loss, 0.0);
    }

    #[test]
    fn half_probability_costs_ln2() {
        let labels = Labels::from_dag(&sample_dag());
        let mut out = probs_matching(&labels);
        set_node(&mut out, Subject::Math.index(), 0.0);
        let lg = loss_and_logit_grad(&out, &labels, LossWeights { node: 1.0, edge: 0.0 }).unwrap();
        assert!((lg.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((lg.node_logits[Subject::Math.index()] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn masked_edge_contributes_nothing() {
        let labels = Labels::from_dag(&sample_dag());
        let (i, j) = (Subject::Law.index(), Subject::History.index());
        assert!(labels.edge_masked(i, j));
        let mut out = probs_matching(&labels);
        let base = loss_and_logit_grad(&out, &labels, LossWeights::default()).unwrap();
        set_edge(&mut out, i, j, 2.2);
        let perturbed = loss_and_logit_grad(&out, &labels, LossWeights::default()).unwrap();
        assert_eq!(base, perturbed);
        // an edge touching a relevant node is not masked
        set_edge(&mut out, Subject::Math.index(), j, 2.2);
        let touched = loss_and_logit_grad(&out, &labels, LossWeights::default()).unwrap();
        assert!(touched.loss > base.loss);
    }

    #[test]
    fn clamp_keeps_loss_finite() {
        let labels = Labels::from_dag(&sample_dag());
        let mut out = probs_matching(&labels);
        set_node(&mut out, Subject::Math.index(), -800.0);
        let lg = loss_and_logit_grad(&out, &labels, LossWeights::default()).unwrap();
        assert!((lg.loss - (-(BCE_EPS.ln()))).abs() < 1e-9);
    }
}

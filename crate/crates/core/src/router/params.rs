use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbedderConfig;
use crate::error::{Error, Result};
use crate::subject::NUM_SUBJECTS;

/// Standard deviation of the seeded normal initialization.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    pub(crate) fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Sizes of every router tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterDims {
    /// Width of the learnable per-subject embeddings.
    pub subject_dim: usize,
    /// Width of the question embedding.
    pub question_dim: usize,
    /// Node state width.
    pub hidden: usize,
    /// Number of message-passing layers.
    pub layers: usize,
    /// Hidden width of the node and edge heads.
    pub head_hidden: usize,
    /// Activation used inside message passing.
    #[serde(default)]
    pub activation: Activation,
}

impl Default for RouterDims {
    fn default() -> Self {
        Self {
            subject_dim: 64,
            question_dim: crate::embedding::DEFAULT_HASHED_DIM,
            hidden: 128,
            layers: 2,
            head_hidden: 64,
            activation: Activation::Relu,
        }
    }
}

impl RouterDims {
    pub fn validate(&self) -> Result<()> {
        if self.subject_dim == 0 || self.question_dim == 0 || self.hidden == 0 || self.head_hidden == 0 {
            return Err(Error::DimensionMismatch(format!("zero-sized dimension in {self:?}")));
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += W[:, offset..offset + x.len()] · x`
    pub(crate) fn add_matvec_block(&self, offset: usize, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.row(r)[offset..offset + x.len()];
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub(crate) fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.add_matvec_block(0, x, &mut out);
        out
    }

    /// `out += W[:, offset..offset + out.len()]ᵀ · g`
    pub(crate) fn add_matvec_t_block(&self, offset: usize, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        for (r, gr) in g.iter().enumerate() {
            if *gr == 0.0 {
                continue;
            }
            let row = &self.row(r)[offset..offset + out.len()];
            for (o, w) in out.iter_mut().zip(row) {
                *o += gr * w;
            }
        }
    }

    /// `W[:, offset..offset + x.len()] += g · xᵀ`
    pub(crate) fn add_outer_block(&mut self, offset: usize, g: &[f64], x: &[f64]) {
        let cols = self.cols;
        for (r, gr) in g.iter().enumerate() {
            if *gr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * cols + offset..r * cols + offset + x.len()];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += gr * xv;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageLayer {
    pub w_self: Matrix,
    pub w_in: Matrix,
    pub w_out: Matrix,
    pub bias: Vec<f64>,
}

impl MessageLayer {
    pub fn zeros(h: usize) -> Self {
        Self {
            w_self: Matrix::zeros(h, h),
            w_in: Matrix::zeros(h, h),
            w_out: Matrix::zeros(h, h),
            bias: vec![0.0; h],
        }
    }
}

/// Two-layer perceptron ending in a single logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden: Linear,
    pub out: Linear,
}

impl Head {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        Self {
            hidden: Linear::zeros(hidden, in_dim),
            out: Linear::zeros(1, hidden),
        }
    }
}

/// Every learnable tensor of the router, plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterParams {
    pub dims: RouterDims,
    pub seed: u64,
    pub embedder: EmbedderConfig,
    /// One row per subject, canonical order.
    pub subject_embeddings: Matrix,
    /// Maps `[subject embedding; question embedding]` to the initial node state.
    pub init: Linear,
    pub layers: Vec<MessageLayer>,
    pub node_head: Head,
    /// Input is `[x_src; x_dst; question embedding]`.
    pub edge_head: Head,
}

impl RouterParams {
    pub fn zeros(dims: RouterDims) -> Self {
        let RouterDims {
            subject_dim,
            question_dim,
            hidden,
            layers,
            head_hidden,
            ..
        } = dims;
        Self {
            dims,
            seed: 0,
            embedder: EmbedderConfig::Hashed { dim: question_dim },
            subject_embeddings: Matrix::zeros(NUM_SUBJECTS, subject_dim),
            init: Linear::zeros(hidden, subject_dim + question_dim),
            layers: (0..layers).map(|_| MessageLayer::zeros(hidden)).collect(),
            node_head: Head::zeros(hidden, head_hidden),
            edge_head: Head::zeros(2 * hidden + question_dim, head_hidden),
        }
    }

    /// Seeded normal initialization of all weights and subject embeddings;
    /// biases start at zero.
    pub fn init(dims: RouterDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut params = Self::zeros(dims);
        params.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_SCALE).expect("positive scale");
        for (name, tensor) in params.tensors_mut() {
            if name.ends_with("bias") {
                continue;
            }
            for v in tensor.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(params)
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.dims);
        z.seed = self.seed;
        z.embedder = self.embedder.clone();
        z
    }

    /// Named tensors in a fixed order. Matrices are row-major.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("subject_embeddings".into(), &self.subject_embeddings.data),
            ("init.weight".into(), &self.init.weight.data),
            ("init.bias".into(), &self.init.bias),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layers.{l}.w_self"), &layer.w_self.data));
            out.push((format!("layers.{l}.w_in"), &layer.w_in.data));
            out.push((format!("layers.{l}.w_out"), &layer.w_out.data));
            out.push((format!("layers.{l}.bias"), &layer.bias));
        }
        for (prefix, head) in [("node_head", &self.node_head), ("edge_head", &self.edge_head)] {
            out.push((format!("{prefix}.hidden.weight"), &head.hidden.weight.data));
            out.push((format!("{prefix}.hidden.bias"), &head.hidden.bias));
            out.push((format!("{prefix}.out.weight"), &head.out.weight.data));
            out.push((format!("{prefix}.out.bias"), &head.out.bias));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out: Vec<(String, &mut Vec<f64>)> = vec![
            ("subject_embeddings".into(), &mut self.subject_embeddings.data),
            ("init.weight".into(), &mut self.init.weight.data),
            ("init.bias".into(), &mut self.init.bias),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers.{l}.w_self"), &mut layer.w_self.data));
            out.push((format!("layers.{l}.w_in"), &mut layer.w_in.data));
            out.push((format!("layers.{l}.w_out"), &mut layer.w_out.data));
            out.push((format!("layers.{l}.bias"), &mut layer.bias));
        }
        for (prefix, head) in [("node_head", &mut self.node_head), ("edge_head", &mut self.edge_head)] {
            out.push((format!("{prefix}.hidden.weight"), &mut head.hidden.weight.data));
            out.push((format!("{prefix}.hidden.bias"), &mut head.hidden.bias));
            out.push((format!("{prefix}.out.weight"), &mut head.out.weight.data));
            out.push((format!("{prefix}.out.bias"), &mut head.out.bias));
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Checks that every tensor has the size implied by `dims` and that the
    /// embedder agrees with the question width.
    pub fn check(&self) -> Result<()> {
        let reference = Self::zeros(self.dims);
        let expected = reference.tensors();
        let actual = self.tensors();
        if expected.len() != actual.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} tensors, found {}",
                expected.len(),
                actual.len()
            )));
        }
        for ((name, e), (_, a)) in expected.iter().zip(&actual) {
            if e.len() != a.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: expected {} values, found {}",
                    e.len(),
                    a.len()
                )));
            }
        }
        if self.embedder.dim() != self.dims.question_dim {
            return Err(Error::DimensionMismatch(format!(
                "embedder produces {} values, router expects {}",
                self.embedder.dim(),
                self.dims.question_dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RouterDims {
        RouterDims {
            subject_dim: 4,
            question_dim: 6,
            hidden: 5,
            layers: 2,
            head_hidden: 3,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn parameter_count() {
        let p = RouterParams::zeros(small());
        let expected = 15 * 4 + (5 * 10 + 5) + 2 * (3 * 25 + 5) + (3 * 5 + 3 + 3 + 1) + (3 * 16 + 3 + 3 + 1);
        assert_eq!(p.num_parameters(), expected);
        assert!(p.check().is_ok());
    }

    #[test]
    fn init_is_seeded() {
        let a = RouterParams::init(small(), 3).unwrap();
        let b = RouterParams::init(small(), 3).unwrap();
        let c = RouterParams::init(small(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.init.bias.iter().all(|b| *b == 0.0));
        assert!(a.init.weight.data.iter().any(|w| *w != 0.0));
    }

    #[test]
    fn block_products() {
        let mut m = Matrix::zeros(2, 3);
        m.data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = vec![0.0; 2];
        m.add_matvec_block(1, &[1.0, 1.0], &mut out);
        assert_eq!(out, vec![5.0, 11.0]);
        let mut t = vec![0.0; 2];
        m.add_matvec_t_block(1, &[1.0, 2.0], &mut t);
        assert_eq!(t, vec![12.0, 15.0]);
        m.add_outer_block(2, &[1.0, -1.0], &[10.0]);
        assert_eq!(m.data, vec![1.0, 2.0, 13.0, 4.0, 5.0, -4.0]);
    }
}

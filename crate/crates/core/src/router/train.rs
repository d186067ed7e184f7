use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward, loss_and_logit_grad, Labels, LossWeights};
use super::params::{RouterDims, RouterParams};
use crate::embedding::EmbedderConfig;
use crate::error::{Error, Result};
use crate::subject::{build_ground_truth_dag, QuestionRecord, SDag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dims: RouterDims,
    pub lambda_node: f64,
    pub lambda_edge: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dims: RouterDims::default(),
            lambda_node: 1.0,
            lambda_edge: 1.0,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_node < 0.0 || self.lambda_edge < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        if self.lambda_node == 0.0 && self.lambda_edge == 0.0 {
            return Err(Error::InvalidConfig(
                "lambda_node and lambda_edge cannot both be zero".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("invalid optimizer hyperparameters".into()));
        }
        self.dims.validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            node: self.lambda_node,
            edge: self.lambda_edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub question: String,
    pub dag: SDag,
}

impl TrainSample {
    /// Pairs the question text shown to agents with its ground-truth graph.
    pub fn from_record(q: &QuestionRecord, threshold: f64) -> Result<Self> {
        let weights = q
            .subjects
            .as_ref()
            .ok_or_else(|| Error::InvalidDataset(format!("{}: no subject annotation", q.id)))?;
        Ok(Self {
            question: q.prompt_text(),
            dag: build_ground_truth_dag(weights, threshold)?,
        })
    }
}

pub fn samples_from_records(records: &[QuestionRecord], threshold: f64) -> Result<Vec<TrainSample>> {
    records.iter().map(|q| TrainSample::from_record(q, threshold)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RouterParams,
    /// Mean per-sample loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Adam state: first and second moments per tensor.
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &RouterParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut RouterParams, grads: &RouterParams, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let grads = grads.tensors();
        for (k, (_, p)) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[k].1;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
    }
}

fn scale(grads: &mut RouterParams, factor: f64) {
    for (_, t) in grads.tensors_mut() {
        for v in t.iter_mut() {
            *v *= factor;
        }
    }
}

/// Trains a router from scratch on `(question, ground-truth graph)` pairs.
///
/// Deterministic for a given seed, dataset and configuration.
pub fn train(samples: &[TrainSample], cfg: &TrainConfig, embedder: &EmbedderConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidDataset("no training samples".into()));
    }
    if embedder.dim() != cfg.dims.question_dim {
        return Err(Error::DimensionMismatch(format!(
            "embedder dimension {} differs from router question dimension {}",
            embedder.dim(),
            cfg.dims.question_dim
        )));
    }
    let provider = embedder.build()?;
    let data: Vec<(Vec<f64>, Labels)> = samples
        .iter()
        .map(|s| Ok((provider.embed(&s.question)?.0, Labels::from_dag(&s.dag))))
        .collect::<Result<_>>()?;

    let mut params = RouterParams::init(cfg.dims, cfg.seed)?;
    params.embedder = embedder.clone();
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let weights = cfg.loss_weights();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            for &idx in batch {
                let (question, labels) = &data[idx];
                let cache = forward(&params, question)?;
                let lg = loss_and_logit_grad(&cache.output, labels, weights)
                    .map_err(|_| Error::NonFiniteLoss { epoch, sample: idx })?;
                total += lg.loss;
                backward(&params, &cache, &lg, &mut grads);
            }
            if batch.len() > 1 {
                scale(&mut grads, 1.0 / batch.len() as f64);
            }
            adam.step(&mut params, &grads, cfg);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, sample: 0 });
        }
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

//! Question embeddings: a provider trait, the offline feature-hashing
//! provider, and a client for OpenAI-compatible `/embeddings` endpoints.

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{post_json, BackendError, HttpPolicy};
use crate::error::{Error, Result};

pub const DEFAULT_HASHED_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding>;
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Signed feature hashing into `dim` buckets, then L2 normalization.
pub fn embed_hashed(text: &str, dim: usize) -> Embedding {
    assert!(dim >= 2, "hashed embedding dimension must be at least 2");
    let mut v = vec![0.0f64; dim];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Embedding(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    dim: usize,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "hashed embedding dimension {dim} < 2"
            )));
        }
        Ok(Self { dim })
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_HASHED_DIM,
        }
    }
}

impl Embedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        Ok(embed_hashed(text, self.dim))
    }
}

pub struct RemoteEmbedder {
    name: String,
    endpoint: String,
    model: String,
    key_env: Option<String>,
    dim: usize,
    policy: HttpPolicy,
    client: Client,
}

impl RemoteEmbedder {
    pub fn new(
        url: &str,
        model: impl Into<String>,
        key_env: Option<String>,
        dim: usize,
        policy: HttpPolicy,
    ) -> Result<Self> {
        let client = Client::builder()
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let trimmed = url.trim_end_matches('/');
        let endpoint = if trimmed.ends_with("/embeddings") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/embeddings")
        };
        Ok(Self {
            name: "embeddings".into(),
            endpoint,
            model: model.into(),
            key_env,
            dim,
            policy,
            client,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let key = match &self.key_env {
            None => None,
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::Auth {
                backend: self.name.clone(),
                message: format!("environment variable {var} is not set"),
            })?),
        };
        let body = json!({"model": self.model, "input": text});
        let (value, _) = post_json(
            &self.client,
            &self.name,
            &self.endpoint,
            key.as_deref(),
            &body,
            &self.policy,
        )?;
        let values: Vec<f64> = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::InvalidResponse {
                backend: self.name.clone(),
                message: "missing data[0].embedding".into(),
            })?
            .iter()
            .map(|x| x.as_f64().filter(|f| f.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| BackendError::InvalidResponse {
                backend: self.name.clone(),
                message: "non-numeric embedding entry".into(),
            })?;
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "endpoint returned {} values, configured dimension is {}",
                values.len(),
                self.dim
            )));
        }
        Ok(Embedding(values))
    }
}

/// Serializable description of an embedding provider, stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Hashed {
        dim: usize,
    },
    Remote {
        url: String,
        model: String,
        #[serde(default)]
        key_env: Option<String>,
        dim: usize,
    },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashed {
            dim: DEFAULT_HASHED_DIM,
        }
    }
}

impl EmbedderConfig {
    pub fn dim(&self) -> usize {
        match self {
            EmbedderConfig::Hashed { dim } | EmbedderConfig::Remote { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        Ok(match self {
            EmbedderConfig::Hashed { dim } => Box::new(HashedEmbedder::new(*dim)?),
            EmbedderConfig::Remote {
                url,
                model,
                key_env,
                dim,
            } => Box::new(RemoteEmbedder::new(
                url,
                model.clone(),
                key_env.clone(),
                *dim,
                HttpPolicy::default(),
            )?),
        })
    }
}

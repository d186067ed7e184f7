//! Subject capability profiles of pooled models and subject → model
//! selection.
//!
//! A model earns, for every profiling question it answers correctly, the
//! question's subject weights as credit. Each model's credit vector is then
//! divided by its own total, and a subject is routed to the model with the
//! largest normalized score for it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{BackendConfig, ChatRequest, LlmClient, RequestMeta};
use crate::error::{Error, Result};
use crate::orchestrator::{extract_answer, render_single_model_prompt};
use crate::subject::{QuestionRecord, Subject, SubjectWeights, NUM_SUBJECTS};

pub const PROFILE_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoolEntry {
    pub model_id: String,
    /// Name of the backend that serves this model.
    pub backend: String,
    /// Informational only; selection uses measured profiles.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub declared_subjects: Vec<Subject>,
}

/// Pool file: the backends and the models they serve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelPool {
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    pub models: Vec<ModelPoolEntry>,
}

impl ModelPool {
    pub fn load(path: &Path) -> Result<Self> {
        let mut pool: ModelPool = crate::io::read_json(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for b in &mut pool.backends {
            b.resolve_paths(base);
        }
        pool.check()?;
        Ok(pool)
    }

    pub fn check(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut ids = BTreeSet::new();
        let backends: BTreeSet<&str> = self.backends.iter().map(|b| b.name.as_str()).collect();
        for m in &self.models {
            if !ids.insert(m.model_id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate model id `{}`", m.model_id)));
            }
            if !self.backends.is_empty() && !backends.contains(m.backend.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "model `{}` refers to unknown backend `{}`",
                    m.model_id, m.backend
                )));
            }
        }
        Ok(())
    }

    pub fn client(&self) -> Result<LlmClient> {
        Ok(LlmClient::from_configs(&self.backends)?)
    }

    pub fn entry(&self, model_id: &str) -> Option<&ModelPoolEntry> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    /// Model ids in lexicographic order.
    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.models.iter().map(|m| m.model_id.clone()).collect();
        ids.sort();
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub raw: BTreeMap<Subject, f64>,
    pub normalized: BTreeMap<Subject, f64>,
    pub uniform_fallback: bool,
}

impl ModelProfile {
    pub fn from_raw(model_id: impl Into<String>, raw: &[f64; NUM_SUBJECTS]) -> Self {
        let (normalized, uniform_fallback) = normalize_profile(raw);
        Self {
            model_id: model_id.into(),
            raw: Subject::ALL.iter().map(|s| (*s, raw[s.index()])).collect(),
            normalized: Subject::ALL.iter().map(|s| (*s, normalized[s.index()])).collect(),
            uniform_fallback,
        }
    }

    pub fn capability(&self, subject: Subject) -> f64 {
        self.normalized.get(&subject).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the profiling questions (ids, weights, gold).
    pub profiling_set_hash: String,
    pub created_unix: u64,
    pub seed: u64,
    pub questions: usize,
    pub calls: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStore {
    pub version: u64,
    pub provenance: Provenance,
    pub profiles: BTreeMap<String, ModelProfile>,
}

impl ProfileStore {
    pub fn new(profiles: impl IntoIterator<Item = ModelProfile>) -> Self {
        Self {
            version: PROFILE_VERSION,
            provenance: Provenance::default(),
            profiles: profiles.into_iter().map(|p| (p.model_id.clone(), p)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::json("profile store", e))?;
        let version = value.get("version").and_then(serde_json::Value::as_u64).unwrap_or(0);
        if version != PROFILE_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: PROFILE_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| Error::json("profile store", e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile store serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Every pool model has a profile.
    pub fn covers(&self, pool: &ModelPool) -> Result<()> {
        for m in &pool.models {
            if !self.profiles.contains_key(&m.model_id) {
                return Err(Error::InvalidConfig(format!("no profile for model `{}`", m.model_id)));
            }
        }
        Ok(())
    }
}

/// One graded profiling answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedAnswer {
    pub question_id: String,
    pub weights: SubjectWeights,
    pub model_id: String,
    pub correct: bool,
    #[serde(default)]
    pub error: bool,
}

/// Sums subject-weight credit of correct answers per model.
///
/// Summation runs in (model id, question id) order so the result does not
/// depend on the order of `results`.
pub fn accumulate_scores(results: &[GradedAnswer]) -> BTreeMap<String, [f64; NUM_SUBJECTS]> {
    let mut sorted: Vec<&GradedAnswer> = results.iter().collect();
    sorted.sort_by(|a, b| (&a.model_id, &a.question_id).cmp(&(&b.model_id, &b.question_id)));
    let mut raw: BTreeMap<String, [f64; NUM_SUBJECTS]> = BTreeMap::new();
    for r in sorted {
        let row = raw.entry(r.model_id.clone()).or_insert([0.0; NUM_SUBJECTS]);
        if r.correct {
            for (s, w) in r.weights.iter() {
                row[s.index()] += w;
            }
        }
    }
    raw
}

/// Divides a model's scores by their total; all-zero rows become uniform
/// and are flagged.
pub fn normalize_profile(raw: &[f64; NUM_SUBJECTS]) -> ([f64; NUM_SUBJECTS], bool) {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        let mut out = [0.0; NUM_SUBJECTS];
        for (o, r) in out.iter_mut().zip(raw) {
            *o = r / total;
        }
        (out, false)
    } else {
        ([1.0 / NUM_SUBJECTS as f64; NUM_SUBJECTS], true)
    }
}

/// Relative gap below which two capabilities count as tied. Normalizing a
/// scaled row can move it by an ulp or two.
pub const SELECTION_TIE_TOLERANCE: f64 = 1e-12;

/// Model with the highest normalized capability for `subject`; ties go to
/// the lexicographically smallest id.
pub fn select_model(subject: Subject, store: &ProfileStore) -> Result<String> {
    let mut best: Option<(&String, f64)> = None;
    for (id, profile) in &store.profiles {
        let c = profile.capability(subject);
        if best.is_none_or(|(_, b)| c - b > SELECTION_TIE_TOLERANCE * b.abs().max(c.abs())) {
            best = Some((id, c));
        }
    }
    best.map(|(id, _)| id.clone()).ok_or(Error::EmptyPool)
}

pub fn profiling_set_hash(questions: &[&QuestionRecord]) -> String {
    let mut sorted: Vec<&&QuestionRecord> = questions.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut hasher = Sha256::new();
    for q in sorted {
        hasher.update(q.id.as_bytes());
        hasher.update([0]);
        hasher.update(q.gold.as_bytes());
        hasher.update([0]);
        hasher.update(serde_json::to_string(&q.subjects).unwrap_or_default().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingConfig {
    pub seed: u64,
    pub parallelism: usize,
}

impl Default for ProfilingConfig {
    fn default() -> Self {
        Self { seed: 0, parallelism: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct ProfilingOutcome {
    pub store: ProfileStore,
    pub graded: Vec<GradedAnswer>,
}

fn grade(q: &QuestionRecord, model: &ModelPoolEntry, weights: &SubjectWeights, client: &LlmClient) -> GradedAnswer {
    let req = ChatRequest::new(&model.backend, render_single_model_prompt(&q.prompt_text())).with_meta(RequestMeta {
        question_id: Some(q.id.clone()),
        model_id: Some(model.model_id.clone()),
        purpose: Some("profiling".into()),
        ..Default::default()
    });
    let (correct, error) = match client.complete(&req) {
        Ok(resp) => (extract_answer(&resp.text).is_ok_and(|a| a == q.gold), false),
        Err(e) => {
            log::warn!("profiling {} on {}: {e}", model.model_id, q.id);
            (false, true)
        }
    };
    GradedAnswer {
        question_id: q.id.clone(),
        weights: weights.clone(),
        model_id: model.model_id.clone(),
        correct,
        error,
    }
}

/// Asks every pool model every profiling question once and builds profiles.
pub fn run_profiling(
    pool: &ModelPool,
    questions: &[QuestionRecord],
    client: &LlmClient,
    cfg: &ProfilingConfig,
) -> Result<ProfilingOutcome> {
    pool.check()?;
    if questions.is_empty() {
        return Err(Error::EmptySplit("profiling".into()));
    }
    let mut jobs = Vec::new();
    for model in &pool.models {
        for q in questions {
            let weights = q
                .subjects
                .as_ref()
                .filter(|w| w.is_finalized())
                .ok_or_else(|| Error::InvalidDataset(format!("{}: profiling question lacks finalized subjects", q.id)))?;
            jobs.push((q, model, weights));
        }
    }

    let calls_before = client.counter().total();
    let mut graded = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(cfg.parallelism.max(1)) {
        let part: Vec<GradedAnswer> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(q, m, w)| scope.spawn(move || grade(q, m, w, client)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("profiling worker panicked")).collect()
        });
        graded.extend(part);
    }

    let raw = accumulate_scores(&graded);
    let profiles = pool.models.iter().map(|m| {
        let row = raw.get(&m.model_id).copied().unwrap_or([0.0; NUM_SUBJECTS]);
        ModelProfile::from_raw(m.model_id.clone(), &row)
    });
    let mut store = ProfileStore::new(profiles);
    let refs: Vec<&QuestionRecord> = questions.iter().collect();
    store.provenance = Provenance {
        profiling_set_hash: profiling_set_hash(&refs),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seed: cfg.seed,
        questions: questions.len(),
        calls: client.counter().total() - calls_before,
        errors: graded.iter().filter(|g| g.error).count() as u64,
    };
    Ok(ProfilingOutcome { store, graded })
}

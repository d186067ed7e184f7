//! Synthetic multi-subject questions and an oracle model pool.
//!
//! Each question mixes keywords of 2–4 subjects into filler text. The
//! keywords of dominant subjects appear three times, those of supporting
//! subjects once, so both the subject set and its structure are visible in
//! a bag-of-words embedding.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{BackendConfig, MockMatch, MockReply, MockRule, OracleEntry, OracleReply};
use crate::error::{Error, Result};
use crate::profiling::{ModelPool, ModelPoolEntry};
use crate::subject::{build_ground_truth_dag, option_label, QuestionRecord, Split, Subject, SubjectWeights};

/// Weight profiles, heaviest first. The first subject drawn for a question
/// takes the first weight.
pub const WEIGHT_TEMPLATES: &[&[f64]] = &[
    &[0.7, 0.3],
    &[0.6, 0.4],
    &[0.5, 0.3, 0.2],
    &[0.4, 0.4, 0.2],
    &[0.4, 0.25, 0.2, 0.15],
    &[0.35, 0.35, 0.15, 0.15],
];

const NUM_OPTIONS: usize = 4;

const FILLER: &[&str] = &[
    "consider", "the", "following", "situation", "which", "statement", "best", "describes", "given", "that",
    "an", "observer", "notes", "a", "case", "where", "result", "most", "likely", "explain",
];

/// Distinctive vocabulary for each subject except `Other`.
pub fn keywords(subject: Subject) -> &'static [&'static str] {
    match subject {
        Subject::Math => &["integral", "polynomial", "theorem", "matrix", "derivative", "prime"],
        Subject::Physics => &["momentum", "quantum", "velocity", "photon", "entropy", "gravity"],
        Subject::Chemistry => &["molecule", "reagent", "oxidation", "catalyst", "isotope", "titration"],
        Subject::Law => &["statute", "plaintiff", "contract", "tort", "jurisdiction", "verdict"],
        Subject::Engineering => &["turbine", "circuit", "beam", "torque", "actuator", "welding"],
        Subject::Economics => &["inflation", "tariff", "elasticity", "monetary", "recession", "equilibrium"],
        Subject::Health => &["nutrition", "fitness", "hygiene", "wellness", "sleep", "vaccination"],
        Subject::Psychology => &["cognition", "behavior", "memory", "anxiety", "perception", "motivation"],
        Subject::Business => &["marketing", "revenue", "startup", "shareholder", "branding", "logistics"],
        Subject::Biology => &["enzyme", "genome", "mitochondria", "protein", "species", "cell"],
        Subject::Philosophy => &["ethics", "epistemology", "metaphysics", "virtue", "ontology", "syllogism"],
        Subject::ComputerScience => &["algorithm", "compiler", "database", "recursion", "network", "software"],
        Subject::History => &["empire", "dynasty", "revolution", "treaty", "medieval", "colonial"],
        Subject::Medicine => &["diagnosis", "surgery", "dosage", "symptom", "clinical", "prescription"],
        Subject::Other => &[],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    /// Ground-truth threshold used to decide which subjects are dominant.
    pub threshold: f64,
    /// How many of each subject's keywords are used (1 to 6).
    pub vocabulary: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 500,
            seed: 0,
            threshold: 0.1,
            vocabulary: 4,
        }
    }
}

/// Builds one question from explicit weights.
pub fn question_from_weights(
    id: String,
    weights: &SubjectWeights,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<QuestionRecord> {
    let dag = build_ground_truth_dag(weights, cfg.threshold)?;
    let mut words: Vec<&str> = Vec::new();
    for (s, _) in weights.iter() {
        let all = keywords(s);
        let vocab = &all[..cfg.vocabulary.max(1).min(all.len())];
        if vocab.is_empty() {
            continue;
        }
        let dominant = dag.contains(s) && dag.out_degree(s) == 0;
        let count = if dominant { 3 } else { 1 };
        for _ in 0..count {
            words.push(vocab.choose(rng).expect("non-empty vocabulary"));
        }
    }
    for _ in 0..rng.random_range(4..8) {
        words.push(FILLER.choose(rng).expect("non-empty filler"));
    }
    words.shuffle(rng);
    let gold = option_label(rng.random_range(0..NUM_OPTIONS));
    Ok(QuestionRecord {
        question: format!("{}?", words.join(" ")),
        options: (1..=NUM_OPTIONS).map(|i| format!("choice {i}")).collect(),
        id,
        gold,
        subjects: Some(weights.clone()),
        split: None,
    })
}

/// Draws subjects for a template; the first one drawn takes the first weight.
pub fn random_weights(template: &[f64], rng: &mut ChaCha8Rng) -> SubjectWeights {
    let pool: Vec<Subject> = Subject::ALL.iter().copied().filter(|s| *s != Subject::Other).collect();
    let chosen: Vec<Subject> = pool.choose_multiple(rng, template.len()).copied().collect();
    SubjectWeights::from_pairs(chosen.into_iter().zip(template.iter().copied()))
}

/// `count` questions drawn from [`WEIGHT_TEMPLATES`].
pub fn generate(cfg: &SynthConfig) -> Result<Vec<QuestionRecord>> {
    generate_with_templates(cfg, WEIGHT_TEMPLATES)
}

pub fn generate_with_templates(cfg: &SynthConfig, templates: &[&[f64]]) -> Result<Vec<QuestionRecord>> {
    if templates.is_empty() {
        return Err(Error::InvalidConfig("no weight templates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|i| {
            let template = templates.choose(&mut rng).expect("non-empty templates");
            let weights = random_weights(template, &mut rng);
            question_from_weights(format!("syn-{}-{i}", cfg.seed), &weights, cfg, &mut rng)
        })
        .collect()
}

/// Marks every record with `split`.
pub fn with_split(mut records: Vec<QuestionRecord>, split: Split) -> Vec<QuestionRecord> {
    for r in &mut records {
        r.split = Some(split);
    }
    records
}

pub fn oracle_backend_name(subject: Subject) -> String {
    format!("oracle-{}", slug(subject))
}

pub fn oracle_model_id(subject: Subject) -> String {
    format!("expert-{}", slug(subject))
}

fn slug(subject: Subject) -> String {
    subject.name().to_lowercase().replace(' ', "-")
}

/// A wrong label for a question: the option after `gold`, cyclically.
fn wrong_label(q: &QuestionRecord) -> String {
    let n = q.options.len().max(2);
    let gold = (0..n).find(|i| option_label(*i) == q.gold).unwrap_or(0);
    option_label((gold + 1) % n)
}

/// One mock model per subject except `Other`. A model answers a question
/// correctly iff the question's dominant subject is its specialty.
pub fn oracle_pool(questions: &[QuestionRecord], latency_ms: [f64; 2]) -> Result<ModelPool> {
    let mut key = BTreeMap::new();
    for q in questions {
        let weights = q
            .subjects
            .as_ref()
            .ok_or_else(|| Error::InvalidDataset(format!("{}: no subject weights", q.id)))?;
        let dominant = weights
            .dominant()
            .ok_or_else(|| Error::InvalidDataset(format!("{}: empty subject weights", q.id)))?;
        key.insert(
            q.id.clone(),
            OracleEntry {
                gold: q.gold.clone(),
                wrong: wrong_label(q),
                dominant,
            },
        );
    }
    let mut pool = ModelPool::default();
    for s in Subject::ALL.iter().copied().filter(|s| *s != Subject::Other) {
        let mut cfg = BackendConfig::mock(
            oracle_backend_name(s),
            vec![MockRule::new(
                MockMatch::Any,
                MockReply::Oracle {
                    oracle: OracleReply {
                        specialty: s,
                        key: key.clone(),
                    },
                },
            )],
        );
        cfg.latency_ms = latency_ms;
        cfg.seed = s.index() as u64;
        pool.backends.push(cfg);
        pool.models.push(ModelPoolEntry {
            model_id: oracle_model_id(s),
            backend: oracle_backend_name(s),
            declared_subjects: vec![s],
        });
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::tokenize;

    #[test]
    fn templates_are_valid_weights() {
        for t in WEIGHT_TEMPLATES {
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((2..=4).contains(&t.len()));
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = SynthConfig { count: 20, seed: 5, ..SynthConfig::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_ne!(generate(&cfg).unwrap(), generate(&SynthConfig { seed: 6, ..cfg }).unwrap());
    }

    #[test]
    fn dominant_keywords_repeat() {
        let cfg = SynthConfig { count: 50, seed: 1, ..SynthConfig::default() };
        for q in generate(&cfg).unwrap() {
            let w = q.subjects.as_ref().unwrap();
            assert!(w.is_finalized());
            assert!((2..=4).contains(&w.len()));
            let dag = build_ground_truth_dag(w, 0.1).unwrap();
            let tokens = tokenize(&q.question);
            for (s, _) in w.iter() {
                let hits = tokens.iter().filter(|t| keywords(s).contains(&t.as_str())).count();
                let expected = if dag.out_degree(s) == 0 { 3 } else { 1 };
                assert_eq!(hits, expected, "{s} in {}", q.question);
            }
            q.check().unwrap();
        }
    }

    #[test]
    fn vocabularies_are_disjoint() {
        let mut seen = std::collections::BTreeSet::new();
        for s in Subject::ALL {
            for k in keywords(s) {
                assert!(seen.insert(*k), "{k} repeated");
                assert!(!FILLER.contains(k));
            }
        }
    }

    #[test]
    fn oracle_pool_covers_subjects() {
        let qs = generate(&SynthConfig { count: 5, seed: 2, ..SynthConfig::default() }).unwrap();
        let pool = oracle_pool(&qs, [0.0, 0.0]).unwrap();
        assert_eq!(pool.models.len(), 14);
        pool.check().unwrap();
        pool.client().unwrap();
    }
}

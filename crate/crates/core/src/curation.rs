//! Dataset curation: LLM subject annotation in three rounds, consensus
//! filtering, the multi-subject filter and seeded split assignment.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{ChatRequest, LlmClient, RequestMeta};
use crate::error::{Error, Result};
use crate::subject::{parse_subject, QuestionRecord, Split, SubjectWeights, MAX_DAG_NODES};

pub const ANNOTATION_ROUNDS: usize = 3;
pub const DEFAULT_PROFILING_SIZE: usize = 200;

const ANNOTATION_TEMPLATE: &str = "Question: {Q}\n\
What are the core knowledge, subjects or skills needed to solve this problem? \
List 2-5 keywords separated in comma, with the weights (0~1.0). \
These weights represent the proportion of these skills are needed in the question. \
And the proportion of all keywords sum to 1. \
Candidate keywords: Math, Physics, Chemistry, Law, Engineering, Economics, Health, Psychology, \
Business, Biology, Philosophy, Computer Science, History, Medicine, Other. \
Give ONLY the keywords with weights, no other words or explanation.\n\
Please follow this format: Keywords: <Math 0.6>, <Physics 0.3>, <Chemistry 0.1>...";

/// Subject-annotation prompt for one question.
pub fn render_annotation_prompt(q: &QuestionRecord) -> Result<String> {
    if q.question.trim().is_empty() {
        return Err(Error::InvalidDataset(format!("{}: empty question text", q.id)));
    }
    Ok(ANNOTATION_TEMPLATE.replace("{Q}", &q.prompt_text()))
}

fn group_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"<\s*([A-Za-z][A-Za-z ]*?)\s*[:=]?\s+([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*>")
            .expect("valid regex")
    })
}

/// Parses `<Name Weight>` groups after the last `Keywords:` marker.
///
/// Unknown subject names are skipped; later duplicates overwrite earlier
/// ones; the result is renormalized to sum to one.
pub fn parse_annotation_reply(reply: &str) -> Result<SubjectWeights> {
    let lower = reply.to_ascii_lowercase();
    let body = match lower.rfind("keywords:") {
        Some(pos) => &reply[pos + "keywords:".len()..],
        None => reply,
    };
    let mut weights = SubjectWeights::new();
    for cap in group_regex().captures_iter(body) {
        let Ok(subject) = parse_subject(&cap[1]) else {
            log::debug!("skipping unknown subject `{}`", &cap[1]);
            continue;
        };
        let weight: f64 = cap[2]
            .parse()
            .map_err(|_| Error::ParseFailure(format!("bad weight `{}`", &cap[2])))?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidWeight {
                subject: subject.name().to_string(),
                weight,
            });
        }
        weights.insert(subject, weight);
    }
    if weights.is_empty() {
        return Err(Error::ParseFailure(format!(
            "no `<Subject weight>` groups in reply: {}",
            reply.chars().take(80).collect::<String>()
        )));
    }
    weights
        .normalized()
        .map_err(|_| Error::ParseFailure("all weights are zero".into()))
}

/// Keeps subjects present in every run, averages their weights and
/// renormalizes.
pub fn consensus_merge(runs: &[SubjectWeights]) -> Result<SubjectWeights> {
    if runs.len() != ANNOTATION_ROUNDS {
        return Err(Error::InvalidConfig(format!(
            "consensus needs exactly {ANNOTATION_ROUNDS} runs, got {}",
            runs.len()
        )));
    }
    let mut merged = SubjectWeights::new();
    for subject in runs[0].subjects() {
        if runs.iter().all(|r| r.contains(subject)) {
            let mean = runs.iter().map(|r| r.get(subject).unwrap_or(0.0)).sum::<f64>()
                / runs.len() as f64;
            merged.insert(subject, mean);
        }
    }
    if merged.is_empty() {
        return Err(Error::NoConsensus);
    }
    merged.normalized().map_err(|_| Error::NoConsensus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRun {
    pub question_id: String,
    pub round_index: usize,
    pub raw_reply: String,
    /// `None` when the reply could not be parsed (see `error`).
    pub parsed: Option<SubjectWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub question_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurateConfig {
    /// Backend used as the annotator.
    pub backend: String,
    pub profiling_size: usize,
    /// Fraction of the non-profiling records assigned to train.
    pub train_ratio: f64,
    pub seed: u64,
    /// Draw the profiling questions from the test split instead of holding
    /// them out. They are then written twice, the copy carrying a
    /// `#profiling` id suffix.
    pub profiling_from_test: bool,
    pub parallelism: usize,
}

impl Default for CurateConfig {
    fn default() -> Self {
        Self {
            backend: "annotator".into(),
            profiling_size: DEFAULT_PROFILING_SIZE,
            train_ratio: 0.7,
            seed: 0,
            profiling_from_test: false,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: usize,
    pub test: usize,
    pub profiling: usize,
    pub avg_subjects: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CuratedDataset {
    /// Sorted by id; every record has finalized subjects and a split.
    pub records: Vec<QuestionRecord>,
    pub stats: DatasetStats,
}

impl CuratedDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &QuestionRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }
}

#[derive(Debug, Clone, Default)]
pub struct CurationOutcome {
    pub dataset: CuratedDataset,
    pub runs: Vec<AnnotationRun>,
    pub skipped: Vec<SkipEntry>,
    pub warnings: Vec<String>,
}

/// Annotates one question three times and merges the rounds.
fn annotate(q: &QuestionRecord, client: &LlmClient, backend: &str) -> (Vec<AnnotationRun>, Result<SubjectWeights>) {
    let prompt = match render_annotation_prompt(q) {
        Ok(p) => p,
        Err(e) => return (Vec::new(), Err(e)),
    };
    let mut runs = Vec::with_capacity(ANNOTATION_ROUNDS);
    let mut parsed = Vec::with_capacity(ANNOTATION_ROUNDS);
    for round in 0..ANNOTATION_ROUNDS {
        let req = ChatRequest::new(backend, prompt.clone()).with_meta(RequestMeta {
            question_id: Some(q.id.clone()),
            purpose: Some(format!("annotation:{round}")),
            ..Default::default()
        });
        let reply = match client.complete(&req) {
            Ok(r) => r.text,
            Err(e) => return (runs, Err(e.into())),
        };
        let result = parse_annotation_reply(&reply);
        runs.push(AnnotationRun {
            question_id: q.id.clone(),
            round_index: round,
            raw_reply: reply,
            parsed: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        match result {
            Ok(w) => parsed.push(w),
            Err(e) => return (runs, Err(e)),
        }
    }
    (runs, consensus_merge(&parsed))
}

/// Runs the full curation pipeline. Per-question failures are logged in
/// `skipped`; the batch itself only fails on configuration errors.
pub fn curate_dataset(raw: &[QuestionRecord], client: &LlmClient, cfg: &CurateConfig) -> Result<CurationOutcome> {
    if raw.is_empty() {
        return Err(Error::InvalidDataset("no input questions".into()));
    }
    if !(0.0..=1.0).contains(&cfg.train_ratio) {
        return Err(Error::InvalidConfig(format!("train ratio {} outside [0, 1]", cfg.train_ratio)));
    }
    if !client.has_backend(&cfg.backend) {
        return Err(Error::InvalidConfig(format!("unknown annotator backend `{}`", cfg.backend)));
    }
    crate::subject::check_dataset(raw)?;

    let mut sorted: Vec<&QuestionRecord> = raw.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let workers = cfg.parallelism.max(1);
    let mut results: Vec<(Vec<AnnotationRun>, Result<SubjectWeights>)> = Vec::with_capacity(sorted.len());
    for chunk in sorted.chunks(workers) {
        let chunk_results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|q| scope.spawn(|| annotate(q, client, &cfg.backend)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("annotation worker panicked"))
                .collect()
        });
        results.extend(chunk_results);
    }

    let mut outcome = CurationOutcome::default();
    let mut kept: Vec<QuestionRecord> = Vec::new();
    for (q, (runs, merged)) in sorted.iter().zip(results) {
        outcome.runs.extend(runs);
        match merged {
            Ok(w) if (2..=MAX_DAG_NODES).contains(&w.len()) => {
                let mut rec = (*q).clone();
                rec.subjects = Some(w);
                kept.push(rec);
            }
            Ok(w) => outcome.skipped.push(SkipEntry {
                question_id: q.id.clone(),
                reason: format!("{} consensus subject(s), need 2 to {MAX_DAG_NODES}", w.len()),
            }),
            Err(e) => outcome.skipped.push(SkipEntry {
                question_id: q.id.clone(),
                reason: e.to_string(),
            }),
        }
    }

    let (records, warnings) = assign_splits(kept, cfg);
    for w in &warnings {
        log::warn!("{w}");
    }
    outcome.warnings = warnings;
    outcome.dataset = finalize(records);
    Ok(outcome)
}

/// Seeded split assignment over records sorted by id.
pub fn assign_splits(mut records: Vec<QuestionRecord>, cfg: &CurateConfig) -> (Vec<QuestionRecord>, Vec<String>) {
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let mut warnings = Vec::new();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));

    let mut extra = Vec::new();
    if cfg.profiling_from_test {
        let n_train = (records.len() as f64 * cfg.train_ratio).round() as usize;
        let (train, test) = order.split_at(n_train.min(order.len()));
        for &i in train {
            records[i].split = Some(Split::Train);
        }
        for &i in test {
            records[i].split = Some(Split::Test);
        }
        if cfg.profiling_size > test.len() {
            warnings.push(format!(
                "profiling split truncated to {} (requested {})",
                test.len(),
                cfg.profiling_size
            ));
        }
        for &i in test.iter().take(cfg.profiling_size) {
            let mut copy = records[i].clone();
            copy.id = format!("{}#profiling", copy.id);
            copy.split = Some(Split::Profiling);
            extra.push(copy);
        }
    } else {
        let n_prof = cfg.profiling_size.min(records.len());
        if cfg.profiling_size > records.len() {
            warnings.push(format!(
                "profiling split truncated to {} (requested {})",
                records.len(),
                cfg.profiling_size
            ));
        }
        let (prof, rest) = order.split_at(n_prof);
        let n_train = (rest.len() as f64 * cfg.train_ratio).round() as usize;
        for &i in prof {
            records[i].split = Some(Split::Profiling);
        }
        for (k, &i) in rest.iter().enumerate() {
            records[i].split = Some(if k < n_train { Split::Train } else { Split::Test });
        }
    }
    records.extend(extra);
    records.sort_by(|a, b| a.id.cmp(&b.id));
    (records, warnings)
}

fn finalize(records: Vec<QuestionRecord>) -> CuratedDataset {
    let mut counts: BTreeMap<Split, usize> = BTreeMap::new();
    let mut subjects = 0usize;
    for r in &records {
        if let Some(s) = r.split {
            *counts.entry(s).or_default() += 1;
        }
        subjects += r.subjects.as_ref().map_or(0, |w| w.len());
    }
    let stats = DatasetStats {
        train: counts.get(&Split::Train).copied().unwrap_or(0),
        test: counts.get(&Split::Test).copied().unwrap_or(0),
        profiling: counts.get(&Split::Profiling).copied().unwrap_or(0),
        avg_subjects: if records.is_empty() {
            0.0
        } else {
            subjects as f64 / records.len() as f64
        },
    };
    CuratedDataset { records, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendConfig, MockMatch, MockReply, MockRule};
    use crate::subject::Subject;
    use proptest::prelude::*;

    fn q(id: &str, text: &str) -> QuestionRecord {
        QuestionRecord {
            id: id.into(),
            question: text.into(),
            options: vec!["1".into(), "4".into()],
            gold: "B".into(),
            subjects: None,
            split: None,
        }
    }

    fn w(pairs: &[(Subject, f64)]) -> SubjectWeights {
        SubjectWeights::from_pairs(pairs.iter().copied())
    }

    fn close(a: &SubjectWeights, b: &SubjectWeights) -> bool {
        a.len() == b.len() && a.iter().all(|(s, x)| (b.get(s).unwrap_or(f64::NAN) - x).abs() < 1e-9)
    }

    #[test]
    fn prompt_is_verbatim() {
        let p = render_annotation_prompt(&q("1", "What is 2+2?")).unwrap();
        assert!(p.starts_with("Question: What is 2+2?\nA. 1\nB. 4\n"));
        assert!(p.contains("Candidate keywords: Math, Physics, Chemistry, Law,"));
        assert!(p.contains("List 2-5 keywords separated in comma"));
        assert!(p.ends_with("Keywords: <Math 0.6>, <Physics 0.3>, <Chemistry 0.1>..."));
        assert!(render_annotation_prompt(&q("2", "   ")).is_err());
        let raw = render_annotation_prompt(&q("3", "is a < b?")).unwrap();
        assert!(raw.contains("is a < b?"));
    }

    #[test]
    fn parses_format_example() {
        let got = parse_annotation_reply("Keywords: <Math 0.6>, <Physics 0.3>, <Chemistry 0.1>").unwrap();
        assert!(close(&got, &w(&[(Subject::Math, 0.6), (Subject::Physics, 0.3), (Subject::Chemistry, 0.1)])));
    }

    #[test]
    fn parse_edge_cases() {
        let dup = parse_annotation_reply("<Math 0.5>, <Math 0.5>").unwrap();
        assert!(close(&dup, &w(&[(Subject::Math, 1.0)])));
        assert!(matches!(
            parse_annotation_reply("The answer is 42"),
            Err(Error::ParseFailure(_))
        ));
        assert!(matches!(
            parse_annotation_reply("<Math 1.5>, <Law 0.2>"),
            Err(Error::InvalidWeight { .. })
        ));
        // only the text after the last marker counts
        let last = parse_annotation_reply(
            "Keywords: <Math 0.6>, <Physics 0.4>\nRevised. Keywords: <Computer Science 0.5>, <law 0.5>",
        )
        .unwrap();
        assert!(close(&last, &w(&[(Subject::ComputerScience, 0.5), (Subject::Law, 0.5)])));
        let unknown = parse_annotation_reply("<Astrology 0.5>, <History 0.5>").unwrap();
        assert!(close(&unknown, &w(&[(Subject::History, 1.0)])));
    }

    #[test]
    fn consensus_examples() {
        let same = w(&[(Subject::Math, 0.6), (Subject::Physics, 0.4)]);
        assert!(close(&consensus_merge(&[same.clone(), same.clone(), same.clone()]).unwrap(), &same));

        let runs = [
            w(&[(Subject::Math, 0.5), (Subject::Physics, 0.5)]),
            w(&[(Subject::Math, 0.6), (Subject::Physics, 0.2), (Subject::Biology, 0.2)]),
            w(&[(Subject::Math, 0.7), (Subject::Physics, 0.3)]),
        ];
        let merged = consensus_merge(&runs).unwrap();
        // means 0.6 and 1/3, renormalized by their sum 14/15
        let expected = w(&[(Subject::Math, 0.6 / (14.0 / 15.0)), (Subject::Physics, (1.0 / 3.0) / (14.0 / 15.0))]);
        assert!(close(&merged, &expected));
        assert!((merged.get(Subject::Math).unwrap() - 0.6429).abs() < 1e-4);

        let disjoint = [
            w(&[(Subject::Math, 1.0)]),
            w(&[(Subject::Physics, 1.0)]),
            w(&[(Subject::Biology, 1.0)]),
        ];
        assert!(matches!(consensus_merge(&disjoint), Err(Error::NoConsensus)));
    }

    fn annotator(reply: &str) -> LlmClient {
        LlmClient::from_configs(&[BackendConfig::mock(
            "annotator",
            vec![MockRule::new(MockMatch::Any, MockReply::Text(reply.into()))],
        )])
        .unwrap()
    }

    #[test]
    fn single_subject_questions_are_skipped() {
        let raw: Vec<_> = (0..10).map(|i| q(&format!("q{i}"), "text")).collect();
        let client = annotator("Keywords: <Math 1.0>");
        let out = curate_dataset(&raw, &client, &CurateConfig::default()).unwrap();
        assert!(out.dataset.records.is_empty());
        assert_eq!(out.skipped.len(), 10);
        assert_eq!(client.counter().total(), 30);
    }

    #[test]
    fn consistent_annotations_are_kept() {
        let raw = vec![q("a", "text")];
        let client = annotator("Keywords: <Math 0.5>, <Physics 0.3>, <Biology 0.2>");
        let out = curate_dataset(&raw, &client, &CurateConfig::default()).unwrap();
        let rec = &out.dataset.records[0];
        let expected = w(&[(Subject::Math, 0.5), (Subject::Physics, 0.3), (Subject::Biology, 0.2)]);
        assert!(close(rec.subjects.as_ref().unwrap(), &expected));
        assert_eq!(out.runs.len(), 3);
        assert_eq!(rec.split, Some(Split::Profiling));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn transport_errors_are_logged_not_fatal() {
        let raw = vec![q("a", "text")];
        let client = LlmClient::from_configs(&[BackendConfig::mock(
            "annotator",
            vec![MockRule::new(MockMatch::Substring("never".into()), MockReply::Text("x".into()))],
        )])
        .unwrap();
        let out = curate_dataset(&raw, &client, &CurateConfig::default()).unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert!(out.skipped[0].reason.contains("no mock rule"));
    }

    fn records(n: usize) -> Vec<QuestionRecord> {
        (0..n)
            .map(|i| {
                let mut r = q(&format!("q{i:03}"), "text");
                r.subjects = Some(w(&[(Subject::Math, 0.5), (Subject::Law, 0.5)]));
                r
            })
            .collect()
    }

    #[test]
    fn splits_are_disjoint_and_truncated() {
        let cfg = CurateConfig {
            profiling_size: 200,
            seed: 5,
            ..CurateConfig::default()
        };
        let (recs, warnings) = assign_splits(records(150), &cfg);
        assert_eq!(recs.iter().filter(|r| r.split == Some(Split::Profiling)).count(), 150);
        assert_eq!(warnings.len(), 1);

        let cfg = CurateConfig {
            profiling_size: 20,
            seed: 5,
            ..CurateConfig::default()
        };
        let (recs, warnings) = assign_splits(records(120), &cfg);
        assert!(warnings.is_empty());
        let count = |s| recs.iter().filter(|r| r.split == Some(s)).count();
        assert_eq!(count(Split::Profiling), 20);
        assert_eq!(count(Split::Train), 70);
        assert_eq!(count(Split::Test), 30);
        let (again, _) = assign_splits(records(120), &cfg);
        assert_eq!(recs, again);
    }

    #[test]
    fn profiling_from_test_overlaps() {
        let cfg = CurateConfig {
            profiling_size: 10,
            profiling_from_test: true,
            ..CurateConfig::default()
        };
        let (recs, _) = assign_splits(records(100), &cfg);
        let prof: Vec<_> = recs.iter().filter(|r| r.split == Some(Split::Profiling)).collect();
        assert_eq!(prof.len(), 10);
        for p in prof {
            let base = p.id.trim_end_matches("#profiling");
            let orig = recs.iter().find(|r| r.id == base).unwrap();
            assert_eq!(orig.split, Some(Split::Test));
        }
        assert!(crate::subject::check_dataset(&recs).is_ok());
    }

    fn run_strategy() -> impl Strategy<Value = SubjectWeights> {
        proptest::collection::btree_map(0usize..6, 0.01f64..1.0, 1..5).prop_map(|m| {
            let total: f64 = m.values().sum();
            SubjectWeights::from_pairs(m.into_iter().map(|(i, v)| (Subject::from_index(i).unwrap(), v / total)))
        })
    }

    proptest! {
        #[test]
        fn consensus_is_intersection(a in run_strategy(), b in run_strategy(), c in run_strategy()) {
            match consensus_merge(&[a.clone(), b.clone(), c.clone()]) {
                Ok(m) => {
                    prop_assert!((m.total() - 1.0).abs() <= 1e-6);
                    for s in m.subjects() {
                        prop_assert!(a.contains(s) && b.contains(s) && c.contains(s));
                    }
                }
                Err(Error::NoConsensus) => {
                    prop_assert!(a.subjects().all(|s| !(b.contains(s) && c.contains(s))));
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}

//! Fixture files shared by the CLI-level tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdag::backend::{BackendConfig, LookupReply, MetaField, MockMatch, MockReply, MockRule};
use sdag::embedding::EmbedderConfig;
use sdag::io::{write_json, write_jsonl};
use sdag::profiling::{run_profiling, ProfilingConfig};
use sdag::router::{samples_from_records, save_checkpoint, train, RouterDims, TrainConfig};
use sdag::subject::QuestionRecord;
use sdag::synth::{generate, oracle_pool, SynthConfig};

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

pub fn sdag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdag"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn sdag")
}

/// A small, fast router checkpoint.
pub fn tiny_train_config() -> (TrainConfig, EmbedderConfig) {
    let cfg = TrainConfig {
        dims: RouterDims {
            subject_dim: 8,
            question_dim: 128,
            hidden: 16,
            layers: 1,
            head_hidden: 8,
            ..RouterDims::default()
        },
        learning_rate: 1e-2,
        epochs: 3,
        seed: 7,
        ..TrainConfig::default()
    };
    (cfg, EmbedderConfig::Hashed { dim: 128 })
}

fn keywords_reply(q: &QuestionRecord) -> String {
    let groups: Vec<String> = q
        .subjects
        .as_ref()
        .expect("synthetic weights")
        .iter()
        .map(|(s, w)| format!("<{} {w:.2}>", s.name()))
        .collect();
    format!("Keywords: {}", groups.join(", "))
}

/// Test and profiling splits, an oracle pool, profiles and a checkpoint.
pub fn eval_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let fx = Fixture { dir };
    let test = generate(&SynthConfig { count: 12, seed: 21, ..SynthConfig::default() }).unwrap();
    let profiling = generate(&SynthConfig { count: 30, seed: 22, ..SynthConfig::default() }).unwrap();
    let train_set = generate(&SynthConfig { count: 40, seed: 23, ..SynthConfig::default() }).unwrap();
    let all: Vec<QuestionRecord> = test.iter().chain(&profiling).chain(&train_set).cloned().collect();

    let pool = oracle_pool(&all, [100.0, 500.0]).unwrap();
    write_json(&fx.path("pool.json"), &pool).unwrap();
    write_jsonl(&fx.path("test.jsonl"), &test).unwrap();
    write_jsonl(&fx.path("profiling.jsonl"), &profiling).unwrap();
    write_jsonl(&fx.path("train.jsonl"), &train_set).unwrap();

    let store = run_profiling(&pool, &profiling, &pool.client().unwrap(), &ProfilingConfig::default())
        .unwrap()
        .store;
    store.save(&fx.path("profiles.json")).unwrap();

    let (cfg, embedder) = tiny_train_config();
    let params = train(&samples_from_records(&train_set, 0.1).unwrap(), &cfg, &embedder)
        .unwrap()
        .params;
    save_checkpoint(&params, &fx.path("router.json")).unwrap();

    // raw questions plus a scripted annotator for `curate`
    let raw: Vec<QuestionRecord> = all
        .iter()
        .map(|q| QuestionRecord { subjects: None, ..q.clone() })
        .collect();
    write_jsonl(&fx.path("raw.jsonl"), &raw).unwrap();
    let table: BTreeMap<String, String> = all.iter().map(|q| (q.id.clone(), keywords_reply(q))).collect();
    let annotator = BackendConfig::mock(
        "annotator",
        vec![MockRule::new(
            MockMatch::Any,
            MockReply::Lookup {
                lookup: LookupReply { field: MetaField::QuestionId, table, default: None },
            },
        )],
    );
    write_json(&fx.path("backends.json"), &serde_json::json!({ "backends": [annotator] })).unwrap();
    fx
}

pub fn exists(path: &Path) -> bool {
    path.is_file() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false)
}

//! Subject-aware routing for multi-subject questions.
//!
//! A question is mapped to a small directed graph over academic subjects
//! (an S-DAG), each subject is answered by the pooled model with the best
//! measured capability for it, and the graph is executed as a prompt
//! pipeline from supporting experts to the dominant one.
//!
//! Modules, bottom-up:
//! - [`subject`]: taxonomy, annotations, graphs and the ground-truth rule.
//! - [`backend`]: chat-completion backends with call accounting.
//! - [`curation`]: LLM subject annotation and dataset splits.
//! - [`embedding`]: question embeddings.
//! - [`router`]: the trainable graph router.
//! - [`profiling`]: model capability profiles and selection.
//! - [`orchestrator`]: multi-agent execution.
//! - [`eval`]: the benchmark harness.
//! - [`synth`]: synthetic questions and an oracle model pool.

pub mod backend;
pub mod curation;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod orchestrator;
pub mod profiling;
pub mod router;
pub mod subject;
pub mod synth;

pub use error::{Error, Result};
pub use subject::{build_ground_truth_dag, parse_subject, validate_dag, QuestionRecord, SDag, Subject, SubjectWeights};

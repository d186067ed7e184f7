//! Train a router on synthetic questions, profile an oracle pool and
//! compare every execution mode.
//!
//! ```text
//! cargo run --release --example ablation_eval -- [epochs]
//! ```

use sdag::embedding::EmbedderConfig;
use sdag::eval::{evaluate_with, render_report, EvalConfig, EvalContext, EvalMode, ReportFormat, Router};
use sdag::profiling::{run_profiling, ProfilingConfig};
use sdag::router::{samples_from_records, train, RouterDims, TrainConfig};
use sdag::synth::{generate, oracle_pool, SynthConfig};

fn main() -> sdag::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let train_set = generate(&SynthConfig { count: 500, seed: 1, ..SynthConfig::default() })?;
    let profiling_set = generate(&SynthConfig { count: 200, seed: 3, ..SynthConfig::default() })?;
    let test_set = generate(&SynthConfig { count: 100, seed: 2, ..SynthConfig::default() })?;

    let embedder = EmbedderConfig::Hashed { dim: 1024 };
    let cfg = TrainConfig {
        dims: RouterDims { subject_dim: 32, question_dim: 1024, hidden: 64, layers: 2, head_hidden: 32, ..RouterDims::default() },
        learning_rate: 3e-3,
        epochs,
        seed: 7,
        ..TrainConfig::default()
    };
    let params = train(&samples_from_records(&train_set, 0.1)?, &cfg, &embedder)?.params;

    let all: Vec<_> = profiling_set.iter().chain(&test_set).cloned().collect();
    let pool = oracle_pool(&all, [200.0, 800.0])?;
    let profiles = run_profiling(&pool, &profiling_set, &pool.client()?, &ProfilingConfig::default())?.store;

    let ctx = EvalContext::new(pool)?.with_router(Router::new(params)?).with_profiles(profiles);
    let eval_cfg = EvalConfig {
        modes: vec![EvalMode::Sdag, EvalMode::Fcg, EvalMode::NoGnn, EvalMode::RandomModel, EvalMode::SingleCot],
        include_traces: false,
        ..EvalConfig::default()
    };
    let report = evaluate_with(&eval_cfg, &ctx, &test_set)?;
    print!("{}", render_report(&report, ReportFormat::Text));
    Ok(())
}

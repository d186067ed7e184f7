//! Execute one question as a subject graph and as a fully connected graph,
//! then print both traces.
//!
//! ```text
//! cargo run --example run_pipeline
//! ```

use sdag::orchestrator::{execute_dag, execute_fcg, ExecConfig, Selection};
use sdag::profiling::{run_profiling, select_model, ProfilingConfig};
use sdag::synth::{generate, oracle_pool, question_from_weights, SynthConfig};
use sdag::{build_ground_truth_dag, Subject, SubjectWeights};

fn main() -> sdag::Result<()> {
    let cfg = SynthConfig::default();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let weights = SubjectWeights::from_pairs([(Subject::Physics, 0.5), (Subject::Math, 0.3), (Subject::Engineering, 0.2)]);
    let question = question_from_weights("demo-0".into(), &weights, &cfg, &mut rng)?;

    let mut questions = generate(&SynthConfig { count: 100, seed: 5, ..cfg })?;
    questions.push(question.clone());
    let pool = oracle_pool(&questions, [100.0, 400.0])?;
    let client = pool.client()?;
    let store = run_profiling(&pool, &questions[..100], &client, &ProfilingConfig::default())?.store;

    let g = build_ground_truth_dag(&weights, 0.1)?;
    let selection: Selection = g
        .subjects()
        .into_iter()
        .map(|s| Ok((s, pool.entry(&select_model(s, &store)?).expect("profiled model").clone())))
        .collect::<sdag::Result<_>>()?;

    println!("question: {}", question.prompt_text());
    let dag = execute_dag(&g, &question, &selection, &client, &ExecConfig::default())?;
    print!("{}", dag.to_jsonl());
    let nodes: Vec<(Subject, f64)> = g.nodes.iter().map(|n| (n.subject, n.score)).collect();
    let fcg = execute_fcg(&nodes, &question, &selection, &client, &ExecConfig::default())?;
    println!(
        "graph: {} calls, {:.0} ms, answer {:?}; fully connected: {} calls, {:.0} ms, answer {:?}; gold {}",
        dag.calls, dag.total_ms, dag.final_answer, fcg.calls, fcg.total_ms, fcg.final_answer, question.gold
    );
    Ok(())
}

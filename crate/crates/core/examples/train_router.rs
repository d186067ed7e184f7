//! Train the subject router on synthetic questions and report held-out
//! routing F1.
//!
//! ```text
//! cargo run --release --example train_router -- [epochs] [train_size]
//! ```

use std::time::Instant;

use sdag::embedding::EmbedderConfig;
use sdag::router::{routing_metrics, samples_from_records, train, GenerateConfig, RouterDims, TrainConfig};
use sdag::synth::{generate, SynthConfig};

fn main() -> sdag::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|a| a.parse().ok()).unwrap_or(20);
    let train_size = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(500);

    let train_set = generate(&SynthConfig { count: train_size, seed: 1, ..SynthConfig::default() })?;
    let test_set = generate(&SynthConfig { count: 200, seed: 2, ..SynthConfig::default() })?;
    let train_samples = samples_from_records(&train_set, 0.1)?;
    let test_samples = samples_from_records(&test_set, 0.1)?;

    let embedder = EmbedderConfig::Hashed { dim: 1024 };
    let cfg = TrainConfig {
        dims: RouterDims {
            subject_dim: 32,
            question_dim: 1024,
            hidden: 64,
            layers: 2,
            head_hidden: 32,
            ..RouterDims::default()
        },
        learning_rate: 3e-3,
        epochs,
        seed: 7,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let outcome = train(&train_samples, &cfg, &embedder)?;
    let elapsed = start.elapsed();
    for (e, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.5}", e + 1);
    }

    let m = routing_metrics(&test_samples, &outcome.params, embedder.build()?.as_ref(), &GenerateConfig::default())?;
    println!(
        "trained {} parameters in {:.1}s; held-out node F1 {:.3}, edge F1 {:.3}, exact {}/{}",
        outcome.params.num_parameters(),
        elapsed.as_secs_f64(),
        m.node_f1(),
        m.edge_f1(),
        m.exact,
        m.samples
    );
    Ok(())
}

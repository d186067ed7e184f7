//! Check the hand-derived router gradients against central finite
//! differences on random parameters, embeddings and labels.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sdag::router::{gradient_check, GradCheckReport, Labels, LossWeights, RouterDims, RouterParams};
use sdag::subject::NUM_SUBJECTS;

fn main() -> sdag::Result<()> {
    let dims = RouterDims {
        subject_dim: 8,
        question_dim: 8,
        hidden: 8,
        layers: 2,
        head_hidden: 8,
        ..RouterDims::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(0.0, 0.2).expect("positive scale");
    let unit = Normal::new(0.0, 1.0).expect("positive scale");

    let mut params = RouterParams::init(dims, 11)?;
    for (_, tensor) in params.tensors_mut() {
        for v in tensor.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }

    let start = Instant::now();
    let mut total = GradCheckReport::default();
    for _ in 0..20 {
        let question: Vec<f64> = (0..dims.question_dim).map(|_| unit.sample(&mut rng)).collect();
        let mut labels = Labels {
            nodes: [0.0; NUM_SUBJECTS],
            edges: [[0.0; NUM_SUBJECTS]; NUM_SUBJECTS],
        };
        for n in labels.nodes.iter_mut() {
            *n = f64::from(rng.random_bool(0.3));
        }
        for (i, row) in labels.edges.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                if i != j {
                    *e = f64::from(rng.random_bool(0.2));
                }
            }
        }
        total.merge(gradient_check(&params, &question, &labels, LossWeights::default(), 1e-5)?);
    }
    println!(
        "checked {} partial derivatives ({} skipped at kinks) in {:.2}s: max relative error {:.3e}, max absolute error {:.3e} (worst at {:?})",
        total.checked,
        total.kinks,
        start.elapsed().as_secs_f64(),
        total.max_rel_error,
        total.max_abs_error,
        total.worst
    );
    Ok(())
}

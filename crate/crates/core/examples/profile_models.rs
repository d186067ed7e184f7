//! Profile a pool of mock specialists and pick a model per subject.
//!
//! ```text
//! cargo run --example profile_models
//! ```

use sdag::profiling::{run_profiling, select_model, ProfilingConfig};
use sdag::synth::{generate, oracle_pool, SynthConfig};
use sdag::Subject;

fn main() -> sdag::Result<()> {
    let questions = generate(&SynthConfig { count: 200, seed: 9, ..SynthConfig::default() })?;
    let pool = oracle_pool(&questions, [100.0, 400.0])?;
    let client = pool.client()?;
    let outcome = run_profiling(&pool, &questions, &client, &ProfilingConfig::default())?;
    let store = &outcome.store;
    println!(
        "{} calls over {} questions, profiling set {}",
        store.provenance.calls,
        store.provenance.questions,
        &store.provenance.profiling_set_hash[..12]
    );
    for s in Subject::ALL {
        let id = select_model(s, store)?;
        println!("{:<18} -> {id} (capability {:.3})", s.name(), store.profiles[&id].capability(s));
    }
    Ok(())
}

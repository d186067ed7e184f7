//! Annotate raw questions three times with a scripted annotator, merge the
//! rounds by consensus and split the result.
//!
//! ```text
//! cargo run --example curate_dataset
//! ```

use std::collections::BTreeMap;

use sdag::backend::{BackendConfig, LlmClient, LookupReply, MetaField, MockMatch, MockReply, MockRule};
use sdag::curation::{curate_dataset, CurateConfig};
use sdag::synth::{generate, SynthConfig};

fn keywords_line(pairs: impl Iterator<Item = (String, f64)>) -> String {
    let groups: Vec<String> = pairs.map(|(s, w)| format!("<{s} {w:.2}>")).collect();
    format!("Keywords: {}", groups.join(", "))
}

fn main() -> sdag::Result<()> {
    let mut raw = generate(&SynthConfig { count: 60, seed: 3, ..SynthConfig::default() })?;

    // Every round repeats the planted weights; round 1 adds a stray subject
    // to every third question, which consensus must drop.
    let mut truth = BTreeMap::new();
    let mut noisy = BTreeMap::new();
    let mut planted = BTreeMap::new();
    for (i, q) in raw.iter_mut().enumerate() {
        let w = q.subjects.take().expect("synthetic questions carry weights");
        let pairs: Vec<(String, f64)> = w.iter().map(|(s, v)| (s.name().to_string(), v)).collect();
        planted.insert(q.id.clone(), w.subjects().collect::<Vec<_>>());
        truth.insert(q.id.clone(), keywords_line(pairs.clone().into_iter()));
        if i % 3 == 0 {
            let extra = pairs.into_iter().chain([("History".to_string(), 0.1)]);
            noisy.insert(q.id.clone(), keywords_line(extra));
        }
    }
    let lookup = |table| MockReply::Lookup {
        lookup: LookupReply { field: MetaField::QuestionId, table, default: None },
    };
    let annotator = BackendConfig::mock(
        "annotator",
        vec![
            MockRule::new(
                MockMatch::Metadata { field: MetaField::Purpose, equals: "annotation:1".into() },
                lookup(noisy),
            ),
            MockRule::new(MockMatch::Any, lookup(truth)),
        ],
    );
    let client = LlmClient::from_configs(&[annotator])?;
    let cfg = CurateConfig { profiling_size: 10, ..CurateConfig::default() };
    let outcome = curate_dataset(&raw, &client, &cfg)?;

    let stats = &outcome.dataset.stats;
    println!(
        "train {} / test {} / profiling {}; {:.2} subjects per question on average",
        stats.train, stats.test, stats.profiling, stats.avg_subjects
    );
    println!("annotation calls: {}, skipped: {}", client.counter().total(), outcome.skipped.len());
    let changed = outcome
        .dataset
        .records
        .iter()
        .filter(|r| {
            let id = r.id.trim_end_matches("#profiling");
            let kept: Vec<_> = r.subjects.as_ref().map(|w| w.subjects().collect()).unwrap_or_default();
            planted.get(id) != Some(&kept)
        })
        .count();
    println!("records whose subject set differs from the planted one: {changed}");
    Ok(())
}

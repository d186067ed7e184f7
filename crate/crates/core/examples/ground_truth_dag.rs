//! Build supervision graphs from annotated subject weights.
//!
//! ```text
//! cargo run --example ground_truth_dag
//! ```

use sdag::subject::{build_ground_truth_dag, validate_dag, Subject, SubjectWeights};

fn show(weights: &[(Subject, f64)]) -> sdag::Result<()> {
    let w = SubjectWeights::from_pairs(weights.iter().copied());
    let g = build_ground_truth_dag(&w, 0.1)?;
    let nodes: Vec<String> = g
        .nodes
        .iter()
        .map(|n| {
            let mark = if g.out_degree(n.subject) == 0 { "*" } else { "" };
            format!("{}{mark} {:.3}", n.subject, n.score)
        })
        .collect();
    let edges: Vec<String> = g.edges.iter().map(|e| format!("{} -> {}", e.src, e.dst)).collect();
    println!("{weights:?}");
    println!("  nodes: {}", nodes.join(", "));
    println!("  edges: {}", if edges.is_empty() { "none".into() } else { edges.join(", ") });
    println!("  valid: {}", validate_dag(&g).is_valid());
    Ok(())
}

fn main() -> sdag::Result<()> {
    show(&[(Subject::Math, 0.5), (Subject::Physics, 0.3), (Subject::Biology, 0.2)])?;
    show(&[
        (Subject::Chemistry, 0.6),
        (Subject::Math, 0.25),
        (Subject::Biology, 0.10),
        (Subject::History, 0.05),
    ])?;
    show(&[(Subject::Physics, 0.5), (Subject::Math, 0.5)])?;
    Ok(())
}

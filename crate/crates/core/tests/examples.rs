//! The quick examples run to completion. `cargo test` builds every example
//! next to the test binaries.

use std::path::PathBuf;
use std::process::Command;

fn example(name: &str) -> PathBuf {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let path = deps.parent().unwrap().join("examples").join(name);
    assert!(path.is_file(), "{} not built; run `cargo test` without a target filter", path.display());
    path
}

fn run(name: &str) -> String {
    let out = Command::new(example(name)).output().unwrap();
    assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn ground_truth_dag() {
    let text = run("ground_truth_dag");
    assert!(text.contains("edges: Physics -> Math, Biology -> Math"));
    assert!(text.contains("edges: none"));
}

#[test]
fn hashed_embedding() {
    assert!(run("hashed_embedding").contains("cos(text 0, text 1)"));
}

#[test]
fn curate_dataset() {
    assert!(run("curate_dataset").contains("differs from the planted one: 0"));
}

#[test]
fn profile_models() {
    assert!(run("profile_models").contains("Physics            -> expert-physics"));
}

#[test]
fn run_pipeline() {
    let text = run("run_pipeline");
    assert!(text.contains("graph: 3 calls") && text.contains("fully connected: 6 calls"), "{text}");
}

#[test]
fn gradient_check() {
    assert!(run("gradient_check").contains("max relative error"));
}

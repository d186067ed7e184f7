//! Feature-hashed bag-of-words embeddings and their cosine similarities.
//!
//! ```text
//! cargo run --example hashed_embedding
//! ```

use sdag::embedding::{tokenize, Embedder, HashedEmbedder};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn main() -> sdag::Result<()> {
    let embedder = HashedEmbedder::new(256)?;
    let texts = [
        "Compute the momentum of a photon with the given velocity.",
        "A photon's momentum depends on its wavelength.",
        "Which statute governs the plaintiff's contract claim?",
    ];
    println!("tokens of the first text: {:?}", tokenize(texts[0]));
    let vectors = texts.iter().map(|t| embedder.embed(t)).collect::<sdag::Result<Vec<_>>>()?;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i + 1) {
            println!("cos(text {i}, text {j}) = {:.3}", cosine(a.as_slice(), b.as_slice()));
        }
    }
    Ok(())
}

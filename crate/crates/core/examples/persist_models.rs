//! Save a trained model directory, load it back and check that the
//! answers agree.
//!
//! cargo run --release --example persist_models -- [dir]

use std::path::PathBuf;

use stc::engine::{load_models, save_models};
use stc::pipeline::{run_synthetic, PipelineConfig};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("stc-models"));
    let corpus = generate(&SyntheticConfig {
        seed: 9,
        posts: 300,
        queries: 20,
        ..Default::default()
    });
    let out = run_synthetic(&corpus, &PipelineConfig::synthetic(9))?;

    let manifest = save_models(&out.registry, &dir)?;
    println!("saved to {}", dir.display());
    for f in &manifest.files {
        println!("    {:<14} {}", f.name, &f.sha256[..16]);
    }

    let loaded = load_models(&dir)?;
    for (qid, q) in &corpus.queries {
        let a = out.registry.respond(q, 5)?;
        let b = loaded.respond(q, 5)?;
        assert_eq!(a, b, "{qid}");
    }
    println!("{} queries answered identically", corpus.queries.len());
    Ok(())
}

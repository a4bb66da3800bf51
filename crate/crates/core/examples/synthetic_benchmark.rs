//! Train every matcher on the planted-topic corpus and print the
//! feature-set comparison grid.
//!
//! cargo run --release --example synthetic_benchmark -- [seed]

use std::time::Instant;

use stc::pipeline::{run_synthetic, PipelineConfig};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let start = Instant::now();
    let corpus = generate(&SyntheticConfig {
        seed,
        ..Default::default()
    });
    let out = run_synthetic(&corpus, &PipelineConfig::synthetic(seed))?;
    let t = &out.trained;
    println!(
        "{} raw pairs, {} after cleaning, {} words, {} queries",
        corpus.repository.len(),
        t.repository.len(),
        t.vocab.len(),
        out.benchmark.len()
    );
    let pool: Vec<usize> = out.benchmark.iter().map(|q| q.candidates.len()).collect();
    println!(
        "pool size: max {}, mean {:.1}",
        pool.iter().max().unwrap_or(&0),
        pool.iter().sum::<usize>() as f64 / pool.len().max(1) as f64
    );
    println!("{}", out.grid.render());
    println!("finished in {:.1?}", start.elapsed());
    Ok(())
}

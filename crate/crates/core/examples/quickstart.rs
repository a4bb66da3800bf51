//! Train every model on a small synthetic corpus and answer a message.
//!
//! cargo run --release --example quickstart

use stc::pipeline::{run_synthetic, PipelineConfig};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let corpus = generate(&SyntheticConfig {
        seed: 7,
        posts: 300,
        queries: 20,
        ..Default::default()
    });
    let out = run_synthetic(&corpus, &PipelineConfig::synthetic(7))?;
    let (qid, query) = &corpus.queries[0];
    println!("{qid}: {}", query.words().collect::<Vec<_>>().join(" "));

    let response = out.registry.respond(query, 3)?;
    for c in &response.candidates {
        println!("#{} pair {} score {:.3}: {}", c.rank, c.pair_id, c.score, c.response);
        let mut top: Vec<_> = c.features.iter().collect();
        top.sort_by(|a, b| b.contribution.abs().total_cmp(&a.contribution.abs()));
        for f in top.iter().take(3) {
            println!(
                "    {:<22} raw {:>8.4}  contribution {:>7.3}",
                f.name, f.raw, f.contribution
            );
        }
    }
    Ok(())
}

//! Learn post-to-comment word translations with IBM Model 1 and score
//! candidate pairs with the translation language model.

use stc::corpus::{build_vocabulary, clean_pairs, CleaningConfig};
use stc::synthetic::{generate, SyntheticConfig};
use stc::translm::{train_ibm1, translm_logscore, CollectionLm, Ibm1Config, TransLmConfig};

fn main() -> stc::Result<()> {
    let corpus = generate(&SyntheticConfig {
        seed: 2,
        posts: 200,
        ..Default::default()
    });
    let (repo, _) = clean_pairs(&corpus.repository, &CleaningConfig::default());
    let vocab = build_vocabulary(&repo)?;
    let cfg = Ibm1Config {
        em_iters: 8,
        min_freq: 3,
        ..Default::default()
    };
    let trained = train_ibm1(&repo, &cfg, vocab.tag())?;
    for (i, ll) in trained.log_likelihood.iter().enumerate() {
        println!("iteration {i}: log-likelihood {ll:.1}");
    }

    let table = &trained.table;
    if let Some(source) = table.sources().next() {
        let mut row = table.row(source);
        row.sort_by(|a, b| b.1.total_cmp(&a.1));
        println!("top translations of `{source}`:");
        for (w, p) in row.iter().take(5) {
            println!("    {w:<12} {p:.4}");
        }
    }

    let collection = CollectionLm::from_repository(&repo);
    let (_, q) = &corpus.queries[0];
    let lm = TransLmConfig::default();
    let mut scored: Vec<(u32, f64)> = repo
        .iter()
        .map(|p| (p.pair_id, translm_logscore(table, &lm, q, p, &collection).per_word()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("query: {}", q.words().collect::<Vec<_>>().join(" "));
    for (id, s) in scored.iter().take(3) {
        println!(
            "    pair {id}: {s:.3} per word: {}",
            repo.get(*id).unwrap().comment.words().collect::<Vec<_>>().join(" ")
        );
    }
    Ok(())
}

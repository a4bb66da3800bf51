//! Train the sparse bilinear latent matcher and compare scores of true
//! and shuffled pairs.

use stc::corpus::{build_vocabulary, clean_pairs, CleaningConfig};
use stc::latent::{match_vector, train_latent, LatentTrainConfig};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let corpus = generate(&SyntheticConfig {
        seed: 4,
        posts: 300,
        ..Default::default()
    });
    let (repo, _) = clean_pairs(&corpus.repository, &CleaningConfig::default());
    let vocab = build_vocabulary(&repo)?;
    let pairs: Vec<_> = repo
        .iter()
        .map(|p| (match_vector(&p.post, &vocab), match_vector(&p.comment, &vocab)))
        .collect();

    let cfg = LatentTrainConfig {
        dim: 20,
        epochs: 10,
        negative_sampling: true,
        seed: 4,
        ..Default::default()
    };
    let model = train_latent(&pairs, vocab.len(), vocab.tag(), &cfg)?;
    println!(
        "objective {:.4}, feasible {}",
        model.objective(&pairs),
        model.is_feasible(1e-6)
    );

    let n = pairs.len();
    let true_mean = pairs.iter().map(|(q, r)| model.score(q, r)).sum::<f64>() / n as f64;
    let shuffled_mean = (0..n)
        .map(|i| model.score(&pairs[i].0, &pairs[(i + n / 2) % n].1))
        .sum::<f64>()
        / n as f64;
    println!("mean score: true pairs {true_mean:.4}, shuffled {shuffled_mean:.4}");
    Ok(())
}

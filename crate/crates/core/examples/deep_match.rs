//! Learn topic patches by Gibbs sampling, then train the deep matching
//! network on (post, comment, random comment) triples.

use stc::corpus::{build_vocabulary, clean_pairs, CleaningConfig};
use stc::deepmatch::{
    learn_topics, repository_triples, train_deepmatch, DeepMatchConfig, DeepMatchModel, DeepMatchTrainConfig,
    GibbsConfig,
};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let corpus = generate(&SyntheticConfig {
        seed: 6,
        posts: 1000,
        ..Default::default()
    });
    let (repo, _) = clean_pairs(&corpus.repository, &CleaningConfig::default());
    let vocab = build_vocabulary(&repo)?;

    let topics = learn_topics(
        &repo,
        &vocab,
        &GibbsConfig {
            topics: 10,
            words_per_side: 30,
            iterations: 60,
            max_df_ratio: 0.03,
            seed: 6,
            ..Default::default()
        },
    )?;
    for w in &topics.warnings {
        eprintln!("warning: {w}");
    }
    for p in topics.patches.iter().take(3) {
        let words: Vec<&str> = p.x_words.iter().take(6).map(|&id| vocab.word(id)).collect();
        println!("patch {}: {}", p.k, words.join(" "));
    }

    let model = DeepMatchModel::new(topics.patches, &DeepMatchConfig::default(), vocab.tag())?;
    let triples = repository_triples(&repo, &vocab, 1, 6);
    let (train, held) = triples.split_at(triples.len() * 4 / 5);
    let cfg = DeepMatchTrainConfig {
        seed: 6,
        ..Default::default()
    };
    let before = model.objective(train, &cfg);
    let model = train_deepmatch(model, train, &cfg)?;
    println!("objective {before:.3} -> {:.3}", model.objective(train, &cfg));

    let ordered = held
        .iter()
        .filter(|t| model.forward(&t.x, &t.y_plus) > model.forward(&t.x, &t.y_minus))
        .count();
    println!("held-out triples ordered: {ordered} of {}", held.len());
    Ok(())
}

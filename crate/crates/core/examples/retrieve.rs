//! Build the inverted index and run the three first-stage retrievers.

use stc::corpus::{build_vocabulary, clean_pairs, tfidf_vector, CleaningConfig};
use stc::index::{build_index, stage1_candidates, Side, Source, Stage1Config};
use stc::latent::{match_vector, train_latent, LatentTrainConfig};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let corpus = generate(&SyntheticConfig {
        seed: 5,
        posts: 200,
        ..Default::default()
    });
    let (repo, _) = clean_pairs(&corpus.repository, &CleaningConfig::default());
    let vocab = build_vocabulary(&repo)?;
    let index = build_index(&repo, &vocab);

    let (qid, q) = &corpus.queries[0];
    let qv = tfidf_vector(q, &vocab);
    println!("{qid}: {}", q.words().collect::<Vec<_>>().join(" "));
    for (name, side) in [("post", Side::Post), ("comment", Side::Comment)] {
        let hits = index.retrieve_cosine(&qv, side, 3);
        println!("best {name} matches: {hits:?}");
    }

    let pairs: Vec<_> = repo
        .iter()
        .map(|p| (match_vector(&p.post, &vocab), match_vector(&p.comment, &vocab)))
        .collect();
    let cfg = LatentTrainConfig {
        dim: 10,
        epochs: 5,
        ..Default::default()
    };
    let latent = train_latent(&pairs, vocab.len(), vocab.tag(), &cfg)?;

    let set = stage1_candidates(&index, &repo, &vocab, Some(&latent), qid, q, &Stage1Config::default());
    for source in [Source::Q2R, Source::Q2P, Source::Latent] {
        println!("{source:?}: {} candidates", set.from_source(source).count());
    }
    println!("merged pool: {:?}", set.merged());
    Ok(())
}

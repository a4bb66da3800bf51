//! Fit the topic-word classifier on labeled words and show which words
//! of a message it treats as topical.

use stc::corpus::{build_vocabulary, clean_pairs, CleaningConfig};
use stc::synthetic::{generate, SyntheticConfig};
use stc::topicword::{accuracy, topic_words, train_topicword, training_examples, TopicWordConfig};

fn main() -> stc::Result<()> {
    let corpus = generate(&SyntheticConfig {
        seed: 8,
        posts: 200,
        ..Default::default()
    });
    let (repo, _) = clean_pairs(&corpus.repository, &CleaningConfig::default());
    let vocab = build_vocabulary(&repo)?;
    let labeled: Vec<_> = corpus
        .labeled_words
        .iter()
        .filter(|l| repo.get(l.text_id.pair_id).is_some())
        .cloned()
        .collect();
    let data = training_examples(&labeled, &repo, &vocab)?;
    let (train, test) = data.split_at(data.len() * 4 / 5);

    let model = train_topicword(train, &TopicWordConfig::default())?;
    println!(
        "{} labeled words, held-out accuracy {:.3}",
        data.len(),
        accuracy(&model, test)
    );
    println!("weights {:?}", model.weights.map(|w| (w * 100.0).round() / 100.0));

    let (_, q) = &corpus.queries[0];
    println!("query: {}", q.words().collect::<Vec<_>>().join(" "));
    println!("topic words: {:?}", topic_words(q, &model, &vocab, 0.5));
    Ok(())
}

//! Fit a RankingSVM on a handful of judged candidates.

use stc::features::{Feature, FeatureSchema, FeatureVector};
use stc::ranker::{
    build_preference_pairs, pairwise_accuracy, rank_score, train_ranksvm, Label, LabeledCandidate, RankSvmConfig,
};

fn candidate(query: &str, pair_id: u32, suitable: bool, sim_q2r: f64, sim_q2p: f64) -> LabeledCandidate {
    LabeledCandidate {
        query_id: query.to_string(),
        pair_id,
        label: if suitable { Label::Suitable } else { Label::Unsuitable },
        features: FeatureVector::new(vec![sim_q2r, sim_q2p]),
    }
}

fn main() -> stc::Result<()> {
    let schema = FeatureSchema::new(vec![Feature::SimQ2R, Feature::SimQ2P])?;
    let data = vec![
        candidate("q1", 1, true, 0.6, 0.3),
        candidate("q1", 2, false, 0.2, 0.4),
        candidate("q1", 3, false, 0.1, 0.1),
        candidate("q2", 4, true, 0.5, 0.6),
        candidate("q2", 5, true, 0.7, 0.2),
        candidate("q2", 6, false, 0.3, 0.5),
    ];
    let pairs = build_preference_pairs(&data);
    let model = train_ranksvm(&pairs, &schema, &RankSvmConfig::default())?;
    println!("{} preference pairs", pairs.len());
    for (name, w) in schema.names().iter().zip(&model.weights) {
        println!("    {name:<8} {w:+.4}");
    }
    println!("training pairwise accuracy {:.2}", pairwise_accuracy(&model, &pairs)?);

    let mut out = Vec::new();
    model.write_to(&mut out)?;
    print!("{}", String::from_utf8_lossy(&out));

    for c in &data {
        println!(
            "pair {} ({:?}): {:.3}",
            c.pair_id,
            c.label,
            rank_score(&model, &c.features)?
        );
    }
    Ok(())
}

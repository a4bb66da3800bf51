//! Cross-validate two feature sets on judged pools and test the
//! difference in average precision.

use stc::eval::{cross_validate, paired_ttest};
use stc::features::FeatureSchema;
use stc::pipeline::{build_benchmark, train_matchers, PipelineConfig};
use stc::synthetic::{generate, SyntheticConfig};

fn main() -> stc::Result<()> {
    let seed = 11;
    let corpus = generate(&SyntheticConfig {
        seed,
        posts: 400,
        queries: 30,
        ..Default::default()
    });
    let cfg = PipelineConfig::synthetic(seed);
    let trained = train_matchers(&corpus.repository, &corpus.labeled_words, &cfg)?;
    let bench = build_benchmark(&trained, &corpus.queries, |q, id| corpus.judge(q, id), &cfg)?;

    let full = FeatureSchema::full();
    let base = cross_validate(&bench, &full, &FeatureSchema::baseline(), &cfg.cv)?;
    let all = cross_validate(&bench, &full, &full, &cfg.cv)?;
    for (name, r) in [("baseline", &base), ("full", &all)] {
        println!("{name:<9} MAP {:.4}  P@1 {:.4}  skipped {}", r.map, r.p_at_1, r.skipped);
    }

    let (a, b) = (all.ap_by_query(), base.ap_by_query());
    let ids: Vec<&str> = a.keys().filter(|k| b.contains_key(*k)).copied().collect();
    let xs: Vec<f64> = ids.iter().map(|k| a[k]).collect();
    let ys: Vec<f64> = ids.iter().map(|k| b[k]).collect();
    match paired_ttest(&xs, &ys) {
        Ok(t) => println!("paired t = {:.3}, df = {}, p = {:.4}", t.t, t.df, t.p_value),
        Err(e) => println!("no t-test: {e}"),
    }
    Ok(())
}

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use stc::features::{Feature, FeatureSchema, FeatureVector};
use stc::ranker::{
    build_preference_pairs, difference_vectors, pairwise_accuracy, primal_objective, rank_score, sort_ranking,
    standardization, train_ranksvm, Label, LabeledCandidate, PreferencePair, RankSvmConfig, RankingModel,
};

fn schema(d: usize) -> FeatureSchema {
    FeatureSchema::new(Feature::ALL[..d].to_vec()).unwrap()
}

fn candidates() -> impl Strategy<Value = Vec<LabeledCandidate>> {
    prop::collection::vec((0u8..3, any::<bool>(), prop::collection::vec(-3.0f64..3.0, 3)), 0..20).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (q, s, v))| LabeledCandidate {
                query_id: format!("q{q}"),
                pair_id: i as u32,
                label: if s { Label::Suitable } else { Label::Unsuitable },
                features: FeatureVector::new(v),
            })
            .collect()
    })
}

/// Noisy preference data: the better candidate is ahead on a fixed
/// direction most of the time.
fn noisy_pairs(seed: u64, n: usize, d: usize) -> Vec<PreferencePair> {
    let mut r = rng(seed);
    let dir: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut out = Vec::new();
    while out.len() < n {
        let a: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let gap: f64 = a.iter().zip(&b).zip(&dir).map(|((x, y), w)| (x - y) * w).sum();
        let flip = r.gen_bool(0.15);
        let (better, worse) = if (gap > 0.0) != flip { (a, b) } else { (b, a) };
        let i = out.len() as u32;
        out.push(PreferencePair {
            query_id: format!("q{}", i / 4),
            better_id: 2 * i,
            worse_id: 2 * i + 1,
            better: FeatureVector::new(better),
            worse: FeatureVector::new(worse),
        });
    }
    out
}

/// Full-batch subgradient descent on the primal with a diminishing step,
/// keeping the best iterate.
fn subgradient_optimum(diffs: &[Vec<f64>], d: usize, c: f64) -> f64 {
    let mut w = vec![0.0; d];
    let mut best = primal_objective(&w, diffs, c);
    for t in 1..=200_000 {
        let mut g = w.clone();
        for x in diffs {
            let m: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            if m < 1.0 {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi -= c * xi;
                }
            }
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.5 / (t as f64).sqrt() / norm;
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= step * gi;
        }
        best = best.min(primal_objective(&w, diffs, c));
    }
    best
}

proptest! {
    #[test]
    fn preference_pairs_match_a_nested_loop(data in candidates()) {
        let mut expected = Vec::new();
        for a in &data {
            for b in &data {
                if a.query_id == b.query_id && a.label == Label::Suitable && b.label == Label::Unsuitable {
                    expected.push((a.query_id.clone(), a.pair_id, b.pair_id));
                }
            }
        }
        let mut got: Vec<_> = build_preference_pairs(&data)
            .into_iter()
            .map(|p| (p.query_id, p.better_id, p.worse_id))
            .collect();
        got.sort();
        expected.sort();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn positive_rescaling_keeps_the_ranking(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let pairs = noisy_pairs(seed, 24, 3);
        let m = train_ranksvm(&pairs, &schema(3), &RankSvmConfig::default()).unwrap();
        let mut scaled = m.clone();
        scaled.weights.iter_mut().for_each(|w| *w *= alpha);
        let mut r = rng(seed ^ 7);
        let cands: Vec<FeatureVector> = (0..15).map(|_| FeatureVector::new((0..3).map(|_| r.gen_range(-3.0..3.0)).collect())).collect();
        let order = |m: &RankingModel| {
            let mut s: Vec<(u32, f64)> = cands.iter().enumerate().map(|(i, f)| (i as u32, rank_score(m, f).unwrap())).collect();
            sort_ranking(&mut s);
            s.into_iter().map(|(i, _)| i).collect::<Vec<_>>()
        };
        prop_assert_eq!(order(&m), order(&scaled));
    }

    #[test]
    fn standardization_is_invertible(seed in any::<u64>(), v in prop::collection::vec(-5.0f64..5.0, 3)) {
        let pairs = noisy_pairs(seed, 12, 3);
        let m = train_ranksvm(&pairs, &schema(3), &RankSvmConfig::default()).unwrap();
        let fv = FeatureVector::new(v.clone());
        let z = m.standardize(&fv).unwrap();
        let back = m.destandardize(&z);
        for i in 0..3 {
            prop_assert!(!m.is_constant(i));
            prop_assert!((back[i] - v[i]).abs() < 1e-9);
        }
        let direct: f64 = (0..3).map(|i| m.weights[i] * (v[i] - m.mean[i]) / m.std[i]).sum();
        prop_assert!((rank_score(&m, &fv).unwrap() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }
}

#[test]
fn objective_agrees_with_a_subgradient_run() {
    for (seed, c) in [(1, 50.0), (2, 1.0), (3, 0.1)] {
        let pairs = noisy_pairs(seed, 40, 3);
        let cfg = RankSvmConfig {
            c,
            ..Default::default()
        };
        let m = train_ranksvm(&pairs, &schema(3), &cfg).unwrap();
        let (mean, std) = standardization(&pairs, 3);
        let diffs = difference_vectors(&pairs, &mean, &std);
        let ours = primal_objective(&m.weights, &diffs, c);
        let oracle = subgradient_optimum(&diffs, 3, c);
        let gap = (ours - oracle).abs() / oracle;
        assert!(gap <= 0.01, "C={c}: {ours} vs {oracle}");
    }
}

#[test]
fn separable_training_pairs_are_all_ordered() {
    let mut r = rng(5);
    let pairs: Vec<PreferencePair> = (0..30u32)
        .map(|i| {
            let worse: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
            let better = vec![worse[0] + r.gen_range(0.2..1.0), worse[1] + r.gen_range(-0.1..0.1)];
            PreferencePair {
                query_id: format!("q{}", i / 3),
                better_id: 2 * i,
                worse_id: 2 * i + 1,
                better: FeatureVector::new(better),
                worse: FeatureVector::new(worse),
            }
        })
        .collect();
    let m = train_ranksvm(&pairs, &schema(2), &RankSvmConfig::default()).unwrap();
    assert_eq!(pairwise_accuracy(&m, &pairs).unwrap(), 1.0);
}

#[test]
fn training_is_seed_deterministic() {
    let pairs = noisy_pairs(9, 50, 4);
    let cfg = RankSvmConfig {
        seed: 4,
        ..Default::default()
    };
    let a = train_ranksvm(&pairs, &schema(4), &cfg).unwrap();
    let b = train_ranksvm(&pairs, &schema(4), &cfg).unwrap();
    assert!(a
        .weights
        .iter()
        .zip(&b.weights)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn constant_features_get_zero_weight() {
    let mut pairs = noisy_pairs(3, 20, 3);
    for p in &mut pairs {
        p.better.values[1] = 4.0;
        p.worse.values[1] = 4.0;
    }
    let m = train_ranksvm(&pairs, &schema(3), &RankSvmConfig::default()).unwrap();
    assert!(m.is_constant(1));
    assert_eq!(m.weights[1], 0.0);
}

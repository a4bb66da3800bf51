mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use stc::corpus::{build_vocabulary, SparseVector};
use stc::latent::{match_vector, project_row, train_latent, LatentModel, LatentTrainConfig};

fn random_model(seed: u64, n: usize, dim: usize) -> LatentModel {
    let mut r = rng(seed);
    let lq = (0..n * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    let lr = (0..n * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    LatentModel::from_matrices(dim, lq, lr, 100.0, 100.0, "t").unwrap()
}

fn sparse(n: u32) -> impl Strategy<Value = SparseVector> {
    prop::collection::vec((0..n, -3.0f64..3.0), 0..6).prop_map(SparseVector::from_entries)
}

/// Pairs of unit TF-IDF vectors from a random repository.
fn training_pairs(seed: u64, n_posts: usize) -> (Vec<(SparseVector, SparseVector)>, usize) {
    let repo = random_repository(&mut rng(seed), n_posts);
    let vocab = build_vocabulary(&repo).unwrap();
    let pairs = repo
        .pairs()
        .iter()
        .map(|p| (match_vector(&p.post, &vocab), match_vector(&p.comment, &vocab)))
        .collect();
    (pairs, vocab.len())
}

proptest! {
    #[test]
    fn score_equals_dense_bilinear_form(seed in any::<u64>(), dim in 1usize..4, q in sparse(8), r in sparse(8)) {
        let m = random_model(seed, 8, dim);
        // M = L_q L_r^T, then q^T M r.
        let mut expected = 0.0;
        for i in 0..8u32 {
            for j in 0..8u32 {
                let mij: f64 = (0..dim).map(|c| m.query_row(i as usize)[c] * m.response_row(j as usize)[c]).sum();
                expected += q.get(i) * mij * r.get(j);
            }
        }
        prop_assert!((m.score(&q, &r) - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn projection_is_feasible(v in prop::collection::vec(-20.0f64..20.0, 1..12), mu2 in 0.1f64..3.0, extra in 0.0f64..5.0) {
        let mu1 = mu2 + extra;
        let p = project_row(&v, mu1, mu2, 0);
        let l1: f64 = p.iter().map(|x| x.abs()).sum();
        let l2: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(l1 <= mu1 + 1e-6);
        prop_assert!((l2 - mu2).abs() <= 1e-6);
    }

    #[test]
    fn rows_stay_feasible_after_every_epoch(seed in 0u64..50, negative in any::<bool>()) {
        let (pairs, n) = training_pairs(seed, 6);
        for epochs in 1..=3 {
            let cfg = LatentTrainConfig { dim: 3, epochs, negative_sampling: negative, seed, ..Default::default() };
            let m = train_latent(&pairs, n, "t", &cfg).unwrap();
            prop_assert!(m.is_feasible(1e-6));
        }
    }
}

#[test]
fn full_batch_steps_decrease_the_objective() {
    let (pairs, n) = training_pairs(2, 12);
    let pairs: Vec<_> = pairs.into_iter().take(20).collect();
    assert_eq!(pairs.len(), 20);
    let cfg = LatentTrainConfig {
        dim: 4,
        seed: 2,
        ..Default::default()
    };
    let mut m = LatentModel::init(n, n, &cfg, "t").unwrap();
    let mut last = m.objective(&pairs);
    let start = last;
    for step in 0..10 {
        m.full_batch_step(&pairs, 0.01);
        let obj = m.objective(&pairs);
        assert!(obj <= last + 1e-12, "step {step}: {last} -> {obj}");
        assert!(m.is_feasible(1e-6));
        last = obj;
    }
    assert!(last < start);
}

#[test]
fn same_seed_gives_bitwise_identical_models() {
    let (pairs, n) = training_pairs(5, 10);
    let cfg = LatentTrainConfig {
        dim: 5,
        epochs: 3,
        negative_sampling: true,
        seed: 9,
        ..Default::default()
    };
    let a = train_latent(&pairs, n, "t", &cfg).unwrap();
    let b = train_latent(&pairs, n, "t", &cfg).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_to(&mut x).unwrap();
    b.write_to(&mut y).unwrap();
    assert_eq!(x, y);
}

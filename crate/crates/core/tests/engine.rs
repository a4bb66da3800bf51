mod common;

use std::fs;

use common::*;
use sha2::{Digest, Sha256};
use stc::corpus::{build_vocabulary, Repository};
use stc::engine::{
    load_models, read_manifest, save_models, ModelParts, ModelRegistry, INDEX_FILE, MANIFEST_FILE, RANKER_FILE,
};
use stc::features::{Feature, FeatureSchema};
use stc::index::{build_index, stage1_candidates, Stage1Config};
use stc::ranker::{sort_ranking, RankingModel};
use stc::Error;

fn registry(seed: u64, weights: [f64; 2]) -> ModelRegistry {
    let repo = random_repository(&mut rng(seed), 25);
    let vocab = build_vocabulary(&repo).unwrap();
    let index = build_index(&repo, &vocab);
    let ranker = RankingModel {
        schema: FeatureSchema::new(vec![Feature::SimQ2R, Feature::SimQ2P]).unwrap(),
        weights: weights.to_vec(),
        mean: vec![0.0; 2],
        std: vec![1.0; 2],
        c: 50.0,
    };
    ModelRegistry::new(ModelParts {
        repository: repo,
        vocab,
        index,
        ranker,
        latent: None,
        translation: None,
        deepmatch: None,
        topicword: None,
        stage1: Stage1Config::default(),
    })
    .unwrap()
}

#[test]
fn a_verbatim_post_ranks_first() {
    for seed in 0..10 {
        let reg = registry(seed, [0.1, 5.0]);
        for pair in reg.repository().pairs().iter().step_by(7) {
            let r = reg.respond(&pair.post, 5).unwrap();
            let top = &r.candidates[0];
            assert_eq!(top.rank, 1);
            // Posts that repeat the query's words tie with it on cosine.
            let sim_q2p = top.features.iter().find(|f| f.name == "sim_q2p").unwrap().raw;
            assert!((sim_q2p - 1.0).abs() < 1e-12, "seed {seed} pair {}", pair.pair_id);
            if r.candidates.iter().all(|c| c.post != pair.post.to_string()) {
                panic!("seed {seed}: verbatim post missing from the top 5");
            }
        }
    }
}

#[test]
fn ranking_equals_a_recomputation() {
    let reg = registry(3, [1.0, 0.5]);
    let p = reg.parts();
    for q in [text("alpha beta"), text("gamma gamma delta"), text("eps")] {
        let cands = stage1_candidates(&p.index, &p.repository, &p.vocab, None, "", &q, &p.stage1).merged();
        let mut expected: Vec<(u32, f64)> = cands.iter().map(|&id| (id, reg.score(&q, id).unwrap())).collect();
        sort_ranking(&mut expected);

        let all = reg.respond(&q, 1000).unwrap();
        assert_eq!(all.candidates.len(), cands.len());
        let got: Vec<(u32, f64)> = all.candidates.iter().map(|c| (c.pair_id, c.score)).collect();
        assert_eq!(got, expected);
        for c in &all.candidates {
            let total: f64 = c.features.iter().map(|f| f.contribution).sum();
            assert!((total - c.score).abs() < 1e-12);
            assert_eq!(c.response, p.repository.get(c.pair_id).unwrap().comment.to_string());
        }
        let top = reg.respond(&q, 2).unwrap();
        assert_eq!(top.candidates, all.candidates[..2.min(cands.len())]);
        assert_eq!(reg.respond(&q, 4).unwrap(), reg.respond(&q, 4).unwrap());
    }
}

#[test]
fn unmatched_query_gets_a_diagnostic() {
    let reg = registry(1, [1.0, 1.0]);
    let r = reg.respond(&text("nothing-matches-this"), 5).unwrap();
    assert!(r.candidates.is_empty());
    assert!(r.diagnostic.is_some());
}

#[test]
fn saved_models_answer_identically() {
    let reg = registry(4, [0.7, 0.2]);
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_models(&reg, dir.path()).unwrap();
    assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    let loaded = load_models(dir.path()).unwrap();
    for pair in reg.repository().pairs().iter().take(10) {
        assert_eq!(
            reg.respond(&pair.comment, 5).unwrap(),
            loaded.respond(&pair.comment, 5).unwrap()
        );
    }
    assert_eq!(loaded.manifest(), manifest);
}

#[test]
fn a_missing_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    save_models(&registry(5, [1.0, 1.0]), dir.path()).unwrap();
    fs::remove_file(dir.path().join(RANKER_FILE)).unwrap();
    let err = load_models(dir.path()).unwrap_err();
    assert!(matches!(err, Error::MissingFile(_)));
    assert!(err.to_string().contains(RANKER_FILE), "{err}");

    fs::remove_file(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(load_models(dir.path()).unwrap_err().to_string().contains(MANIFEST_FILE));
}

#[test]
fn corrupted_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_models(&registry(6, [1.0, 1.0]), dir.path()).unwrap();
    let path = dir.path().join(INDEX_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_models(dir.path()).unwrap_err(), Error::Checksum(_)));

    // With a matching checksum the reader itself rejects the header.
    let manifest = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest).unwrap();
    let fixed: String = text
        .lines()
        .map(|l| match l.starts_with(&format!("file {INDEX_FILE} ")) {
            true => format!("file {INDEX_FILE} {}\n", hex::encode(Sha256::digest(&bytes))),
            false => format!("{l}\n"),
        })
        .collect();
    fs::write(&manifest, fixed).unwrap();
    assert_eq!(load_models(dir.path()).unwrap_err().to_string(), "bad index header");
}

#[test]
fn mismatched_vocabulary_tags_are_rejected() {
    let repo = random_repository(&mut rng(7), 10);
    let other: Repository = random_repository(&mut rng(8), 10);
    let vocab = build_vocabulary(&repo).unwrap();
    let other_vocab = build_vocabulary(&other).unwrap();
    assert_ne!(vocab.tag(), other_vocab.tag());
    let parts = registry(7, [1.0, 1.0]).into_parts();
    let err = ModelRegistry::new(ModelParts {
        index: build_index(&other, &other_vocab),
        ..parts
    })
    .unwrap_err();
    assert!(matches!(err, Error::VersionMismatch { .. }), "{err}");
    assert!(err.to_string().contains(INDEX_FILE));
}

#[test]
fn schema_needing_an_absent_model_is_rejected() {
    let mut parts = registry(2, [1.0, 1.0]).into_parts();
    parts.ranker.schema = FeatureSchema::new(vec![Feature::SimQ2R, Feature::TransLm]).unwrap();
    let err = ModelRegistry::new(parts).unwrap_err();
    assert!(err.to_string().contains("missing"), "{err}");
}

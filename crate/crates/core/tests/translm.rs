mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use proptest::prelude::*;
use stc::corpus::{build_vocabulary, Repository};
use stc::translm::{
    train_ibm1, train_ibm1_bitext, trans_prob, translm_logscore, unigram_prob, CollectionLm, Ibm1Config, PairScorer,
    TransLmConfig, TranslationTable,
};

type Table = BTreeMap<(String, String), f64>;

/// One EM step by enumerating every alignment of every sentence pair.
fn brute_force_em(bitext: &[(Vec<String>, Vec<String>)], t: &Table) -> (Table, f64) {
    let mut counts: Table = BTreeMap::new();
    let mut ll = 0.0;
    for (src, tgt) in bitext {
        let (i, j) = (src.len(), tgt.len());
        let mut alignments = Vec::new();
        let mut total = 0.0;
        for code in 0..i.pow(j as u32) {
            let mut a = Vec::with_capacity(j);
            let mut c = code;
            for _ in 0..j {
                a.push(c % i);
                c /= i;
            }
            let p: f64 = (0..j).map(|k| t[&(src[a[k]].clone(), tgt[k].clone())]).product();
            total += p;
            alignments.push((a, p));
        }
        ll += (total / (i as f64).powi(j as i32)).ln();
        for (a, p) in alignments {
            for k in 0..j {
                *counts.entry((src[a[k]].clone(), tgt[k].clone())).or_insert(0.0) += p / total;
            }
        }
    }
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for ((e, _), c) in &counts {
        *totals.entry(e.clone()).or_insert(0.0) += c;
    }
    let next = counts
        .into_iter()
        .map(|((e, f), c)| ((e.clone(), f), c / totals[&e]))
        .collect();
    (next, ll)
}

fn uniform(bitext: &[(Vec<String>, Vec<String>)]) -> Table {
    let targets: BTreeSet<&String> = bitext.iter().flat_map(|(_, t)| t).collect();
    let mut t = BTreeMap::new();
    for (src, tgt) in bitext {
        for e in src {
            for f in tgt {
                t.insert((e.clone(), f.clone()), 1.0 / targets.len() as f64);
            }
        }
    }
    t
}

fn bitext_strategy() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
    let side = |words: &'static [&'static str]| {
        prop::collection::vec(prop::sample::select(words), 1..4).prop_map(|v| v.into_iter().map(String::from).collect())
    };
    prop::collection::vec((side(&["a", "b", "c", "d"]), side(&["x", "y", "z"])), 1..5)
}

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(String::from).collect()
}

proptest! {
    #[test]
    fn em_matches_alignment_enumeration(bitext in bitext_strategy(), iters in 1usize..3) {
        let trained = train_ibm1_bitext(&bitext, iters, false, "t").unwrap();
        let mut t = uniform(&bitext);
        for it in 0..iters {
            let (next, ll) = brute_force_em(&bitext, &t);
            prop_assert!((trained.log_likelihood[it] - ll).abs() < 1e-9);
            t = next;
        }
        for ((e, f), p) in &t {
            prop_assert!((trained.table.prob(f, e) - p).abs() < 1e-12, "T({}|{})", f, e);
        }
    }

    #[test]
    fn em_never_lowers_the_likelihood(repo in repository_strategy(), iters in 1usize..8) {
        let cfg = Ibm1Config { em_iters: iters, min_freq: 1, null_token: false };
        let trained = train_ibm1(&repo, &cfg, "t").unwrap();
        prop_assert_eq!(trained.log_likelihood.len(), iters + 1);
        for w in trained.log_likelihood.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        for s in trained.table.row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
        for t in trained.table.sources() {
            for (_, p) in trained.table.row(t) {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn in_vocabulary_queries_score_finitely(repo in repository_strategy(), q in text_strategy(6)) {
        let table = train_ibm1(&repo, &Ibm1Config { em_iters: 2, min_freq: 1, null_token: false }, "t").unwrap().table;
        let collection = CollectionLm::from_repository(&repo);
        for pair in repo.pairs() {
            let s = translm_logscore(&table, &TransLmConfig::default(), &q, pair, &collection);
            prop_assert!(s.log_prob.is_finite() && s.log_prob <= 0.0);
            prop_assert_eq!(s.scored_words + s.skipped_words, q.token_count());
        }
    }

    #[test]
    fn collection_mixing_pulls_toward_the_collection(alpha in 0.0f64..0.95, step in 0.01f64..0.05) {
        let (repo, table, collection) = toy();
        let pair = &repo.pairs()[0];
        let cfg = |alpha: f64| TransLmConfig { alpha, ..TransLmConfig::default() };
        for w in ["a", "b", "x", "y", "c"] {
            let (lo, hi) = (cfg(alpha), cfg(alpha + step));
            let before = PairScorer::new(&table, &lo, &collection, pair).word_prob(w);
            let after = PairScorer::new(&table, &hi, &collection, pair).word_prob(w);
            let target = collection.prob(w);
            let mix = PairScorer::new(&table, &lo, &collection, pair).mixture_prob(w);
            prop_assert!(mix != target);
            prop_assert!((after - target).abs() < (before - target).abs());
        }
    }
}

fn toy() -> (Repository, TranslationTable, CollectionLm) {
    let repo = Repository::from_pairs(vec![pair(0, 0, "a b a", "x y"), pair(1, 1, "b c", "y y z")]).unwrap();
    let table = train_ibm1(
        &repo,
        &Ibm1Config {
            em_iters: 3,
            min_freq: 1,
            null_token: false,
        },
        "t",
    )
    .unwrap()
    .table;
    let collection = CollectionLm::from_repository(&repo);
    (repo, table, collection)
}

#[test]
fn hand_posteriors_after_one_iteration() {
    let bitext = vec![(words("a b"), words("x")), (words("a"), words("x"))];
    let t = train_ibm1_bitext(&bitext, 1, false, "t").unwrap().table;
    assert_eq!(t.prob("x", "a"), 1.0);
    assert_eq!(t.prob("x", "b"), 1.0);
    let bitext = vec![(words("a b"), words("x y")), (words("a"), words("x"))];
    let t = train_ibm1_bitext(&bitext, 1, false, "t").unwrap().table;
    assert_eq!((t.prob("x", "a"), t.prob("y", "a")), (0.75, 0.25));
    assert_eq!((t.prob("x", "b"), t.prob("y", "b")), (0.5, 0.5));
}

#[test]
fn translation_probability_is_an_explicit_sum() {
    let (_, table, _) = toy();
    let text = text("a c");
    for w in ["x", "y", "z"] {
        let expected = table.prob(w, "a") * 0.5 + table.prob(w, "c") * 0.5;
        assert!((trans_prob(&table, &text, w) - expected).abs() < 1e-12);
    }
}

#[test]
fn collection_probability_is_add_one() {
    let (_, _, c) = toy();
    // 10 tokens (each post once, each comment) over 6 types.
    assert_eq!((c.total(), c.vocab_size()), (10, 6));
    assert!((c.prob("y") - 4.0 / 16.0).abs() < 1e-15);
    assert!((c.prob("unseen") - 1.0 / 16.0).abs() < 1e-15);
}

/// Written out term by term for a three-word query on the toy corpus.
#[test]
fn three_word_query_matches_the_written_out_formula() {
    let (repo, table, collection) = toy();
    let cfg = TransLmConfig::default();
    let q = text("a y z");
    let (a, b, g) = (cfg.alpha, cfg.beta, cfg.gamma);
    let t = |w: &str, s: &str| table.prob(w, s);
    let pair = &repo.pairs()[0];
    // Post "a b a": P(a)=2/3, P(b)=1/3. Comment "x y": 1/2 each.
    let post = |w: &str, ml: f64| (1.0 - g) * ml + g * (t(w, "a") * 2.0 / 3.0 + t(w, "b") / 3.0);
    let resp = |w: &str, ml: f64| (1.0 - g) * ml + g * (t(w, "x") * 0.5 + t(w, "y") * 0.5);
    let coll = |c: f64| (c + 1.0) / 16.0;
    let word = |w: &str, ml_p: f64, ml_r: f64, c: f64| {
        (1.0 - a) * ((1.0 - b) * post(w, ml_p) + b * resp(w, ml_r)) + a * coll(c)
    };
    let product = word("a", 2.0 / 3.0, 0.0, 2.0) * word("y", 0.0, 0.5, 3.0) * word("z", 0.0, 0.0, 1.0);
    let s = translm_logscore(&table, &cfg, &q, pair, &collection);
    assert_eq!(s.scored_words, 3);
    assert!((s.log_prob - product.ln()).abs() < 1e-10);
    assert!((s.log_prob.exp() - product).abs() < 1e-10 * product);
}

#[test]
fn without_translation_the_score_is_a_unigram_mixture() {
    let (repo, table, collection) = toy();
    let cfg = TransLmConfig {
        gamma: 0.0,
        ..TransLmConfig::default()
    };
    let q = text("a y c y");
    for pair in repo.pairs() {
        let mut expected = 0.0;
        for w in q.words() {
            let mix = (1.0 - cfg.beta) * unigram_prob(&pair.post, w) + cfg.beta * unigram_prob(&pair.comment, w);
            expected += ((1.0 - cfg.alpha) * mix + cfg.alpha * collection.prob(w)).ln();
        }
        let got = translm_logscore(&table, &cfg, &q, pair, &collection).log_prob;
        assert!((got - expected).abs() < 1e-12);
    }
}

#[test]
fn response_only_mixture_ignores_the_post() {
    let (repo, table, collection) = toy();
    let cfg = TransLmConfig {
        beta: 1.0,
        ..TransLmConfig::default()
    };
    let q = text("a y z");
    let mut changed = repo.pairs()[0].clone();
    let before = translm_logscore(&table, &cfg, &q, &changed, &collection);
    changed.post = text("c c b");
    let after = translm_logscore(&table, &cfg, &q, &changed, &collection);
    assert_eq!(before.log_prob, after.log_prob);
}

#[test]
fn unknown_words_are_skipped_and_counted() {
    let (repo, table, collection) = toy();
    let s = translm_logscore(
        &table,
        &TransLmConfig::default(),
        &text("a nowhere y"),
        &repo.pairs()[1],
        &collection,
    );
    assert_eq!((s.scored_words, s.skipped_words), (2, 1));
    let vocab = build_vocabulary(&repo).unwrap();
    assert!(vocab.id("nowhere").is_none());
}

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};

use common::*;
use proptest::prelude::*;
use stc::corpus::{
    build_vocabulary, clean_pairs, parse_corpus, tfidf_vector, CleaningConfig, PostCommentPair, Repository,
};

const LONG_AD: &str = "buy cheap watches now at the best online store";

/// Comments drawn from a small pool so that long ones repeat across posts.
fn noisy_repository() -> impl Strategy<Value = Repository> {
    let comment = prop_oneof![
        Just("ok"),
        Just("nice one"),
        Just("i like this very much"),
        Just(LONG_AD),
        Just("another long comment that shows up under many different posts"),
    ];
    let post = prop_oneof![Just("hi"), Just("what a day it has been"), Just("short")];
    prop::collection::vec((0u64..6, post, comment, 1u32..6), 0..30).prop_map(|rows| {
        let mut rank: HashMap<u64, u32> = HashMap::new();
        let posts: HashMap<u64, &str> = rows.iter().map(|(id, p, _, _)| (*id, *p)).collect();
        let pairs = rows
            .iter()
            .enumerate()
            .map(|(i, (post_id, _, c, bump))| {
                let r = rank.entry(*post_id).or_insert(0);
                *r += bump;
                PostCommentPair {
                    pair_id: i as u32,
                    post_id: *post_id,
                    post: text(posts[post_id]),
                    comment: text(c),
                    comment_rank: *r,
                }
            })
            .collect();
        Repository::from_pairs(pairs).unwrap()
    })
}

fn rules() -> impl Strategy<Value = CleaningConfig> {
    (0usize..15, 0usize..10, 1u32..12, 10usize..40, 2usize..4).prop_map(|(p, c, m, a, r)| CleaningConfig {
        min_post_chars: p,
        min_comment_chars: c,
        max_comments_per_post: m,
        ad_min_chars: a,
        ad_min_repeats: r,
    })
}

proptest! {
    #[test]
    fn cleaning_is_idempotent(repo in noisy_repository(), rules in rules()) {
        let (once, _) = clean_pairs(&repo, &rules);
        let (twice, report) = clean_pairs(&once, &rules);
        prop_assert_eq!(once.pairs(), twice.pairs());
        prop_assert_eq!(report.kept, report.input);
    }

    #[test]
    fn survivors_satisfy_every_rule(repo in noisy_repository(), rules in rules()) {
        let (kept, report) = clean_pairs(&repo, &rules);
        for p in kept.pairs() {
            prop_assert!(p.post.raw_char_len() >= rules.min_post_chars);
            prop_assert!(p.comment.raw_char_len() >= rules.min_comment_chars);
            prop_assert!(p.comment_rank <= rules.max_comments_per_post);
        }
        let dropped = report.short_post + report.short_comment + report.beyond_rank + report.advertisement;
        prop_assert_eq!(report.kept + dropped, repo.len());
        prop_assert_eq!(report.kept, kept.len());
    }

    // Brute force: a long comment repeated under enough distinct posts,
    // counting only pairs that pass the length and rank rules.
    #[test]
    fn advertisements_match_a_duplicate_scan(repo in noisy_repository(), rules in rules()) {
        let (kept, _) = clean_pairs(&repo, &rules);
        let eligible: Vec<&PostCommentPair> = repo
            .pairs()
            .iter()
            .filter(|p| {
                p.post.raw_char_len() >= rules.min_post_chars
                    && p.comment.raw_char_len() >= rules.min_comment_chars
                    && p.comment_rank <= rules.max_comments_per_post
            })
            .collect();
        let expected: Vec<u32> = eligible
            .iter()
            .filter(|p| {
                let s = p.comment.surface();
                let posts: HashSet<u64> = eligible
                    .iter()
                    .filter(|o| o.comment.surface() == s)
                    .map(|o| o.post_id)
                    .collect();
                p.comment.raw_char_len() < rules.ad_min_chars || posts.len() < rules.ad_min_repeats
            })
            .map(|p| p.pair_id)
            .collect();
        let got: Vec<u32> = kept.pairs().iter().map(|p| p.pair_id).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn tfidf_matches_a_recount(repo in repository_strategy(), q in text_strategy(8)) {
        let vocab = build_vocabulary(&repo).unwrap();
        let (df, n) = doc_freq(&repo);
        let v = tfidf_vector(&q, &vocab);
        let mut expected = BTreeMap::new();
        for (w, c) in counts(&q) {
            if let Some(d) = df.get(&w) {
                let idf = ((n as f64 + 1.0) / (*d as f64 + 1.0)).ln() + 1.0;
                expected.insert(vocab.id(&w).unwrap(), c * idf);
            }
        }
        prop_assert_eq!(v.len(), expected.len());
        for &(id, x) in v.entries() {
            prop_assert!(x > 0.0 && x.is_finite());
            prop_assert!(close(x, expected[&id], 1e-12));
        }
    }

    #[test]
    fn vocabulary_ids_are_dense_and_frequencies_bounded(repo in repository_strategy()) {
        let vocab = build_vocabulary(&repo).unwrap();
        let (df, n) = doc_freq(&repo);
        prop_assert_eq!(vocab.n_docs(), n);
        prop_assert_eq!(vocab.len(), df.len());
        let mut seen = HashSet::new();
        for (w, d) in &df {
            let id = vocab.id(w).unwrap();
            prop_assert!((id as usize) < vocab.len());
            prop_assert!(seen.insert(id));
            prop_assert_eq!(vocab.word(id), w.as_str());
            prop_assert_eq!(vocab.df(id), *d);
            prop_assert!(*d >= 1 && *d <= n);
        }
    }

    #[test]
    fn corpus_file_round_trip(repo in repository_strategy()) {
        let mut buf = Vec::new();
        repo.write_to(&mut buf).unwrap();
        let parsed = parse_corpus(buf.as_slice()).unwrap();
        prop_assert!(parsed.rejections.is_empty());
        prop_assert_eq!(parsed.repository.pairs(), repo.pairs());
    }
}

#[test]
fn long_comment_under_three_posts_is_dropped_everywhere() {
    let repo = Repository::from_pairs(vec![
        pair(0, 0, "the first post is long enough", LONG_AD),
        pair(1, 1, "the second post is long enough", LONG_AD),
        pair(2, 2, "the third post is long enough", LONG_AD),
        pair(3, 2, "the third post is long enough", "a real reply"),
    ])
    .unwrap();
    let (kept, report) = clean_pairs(&repo, &CleaningConfig::default());
    assert_eq!(report.advertisement, 3);
    assert_eq!(kept.sorted_ids(), vec![3]);
}

#[test]
fn empty_text_has_empty_vector() {
    let repo = Repository::from_pairs(vec![pair(0, 0, "a b", "c")]).unwrap();
    let vocab = build_vocabulary(&repo).unwrap();
    assert!(tfidf_vector(&stc::corpus::ShortText::empty(), &vocab).is_empty());
    assert!(tfidf_vector(&text("zz yy"), &vocab).is_empty());
}

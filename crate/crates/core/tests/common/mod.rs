#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stc::corpus::{Pos, PostCommentPair, Repository, ShortText, Token};

pub const WORDS: [&str; 10] = ["ab", "ba", "abc", "c", "ca", "b", "cab", "a", "bb", "dd"];

pub fn text(s: &str) -> ShortText {
    ShortText::parse(s).unwrap()
}

pub fn pair(pair_id: u32, post_id: u64, post: &str, comment: &str) -> PostCommentPair {
    PostCommentPair {
        pair_id,
        post_id,
        post: text(post),
        comment: text(comment),
        comment_rank: 1,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_text(rng: &mut ChaCha8Rng, max_tokens: usize) -> ShortText {
    let n = rng.gen_range(1..=max_tokens);
    let mut sentences = vec![Vec::new()];
    for _ in 0..n {
        if !sentences.last().unwrap().is_empty() && rng.gen_bool(0.25) {
            sentences.push(Vec::new());
        }
        let pos = Pos::ALL[rng.gen_range(0..4)];
        let surface = *WORDS.choose(rng).unwrap();
        sentences
            .last_mut()
            .unwrap()
            .push(Token::new(surface, pos, rng.gen_bool(0.2)));
    }
    ShortText::new(sentences)
}

/// Posts shared by up to three comments each, with ranks in file order.
pub fn random_repository(rng: &mut ChaCha8Rng, n_posts: usize) -> Repository {
    let mut pairs = Vec::new();
    for post_id in 0..n_posts as u64 {
        let post = random_text(rng, 6);
        for rank in 0..rng.gen_range(1..=3) {
            pairs.push(PostCommentPair {
                pair_id: pairs.len() as u32,
                post_id,
                post: post.clone(),
                comment: random_text(rng, 6),
                comment_rank: rank + 1,
            });
        }
    }
    Repository::from_pairs(pairs).unwrap()
}

pub fn text_strategy(max_tokens: usize) -> impl Strategy<Value = ShortText> {
    prop::collection::vec(
        (0..WORDS.len(), 0..4usize, any::<bool>(), prop::bool::weighted(0.2)),
        1..=max_tokens,
    )
    .prop_map(|toks| {
        let mut sentences = vec![Vec::new()];
        for (w, p, ne, split) in toks {
            if split && !sentences.last().unwrap().is_empty() {
                sentences.push(Vec::new());
            }
            sentences
                .last_mut()
                .unwrap()
                .push(Token::new(WORDS[w], Pos::ALL[p], ne));
        }
        ShortText::new(sentences)
    })
}

pub fn repository_strategy() -> impl Strategy<Value = Repository> {
    any::<u64>().prop_flat_map(|seed| (2usize..8).prop_map(move |n| random_repository(&mut rng(seed), n)))
}

/// Word counts of a text, by surface.
pub fn counts(t: &ShortText) -> BTreeMap<String, f64> {
    let mut c = BTreeMap::new();
    for w in t.words() {
        *c.entry(w.to_string()).or_insert(0.0) += 1.0;
    }
    c
}

/// Document frequency over distinct posts and all comments.
pub fn doc_freq(repo: &Repository) -> (BTreeMap<String, u32>, u32) {
    let mut df = BTreeMap::new();
    let mut n = 0;
    let mut posts = HashSet::new();
    for p in repo.pairs() {
        let mut docs = vec![&p.comment];
        if posts.insert(p.post_id) {
            docs.push(&p.post);
        }
        for d in docs {
            n += 1;
            let types: HashSet<&str> = d.words().collect();
            for w in types {
                *df.entry(w.to_string()).or_insert(0) += 1;
            }
        }
    }
    (df, n)
}

pub fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(w, x)| x * b.get(w).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

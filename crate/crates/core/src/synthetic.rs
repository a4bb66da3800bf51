//! Seeded generator of a planted-topic conversation corpus with judged
//! queries and labeled topic words.
//!
//! Every topic owns three word lists: words used only in posts and
//! queries (`<topic>-q<i>`), words used only in comments (`<topic>-r<i>`),
//! and a few shared words (`<topic>-s<i>`). Posts and comments of one topic
//! therefore overlap little, which leaves a lexical gap for the translation
//! and deep matchers to bridge. Frequent "rookie" words are sprinkled with
//! high term frequency over unrelated texts; they dominate TF-IDF overlap
//! without carrying the topic. Some comments drift to another topic while
//! copying the post's rookie word, so plain overlap favors them. The
//! corpus also carries short pairs and repeated advertisements for the
//! cleaning rules to remove.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Pos, PostCommentPair, Repository, ShortText, Token};
use crate::ranker::Label;
use crate::topicword::{LabeledWord, TextId, TextSide};

const TOPICS: [&str; 12] = [
    "sport", "food", "music", "travel", "code", "movie", "pet", "weather", "game", "study", "car", "phone",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub topics: usize,
    pub posts: usize,
    pub comments_per_post: usize,
    pub queries: usize,
    /// Query-side, response-side and shared words per topic.
    pub post_words: usize,
    pub response_words: usize,
    pub shared_words: usize,
    pub filler_words: usize,
    pub rookie_words: usize,
    /// Probability that a comment is about another topic.
    pub off_topic_rate: f64,
    /// Probability that a topic token is borrowed from a random topic.
    pub word_noise: f64,
    /// Probability that a topic token is a shared word, in posts and in
    /// comments.
    pub post_shared_rate: f64,
    pub comment_shared_rate: f64,
    pub short_pairs: usize,
    pub ad_posts: usize,
    /// Texts whose words are labeled for the topic-word classifier.
    pub labeled_texts: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            topics: 10,
            posts: 1000,
            comments_per_post: 5,
            queries: 50,
            post_words: 24,
            response_words: 24,
            shared_words: 4,
            filler_words: 40,
            rookie_words: 6,
            off_topic_rate: 0.4,
            word_noise: 0.3,
            post_shared_rate: 0.2,
            comment_shared_rate: 0.05,
            short_pairs: 30,
            ad_posts: 12,
            labeled_texts: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    /// Uncleaned repository.
    pub repository: Repository,
    /// Topic of each regular comment; short pairs and ads are absent.
    pub comment_topic: HashMap<u32, usize>,
    pub queries: Vec<(String, ShortText)>,
    pub query_topic: Vec<usize>,
    pub labeled_words: Vec<LabeledWord>,
}

impl SyntheticCorpus {
    /// A candidate is suitable when its comment is about the query's topic.
    pub fn judge(&self, query: usize, pair_id: u32) -> Label {
        match self.comment_topic.get(&pair_id) {
            Some(&t) if t == self.query_topic[query] => Label::Suitable,
            _ => Label::Unsuitable,
        }
    }

    /// Ground-truth topic-word status of a generated word.
    pub fn is_topic_word(word: &str) -> bool {
        word.split_once('-').is_some_and(|(head, _)| TOPICS.contains(&head))
    }
}

struct Lexicon {
    post: Vec<Vec<String>>,
    response: Vec<Vec<String>>,
    shared: Vec<Vec<String>>,
    filler: Vec<String>,
    rookie: Vec<String>,
}

impl Lexicon {
    fn new(cfg: &SyntheticConfig) -> Self {
        let words = |t: usize, kind: char, n: usize| -> Vec<String> {
            (0..n).map(|i| format!("{}-{kind}{i}", TOPICS[t])).collect()
        };
        Lexicon {
            post: (0..cfg.topics).map(|t| words(t, 'q', cfg.post_words)).collect(),
            response: (0..cfg.topics).map(|t| words(t, 'r', cfg.response_words)).collect(),
            shared: (0..cfg.topics).map(|t| words(t, 's', cfg.shared_words)).collect(),
            filler: (0..cfg.filler_words).map(|i| format!("w{i}")).collect(),
            rookie: (0..cfg.rookie_words).map(|i| format!("rookie{i}")).collect(),
        }
    }
}

fn topic_token(rng: &mut ChaCha8Rng, word: &str) -> Token {
    let pos = if rng.gen_bool(0.7) { Pos::Noun } else { Pos::Verb };
    Token::new(word, pos, rng.gen_bool(0.15))
}

fn filler_token(rng: &mut ChaCha8Rng, lex: &Lexicon) -> Token {
    let w = lex.filler.choose(rng).unwrap();
    let pos = if rng.gen_bool(0.8) { Pos::Other } else { Pos::Adj };
    Token::new(w.as_str(), pos, false)
}

fn rookie_token(rng: &mut ChaCha8Rng, word: &str) -> Token {
    let pos = if rng.gen_bool(0.5) { Pos::Noun } else { Pos::Adj };
    Token::new(word, pos, false)
}

/// Which side of the conversation a text belongs to.
#[derive(Clone, Copy, PartialEq)]
enum Role {
    Post,
    Comment,
}

/// A text on `topic`, padded with fillers and optionally repeating a rookie
/// word. Topic tokens come from the side's own list or the shared list and
/// are sometimes borrowed from a random topic.
fn topical_text(
    rng: &mut ChaCha8Rng,
    lex: &Lexicon,
    cfg: &SyntheticConfig,
    topic: usize,
    role: Role,
    rookie: Option<&str>,
    sentences: usize,
) -> ShortText {
    let shared_rate = match role {
        Role::Post => cfg.post_shared_rate,
        Role::Comment => cfg.comment_shared_rate,
    };
    let mut out = Vec::with_capacity(sentences);
    for s in 0..sentences {
        let mut sent = Vec::new();
        // Topic words cluster in the first and last sentences.
        let edge = s == 0 || s + 1 == sentences;
        let n_topic = match (role, edge) {
            (Role::Comment, _) => rng.gen_range(1..=3),
            (Role::Post, true) => rng.gen_range(2..=3),
            (Role::Post, false) => rng.gen_range(0..=1),
        };
        for _ in 0..n_topic {
            let t = if rng.gen_bool(cfg.word_noise) {
                rng.gen_range(0..cfg.topics)
            } else {
                topic
            };
            let w = if rng.gen_bool(shared_rate) {
                lex.shared[t].choose(rng).unwrap()
            } else if role == Role::Post {
                lex.post[t].choose(rng).unwrap()
            } else {
                lex.response[t].choose(rng).unwrap()
            };
            sent.push(topic_token(rng, w));
        }
        for _ in 0..rng.gen_range(1..=3) {
            sent.push(filler_token(rng, lex));
        }
        if let Some(r) = rookie {
            if s == 0 || rng.gen_bool(0.5) {
                sent.push(rookie_token(rng, r));
                sent.push(rookie_token(rng, r));
            }
        }
        sent.shuffle(rng);
        out.push(sent);
    }
    ShortText::new(out)
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    assert!(
        cfg.topics >= 2 && cfg.topics <= TOPICS.len(),
        "topics must be in 2..=12"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lex = Lexicon::new(cfg);
    let mut pairs = Vec::new();
    let mut comment_topic = HashMap::new();
    let mut next_id = 0u32;
    let mut push = |pairs: &mut Vec<PostCommentPair>, post_id: u64, post: ShortText, comment: ShortText, rank: u32| {
        let pair_id = next_id;
        next_id += 1;
        pairs.push(PostCommentPair {
            pair_id,
            post_id,
            post,
            comment,
            comment_rank: rank,
        });
        pair_id
    };

    for post_id in 0..cfg.posts as u64 {
        let t = rng.gen_range(0..cfg.topics);
        let rookie = rng.gen_bool(0.5).then(|| lex.rookie.choose(&mut rng).unwrap().clone());
        let n_sent = rng.gen_range(1..=3);
        let post = topical_text(&mut rng, &lex, cfg, t, Role::Post, rookie.as_deref(), n_sent);
        for rank in 1..=cfg.comments_per_post as u32 {
            let (ct, comment) = if rng.gen_bool(cfg.off_topic_rate) {
                let mut other = rng.gen_range(0..cfg.topics - 1);
                if other >= t {
                    other += 1;
                }
                // Drifting comments echo the post's rookie word.
                let echo = rookie
                    .clone()
                    .or_else(|| Some(lex.rookie.choose(&mut rng).unwrap().clone()));
                let c = topical_text(&mut rng, &lex, cfg, other, Role::Comment, echo.as_deref(), 1);
                (other, c)
            } else {
                let echo = rng.gen_bool(0.15).then(|| lex.rookie.choose(&mut rng).unwrap().clone());
                (
                    t,
                    topical_text(&mut rng, &lex, cfg, t, Role::Comment, echo.as_deref(), 1),
                )
            };
            let id = push(&mut pairs, post_id, post.clone(), comment, rank);
            comment_topic.insert(id, ct);
        }
    }

    let mut post_id = cfg.posts as u64;
    for _ in 0..cfg.short_pairs {
        let post = ShortText::new(vec![vec![filler_token(&mut rng, &lex), filler_token(&mut rng, &lex)]]);
        let comment = ShortText::new(vec![vec![filler_token(&mut rng, &lex)]]);
        push(&mut pairs, post_id, post, comment, 1);
        post_id += 1;
    }
    let ad = ShortText::new(vec![[
        "visit",
        "cheapshop",
        "now",
        "for",
        "discount",
        "watches",
        "and",
        "bags",
    ]
    .iter()
    .map(|w| Token::plain(*w))
    .collect()]);
    for _ in 0..cfg.ad_posts {
        let t = rng.gen_range(0..cfg.topics);
        let post = topical_text(&mut rng, &lex, cfg, t, Role::Post, None, 1);
        push(&mut pairs, post_id, post, ad.clone(), 1);
        post_id += 1;
    }
    let repository = Repository::from_pairs(pairs).expect("generated ids are unique");

    let mut queries = Vec::with_capacity(cfg.queries);
    let mut query_topic = Vec::with_capacity(cfg.queries);
    for i in 0..cfg.queries {
        // Cycle through topics so every topic is queried.
        let t = i % cfg.topics;
        let rookie = lex.rookie.choose(&mut rng).unwrap().clone();
        let n_sent = rng.gen_range(1..=2);
        let q = topical_text(&mut rng, &lex, cfg, t, Role::Post, Some(&rookie), n_sent);
        queries.push((format!("q{i:03}"), q));
        query_topic.push(t);
    }

    let regular: Vec<u32> = comment_topic
        .keys()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut labeled_words = Vec::new();
    for _ in 0..cfg.labeled_texts {
        let id = *regular.choose(&mut rng).unwrap();
        let side = if rng.gen_bool(0.5) {
            TextSide::Post
        } else {
            TextSide::Comment
        };
        let pair = repository.get(id).unwrap();
        let text = match side {
            TextSide::Post => &pair.post,
            TextSide::Comment => &pair.comment,
        };
        for w in text.word_types() {
            labeled_words.push(LabeledWord {
                text_id: TextId { pair_id: id, side },
                word: w.to_string(),
                is_topic: SyntheticCorpus::is_topic_word(w),
            });
        }
    }

    SyntheticCorpus {
        config: cfg.clone(),
        repository,
        comment_topic,
        queries,
        query_topic,
        labeled_words,
    }
}

//! Topic-word classifier and topic-word-weighted similarities.
//!
//! `P(topic | w)` is a logistic regression with a fixed zero intercept over
//! per-word features of the containing text. Texts are then compared as
//! vectors whose per-word weight is that probability.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Pos, ShortText, Vocabulary};
use crate::error::{Error, Result};
use crate::math::sigmoid;

pub const FEATURE_NAMES: [&str; 12] = [
    "tf",
    "idf",
    "sf",
    "first",
    "last",
    "ne",
    "ne_first",
    "ne_last",
    "pos_noun",
    "pos_verb",
    "pos_adj",
    "pos_other",
];

/// Per-word features of a word within one text.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordFeatures {
    pub tf: u32,
    pub idf: f64,
    pub sf: u32,
    pub first: bool,
    pub last: bool,
    pub ne: bool,
    pub ne_first: bool,
    pub ne_last: bool,
    pub pos: Pos,
}

impl WordFeatures {
    /// Expanded vector with binary flags as 0/1 and POS one-hot.
    pub fn to_vec(&self) -> [f64; 12] {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        let mut v = [
            self.tf as f64,
            self.idf,
            self.sf as f64,
            b(self.first),
            b(self.last),
            b(self.ne),
            b(self.ne_first),
            b(self.ne_last),
            0.0,
            0.0,
            0.0,
            0.0,
        ];
        v[8 + self.pos.index()] = 1.0;
        v
    }
}

pub fn extract_word_features(text: &ShortText, word: &str, vocab: &Vocabulary) -> Result<WordFeatures> {
    let sentences = text.sentences();
    let mut tf = 0;
    let mut sf = 0;
    let mut ne = false;
    let mut pos = None;
    let mut in_first = false;
    let mut in_last = false;
    for (i, s) in sentences.iter().enumerate() {
        let mut here = false;
        for t in s.iter().filter(|t| t.surface == word) {
            tf += 1;
            here = true;
            ne |= t.is_ne;
            pos.get_or_insert(t.pos);
        }
        if here {
            sf += 1;
            in_first |= i == 0;
            in_last |= i + 1 == sentences.len();
        }
    }
    let Some(pos) = pos else {
        return Err(Error::WordAbsent(word.to_string()));
    };
    Ok(WordFeatures {
        tf,
        idf: vocab.idf_of(word),
        sf,
        first: in_first,
        last: in_last,
        ne,
        ne_first: ne && in_first,
        ne_last: ne && in_last,
        pos,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicWordModel {
    pub weights: [f64; 12],
}

impl TopicWordModel {
    /// Intercept, fixed at zero.
    pub const INTERCEPT: f64 = 0.0;

    pub fn logit(&self, f: &WordFeatures) -> f64 {
        crate::math::dot(&self.weights, &f.to_vec()) + Self::INTERCEPT
    }

    /// `# stc-topicword v1 c=0` followed by `name<TAB>weight` lines.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# stc-topicword v1 c={}", Self::INTERCEPT)?;
        for (name, w) in FEATURE_NAMES.iter().zip(&self.weights) {
            writeln!(out, "{name}\t{w:?}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if !header.starts_with("# stc-topicword v1") {
            return Err(Error::format("topic-word model", "bad header"));
        }
        let mut weights = [f64::NAN; 12];
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (name, w) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("topic-word model", format!("bad line `{line}`")))?;
            let i = FEATURE_NAMES
                .iter()
                .position(|&n| n == name)
                .ok_or_else(|| Error::format("topic-word model", format!("unknown feature `{name}`")))?;
            weights[i] = w
                .parse()
                .map_err(|_| Error::format("topic-word model", format!("bad weight `{w}`")))?;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::format("topic-word model", "missing or non-finite weight"));
        }
        Ok(TopicWordModel { weights })
    }
}

pub fn topic_prob(m: &TopicWordModel, f: &WordFeatures) -> f64 {
    sigmoid(m.logit(f))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicWordConfig {
    pub l2: f64,
    pub epochs: usize,
    /// Step size; `None` picks `1/L` for the bound `L` on the curvature of
    /// the objective, which makes every step an ascent step.
    pub learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for TopicWordConfig {
    fn default() -> Self {
        TopicWordConfig {
            l2: 1e-3,
            epochs: 2000,
            learning_rate: None,
            seed: 0,
        }
    }
}

/// Mean log-likelihood minus `l2/2 · ‖ω‖²`.
pub fn objective(weights: &[f64; 12], data: &[([f64; 12], bool)], l2: f64) -> f64 {
    let ll: f64 = data
        .iter()
        .map(|(x, y)| {
            let z = crate::math::dot(weights, x);
            // log σ(z) = -ln(1 + e^-z), computed stably.
            let s = if *y { z } else { -z };
            -softplus(-s)
        })
        .sum();
    ll / data.len().max(1) as f64 - 0.5 * l2 * crate::math::dot(weights, weights)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn gradient(weights: &[f64; 12], data: &[([f64; 12], bool)], l2: f64) -> [f64; 12] {
    let mut g = [0.0; 12];
    for (x, y) in data {
        let r = if *y { 1.0 } else { 0.0 } - sigmoid(crate::math::dot(weights, x));
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += r * xi;
        }
    }
    let n = data.len().max(1) as f64;
    for (gi, w) in g.iter_mut().zip(weights) {
        *gi = *gi / n - l2 * w;
    }
    g
}

/// Full-batch gradient ascent on the regularized log-likelihood.
pub fn train_topicword(data: &[(WordFeatures, bool)], cfg: &TopicWordConfig) -> Result<TopicWordModel> {
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::SingleClass);
    }
    let xs: Vec<([f64; 12], bool)> = data.iter().map(|(f, y)| (f.to_vec(), *y)).collect();
    let lr = cfg.learning_rate.unwrap_or_else(|| {
        let mean_sq = xs.iter().map(|(x, _)| crate::math::dot(x, x)).sum::<f64>() / xs.len() as f64;
        1.0 / (0.25 * mean_sq + cfg.l2)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = [0.0; 12];
    for w in &mut weights {
        *w = rng.gen_range(-0.01..=0.01);
    }
    for _ in 0..cfg.epochs {
        let g = gradient(&weights, &xs, cfg.l2);
        for (w, gi) in weights.iter_mut().zip(g) {
            *w += lr * gi;
        }
    }
    Ok(TopicWordModel { weights })
}

/// A text as per-type weights `P(topic | w)`, sorted by word.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedText {
    pub weights: Vec<(String, f64)>,
}

impl WeightedText {
    pub fn cosine(&self, other: &WeightedText) -> f64 {
        let (a, b) = (&self.weights, &other.weights);
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let na = a.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        let nb = b.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

pub fn weighted_text(text: &ShortText, m: &TopicWordModel, vocab: &Vocabulary) -> WeightedText {
    let weights = text
        .word_types()
        .into_iter()
        .map(|w| {
            let f = extract_word_features(text, w, vocab).expect("word taken from the text");
            (w.to_string(), topic_prob(m, &f))
        })
        .collect();
    WeightedText { weights }
}

/// Topic-weighted cosine of the query with the comment and with the post.
pub fn topicword_sims(
    q: &ShortText,
    pair: &crate::corpus::PostCommentPair,
    m: &TopicWordModel,
    vocab: &Vocabulary,
) -> (f64, f64) {
    let qw = weighted_text(q, m, vocab);
    (
        qw.cosine(&weighted_text(&pair.comment, m, vocab)),
        qw.cosine(&weighted_text(&pair.post, m, vocab)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TextSide {
    Post,
    Comment,
}

/// Reference to a stored text: `<pair_id>:post` or `<pair_id>:comment`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TextId {
    pub pair_id: u32,
    pub side: TextSide,
}

impl std::fmt::Display for TextId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let side = match self.side {
            TextSide::Post => "post",
            TextSide::Comment => "comment",
        };
        write!(f, "{}:{side}", self.pair_id)
    }
}

impl std::str::FromStr for TextId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::format("text id", format!("`{s}`"));
        let (id, side) = s.split_once(':').ok_or_else(bad)?;
        let side = match side {
            "post" => TextSide::Post,
            "comment" => TextSide::Comment,
            _ => return Err(bad()),
        };
        Ok(TextId {
            pair_id: id.parse().map_err(|_| bad())?,
            side,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWord {
    pub text_id: TextId,
    pub word: String,
    pub is_topic: bool,
}

/// Reads `text_id<TAB>word<TAB>label` lines; labels are `topic`/`1` or
/// `non-topic`/`0`.
pub fn parse_labeled_words<R: BufRead>(input: R) -> Result<Vec<LabeledWord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |d: &str| Error::format("labeled words", format!("line {}: {d}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let is_topic = match f[2].trim() {
            "topic" | "1" => true,
            "non-topic" | "0" => false,
            other => return Err(bad(&format!("bad label `{other}`"))),
        };
        out.push(LabeledWord {
            text_id: f[0].parse()?,
            word: f[1].to_string(),
            is_topic,
        });
    }
    Ok(out)
}

pub fn write_labeled_words<W: Write>(words: &[LabeledWord], mut out: W) -> Result<()> {
    for w in words {
        let label = if w.is_topic { "topic" } else { "non-topic" };
        writeln!(out, "{}\t{}\t{label}", w.text_id, w.word)?;
    }
    Ok(())
}

/// Resolves labeled words against the repository into training examples.
pub fn training_examples(
    labeled: &[LabeledWord],
    repo: &crate::corpus::Repository,
    vocab: &Vocabulary,
) -> Result<Vec<(WordFeatures, bool)>> {
    labeled
        .iter()
        .map(|l| {
            let pair = repo
                .get(l.text_id.pair_id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown text `{}`", l.text_id)))?;
            let text = match l.text_id.side {
                TextSide::Post => &pair.post,
                TextSide::Comment => &pair.comment,
            };
            Ok((extract_word_features(text, &l.word, vocab)?, l.is_topic))
        })
        .collect()
}

/// Fraction of examples whose predicted class (probability ≥ 0.5) matches.
pub fn accuracy(m: &TopicWordModel, data: &[(WordFeatures, bool)]) -> f64 {
    let hits = data.iter().filter(|(f, y)| (topic_prob(m, f) >= 0.5) == *y).count();
    hits as f64 / data.len().max(1) as f64
}

/// Distinct words of a text that a model weights at or above `threshold`.
pub fn topic_words<'t>(
    text: &'t ShortText,
    m: &TopicWordModel,
    vocab: &Vocabulary,
    threshold: f64,
) -> BTreeSet<&'t str> {
    let counts: BTreeMap<&str, usize> = text.term_counts();
    counts
        .keys()
        .filter(|w| {
            let f = extract_word_features(text, w, vocab).expect("word taken from the text");
            topic_prob(m, &f) >= threshold
        })
        .copied()
        .collect()
}

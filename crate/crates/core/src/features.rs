//! Matching features for a (query, pair) and their assembly into the
//! vector fed to the ranker.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tfidf_vector, PostCommentPair, ShortText, SparseVector, Vocabulary};
use crate::deepmatch::DeepMatchModel;
use crate::error::{Error, Result};
use crate::latent::{match_vector, LatentModel};
use crate::topicword::{self, TopicWordModel, WeightedText};
use crate::translm::{CollectionLm, PairScorer, TransLmConfig, TranslationTable};

pub const SCHEMA_VERSION: &str = "stc-features/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Feature {
    SimQ2R,
    SimQ2P,
    LatentMatch,
    LcsQ2R,
    CooccurQ2RSize,
    CooccurQ2RRate,
    CooccurQ2RSumIdf,
    CooccurQ2RAvgIdf,
    CooccurQ2PSize,
    CooccurQ2PRate,
    CooccurQ2PSumIdf,
    CooccurQ2PAvgIdf,
    TransLm,
    DeepMatch,
    TopicWordQ2R,
    TopicWordQ2P,
}

impl Feature {
    pub const ALL: [Feature; 16] = [
        Feature::SimQ2R,
        Feature::SimQ2P,
        Feature::LatentMatch,
        Feature::LcsQ2R,
        Feature::CooccurQ2RSize,
        Feature::CooccurQ2RRate,
        Feature::CooccurQ2RSumIdf,
        Feature::CooccurQ2RAvgIdf,
        Feature::CooccurQ2PSize,
        Feature::CooccurQ2PRate,
        Feature::CooccurQ2PSumIdf,
        Feature::CooccurQ2PAvgIdf,
        Feature::TransLm,
        Feature::DeepMatch,
        Feature::TopicWordQ2R,
        Feature::TopicWordQ2P,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::SimQ2R => "sim_q2r",
            Feature::SimQ2P => "sim_q2p",
            Feature::LatentMatch => "latent_match",
            Feature::LcsQ2R => "lcs_q2r",
            Feature::CooccurQ2RSize => "cooccur_q2r_size",
            Feature::CooccurQ2RRate => "cooccur_q2r_rate",
            Feature::CooccurQ2RSumIdf => "cooccur_q2r_sum_idf",
            Feature::CooccurQ2RAvgIdf => "cooccur_q2r_avg_idf",
            Feature::CooccurQ2PSize => "cooccur_q2p_size",
            Feature::CooccurQ2PRate => "cooccur_q2p_rate",
            Feature::CooccurQ2PSumIdf => "cooccur_q2p_sum_idf",
            Feature::CooccurQ2PAvgIdf => "cooccur_q2p_avg_idf",
            Feature::TransLm => "translm",
            Feature::DeepMatch => "deepmatch",
            Feature::TopicWordQ2R => "topicword_q2r",
            Feature::TopicWordQ2P => "topicword_q2p",
        }
    }

    /// Model the feature needs besides the vocabulary, if any.
    pub fn required_model(self) -> Option<&'static str> {
        match self {
            Feature::LatentMatch => Some("latent"),
            Feature::TransLm => Some("translm"),
            Feature::DeepMatch => Some("deepmatch"),
            Feature::TopicWordQ2R | Feature::TopicWordQ2P => Some("topicword"),
            _ => None,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{s}`")))
    }
}

impl From<Feature> for String {
    fn from(f: Feature) -> String {
        f.name().to_string()
    }
}

impl TryFrom<String> for Feature {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Ordered, duplicate-free list of features.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(*f) {
                return Err(Error::Schema(format!("duplicate feature `{f}`")));
            }
        }
        Ok(FeatureSchema { features })
    }

    /// Basic similarities, latent match, LCS and co-occurrence.
    pub fn baseline() -> Self {
        FeatureSchema {
            features: Feature::ALL[..12].to_vec(),
        }
    }

    /// Baseline plus TransLM, DeepMatch and the topic-word similarities.
    pub fn full() -> Self {
        FeatureSchema {
            features: Feature::ALL.to_vec(),
        }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.features.iter().map(|f| f.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, f: Feature) -> Option<usize> {
        self.features.iter().position(|&g| g == f)
    }

    pub fn version(&self) -> &'static str {
        SCHEMA_VERSION
    }

    /// `schema <version> name,name,...`
    pub fn header(&self) -> String {
        format!("schema {SCHEMA_VERSION} {}", self.names().join(","))
    }

    pub fn parse_header(line: &str) -> Result<Self> {
        let mut parts = line.trim().splitn(3, ' ');
        if parts.next() != Some("schema") {
            return Err(Error::Schema("expected `schema` header".into()));
        }
        let version = parts.next().unwrap_or_default();
        if version != SCHEMA_VERSION {
            return Err(Error::Schema(format!("unsupported schema version `{version}`")));
        }
        let names = parts.next().unwrap_or_default();
        let features = names
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        FeatureSchema::new(features)
    }

    /// Positions of `sub`'s features inside `self`.
    pub fn projection(&self, sub: &FeatureSchema) -> Result<Vec<usize>> {
        sub.features
            .iter()
            .map(|&f| {
                self.position(f)
                    .ok_or_else(|| Error::Schema(format!("feature `{f}` not in source schema")))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn project(&self, positions: &[usize]) -> FeatureVector {
        FeatureVector {
            values: positions.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

pub fn sim_q2r(q: &SparseVector, r: &SparseVector) -> f64 {
    q.cosine(r)
}

pub fn sim_q2p(q: &SparseVector, p: &SparseVector) -> f64 {
    q.cosine(p)
}

/// Length in characters of the longest common substring of the two
/// surface strings.
pub fn lcs_length(q: &ShortText, r: &ShortText) -> usize {
    let a: Vec<char> = q.surface().chars().collect();
    let b: Vec<char> = r.surface().chars().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub size: f64,
    pub rate: f64,
    pub sum_idf: f64,
    pub avg_idf: f64,
}

/// Statistics of the word types shared by `x` and `y`; `rate` divides by
/// the number of distinct word types of `y`.
pub fn cooccur_features(x: &ShortText, y: &ShortText, vocab: &Vocabulary) -> Cooccurrence {
    let xs = x.word_types();
    let ys = y.word_types();
    let common: Vec<&str> = ys.iter().filter(|w| xs.binary_search(w).is_ok()).copied().collect();
    if common.is_empty() {
        return Cooccurrence::default();
    }
    let size = common.len() as f64;
    let sum_idf: f64 = common.iter().map(|w| vocab.idf_of(w)).sum();
    Cooccurrence {
        size,
        rate: size / ys.len() as f64,
        sum_idf,
        avg_idf: sum_idf / size,
    }
}

/// Optional trained models available to feature assembly.
#[derive(Clone, Copy, Default)]
pub struct Matchers<'a> {
    pub latent: Option<&'a LatentModel>,
    pub translation: Option<(&'a TranslationTable, &'a TransLmConfig, &'a CollectionLm)>,
    pub deepmatch: Option<&'a DeepMatchModel>,
    pub topicword: Option<&'a TopicWordModel>,
}

impl Matchers<'_> {
    pub fn check(&self, schema: &FeatureSchema) -> Result<()> {
        for f in schema.features() {
            let missing = match f.required_model() {
                Some("latent") => self.latent.is_none(),
                Some("translm") => self.translation.is_none(),
                Some("deepmatch") => self.deepmatch.is_none(),
                Some("topicword") => self.topicword.is_none(),
                _ => false,
            };
            if missing {
                return Err(Error::MissingModel(f.required_model().unwrap()));
            }
        }
        Ok(())
    }
}

/// Query-side representations computed once per query.
pub struct QueryContext<'a> {
    pub text: &'a ShortText,
    pub tfidf: SparseVector,
    pub unit: SparseVector,
    pub topic: Option<WeightedText>,
}

impl<'a> QueryContext<'a> {
    pub fn new(text: &'a ShortText, vocab: &Vocabulary, matchers: &Matchers<'_>) -> Self {
        let tfidf = tfidf_vector(text, vocab);
        let unit = tfidf.normalized();
        let topic = matchers.topicword.map(|m| topicword::weighted_text(text, m, vocab));
        QueryContext {
            text,
            tfidf,
            unit,
            topic,
        }
    }
}

/// Feature values of `pair` for the query, in schema order.
pub fn assemble_features(
    q: &QueryContext<'_>,
    pair: &PostCommentPair,
    vocab: &Vocabulary,
    matchers: &Matchers<'_>,
    schema: &FeatureSchema,
) -> Result<FeatureVector> {
    matchers.check(schema)?;
    let needs = |fs: &[Feature]| fs.iter().any(|f| schema.position(*f).is_some());
    let r_vec = tfidf_vector(&pair.comment, vocab);
    let p_vec = tfidf_vector(&pair.post, vocab);
    let q2r = if needs(&Feature::ALL[4..8]) {
        cooccur_features(q.text, &pair.comment, vocab)
    } else {
        Cooccurrence::default()
    };
    let q2p = if needs(&Feature::ALL[8..12]) {
        cooccur_features(q.text, &pair.post, vocab)
    } else {
        Cooccurrence::default()
    };
    let topic = if needs(&[Feature::TopicWordQ2R, Feature::TopicWordQ2P]) {
        let m = matchers.topicword.expect("checked");
        let qw = match &q.topic {
            Some(w) => w.clone(),
            None => topicword::weighted_text(q.text, m, vocab),
        };
        let rw = topicword::weighted_text(&pair.comment, m, vocab);
        let pw = topicword::weighted_text(&pair.post, m, vocab);
        (qw.cosine(&rw), qw.cosine(&pw))
    } else {
        (0.0, 0.0)
    };
    let mut values = Vec::with_capacity(schema.len());
    for &f in schema.features() {
        let v = match f {
            Feature::SimQ2R => sim_q2r(&q.tfidf, &r_vec),
            Feature::SimQ2P => sim_q2p(&q.tfidf, &p_vec),
            Feature::LatentMatch => {
                let m = matchers.latent.expect("checked");
                m.score(&q.unit, &r_vec.normalized())
            }
            Feature::LcsQ2R => lcs_length(q.text, &pair.comment) as f64,
            Feature::CooccurQ2RSize => q2r.size,
            Feature::CooccurQ2RRate => q2r.rate,
            Feature::CooccurQ2RSumIdf => q2r.sum_idf,
            Feature::CooccurQ2RAvgIdf => q2r.avg_idf,
            Feature::CooccurQ2PSize => q2p.size,
            Feature::CooccurQ2PRate => q2p.rate,
            Feature::CooccurQ2PSumIdf => q2p.sum_idf,
            Feature::CooccurQ2PAvgIdf => q2p.avg_idf,
            Feature::TransLm => {
                let (table, cfg, collection) = matchers.translation.expect("checked");
                PairScorer::new(table, cfg, collection, pair).score(q.text).per_word()
            }
            Feature::DeepMatch => {
                let m = matchers.deepmatch.expect("checked");
                m.forward(&q.unit, &match_vector(&pair.comment, vocab))
            }
            Feature::TopicWordQ2R => topic.0,
            Feature::TopicWordQ2P => topic.1,
        };
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("feature `{f}` is not finite")));
        }
        values.push(v);
    }
    Ok(FeatureVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocabulary;

    fn text(s: &str) -> ShortText {
        ShortText::from_raw(s)
    }

    fn sv(e: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_entries(e.iter().copied())
    }

    #[test]
    fn cosine_shapes() {
        let q = sv(&[(0, 1.0), (1, 1.0)]);
        assert!((sim_q2r(&q, &q) - 1.0).abs() < 1e-15);
        assert_eq!(sim_q2r(&q, &sv(&[(2, 1.0)])), 0.0);
        assert!((sim_q2p(&q, &sv(&[(0, 1.0)])) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_length(&text("a b c d e"), &text("z c d e z")), 3);
        assert_eq!(lcs_length(&text("abcde"), &text("zcdez")), 3);
        assert_eq!(lcs_length(&text("abc"), &text("xyz")), 0);
        assert_eq!(lcs_length(&text("hello"), &text("hello")), 5);
    }

    #[test]
    fn cooccurrence_examples() {
        let line = "1\t1\ta b c\ta b c d";
        let repo = crate::corpus::parse_corpus(line.as_bytes()).unwrap().repository;
        let vocab = build_vocabulary(&repo).unwrap();
        let x = text("a b c");
        assert_eq!(cooccur_features(&x, &text(""), &vocab), Cooccurrence::default());
        let c = cooccur_features(&x, &x, &vocab);
        assert_eq!((c.size, c.rate), (3.0, 1.0));
        let c = cooccur_features(&x, &text("a d d"), &vocab);
        assert_eq!((c.size, c.rate), (1.0, 0.5));
        assert_eq!(c.sum_idf, vocab.idf_of("a"));
    }

    #[test]
    fn schema_header_round_trip() {
        let s = FeatureSchema::full();
        assert_eq!(FeatureSchema::parse_header(&s.header()).unwrap(), s);
        assert!(FeatureSchema::new(vec![Feature::SimQ2R, Feature::SimQ2R]).is_err());
        assert!(FeatureSchema::parse_header("schema stc-features/0 sim_q2r").is_err());
    }

    #[test]
    fn missing_model_is_named() {
        let line = "1\t1\ta b c\ta b c d";
        let repo = crate::corpus::parse_corpus(line.as_bytes()).unwrap().repository;
        let vocab = build_vocabulary(&repo).unwrap();
        let schema = FeatureSchema::new(vec![Feature::DeepMatch]).unwrap();
        let m = Matchers::default();
        let q = text("a");
        let ctx = QueryContext::new(&q, &vocab, &m);
        let err = assemble_features(&ctx, &repo.pairs()[0], &vocab, &m, &schema).unwrap_err();
        assert_eq!(err.to_string(), "deepmatch missing");
    }

    #[test]
    fn identical_query_and_comment() {
        let line = "1\t1\tx y\ta b c";
        let repo = crate::corpus::parse_corpus(line.as_bytes()).unwrap().repository;
        let vocab = build_vocabulary(&repo).unwrap();
        let schema = FeatureSchema::new(vec![Feature::SimQ2R]).unwrap();
        let m = Matchers::default();
        let q = text("a b c");
        let ctx = QueryContext::new(&q, &vocab, &m);
        let fv = assemble_features(&ctx, &repo.pairs()[0], &vocab, &m, &schema).unwrap();
        assert!((fv.values[0] - 1.0).abs() < 1e-15);
    }
}

//! Word translation probabilities (IBM Model 1) and the translation-based
//! language model used to score a query against a post–comment pair.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{documents, PostCommentPair, Repository, ShortText};
use crate::error::{Error, Result};

const NULL_WORD: &str = "<NULL>";

/// `T(w|t)`: probability that source word `t` translates into word `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationTable {
    words: Vec<String>,
    ids: HashMap<String, u32>,
    /// Indexed by source id; entries sorted by target id.
    rows: Vec<Vec<(u32, f64)>>,
    min_freq: u32,
    iterations: usize,
    null_token: bool,
    vocab_tag: String,
}

impl TranslationTable {
    fn from_entries(
        entries: impl IntoIterator<Item = (String, String, f64)>,
        min_freq: u32,
        iterations: usize,
        null_token: bool,
        vocab_tag: String,
    ) -> Self {
        let entries: Vec<(String, String, f64)> = entries.into_iter().collect();
        let mut words: Vec<String> = entries.iter().flat_map(|(t, w, _)| [t.clone(), w.clone()]).collect();
        words.sort_unstable();
        words.dedup();
        let ids: HashMap<String, u32> = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut rows = vec![Vec::new(); words.len()];
        for (t, w, p) in entries {
            rows[ids[&t] as usize].push((ids[&w], p));
        }
        for row in &mut rows {
            row.sort_by_key(|&(w, _)| w);
        }
        TranslationTable {
            words,
            ids,
            rows,
            min_freq,
            iterations,
            null_token,
            vocab_tag,
        }
    }

    pub fn min_freq(&self) -> u32 {
        self.min_freq
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn vocab_tag(&self) -> &str {
        &self.vocab_tag
    }

    /// `T(w|t)`; zero for unknown words.
    pub fn prob(&self, w: &str, t: &str) -> f64 {
        let (Some(&ti), Some(&wi)) = (self.ids.get(t), self.ids.get(w)) else {
            return 0.0;
        };
        let row = &self.rows[ti as usize];
        row.binary_search_by_key(&wi, |&(id, _)| id)
            .map(|k| row[k].1)
            .unwrap_or(0.0)
    }

    /// Source words that have at least one translation.
    pub fn sources(&self) -> impl Iterator<Item = &str> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_empty())
            .map(|(i, _)| self.words[i].as_str())
    }

    /// Translations of `t`, most probable first.
    pub fn row(&self, t: &str) -> Vec<(&str, f64)> {
        let Some(&ti) = self.ids.get(t) else {
            return Vec::new();
        };
        let mut row: Vec<(&str, f64)> = self.rows[ti as usize]
            .iter()
            .map(|&(w, p)| (self.words[w as usize].as_str(), p))
            .collect();
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        row
    }

    /// `Σ_w T(w|t)` for every source word with entries.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| r.iter().map(|&(_, p)| p).sum())
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# stc-trans v1 min_freq={} iterations={} null={} tag={}",
            self.min_freq, self.iterations, self.null_token, self.vocab_tag
        )?;
        for (ti, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let t = &self.words[ti];
            for (w, p) in self.row(t) {
                writeln!(out, "{t}\t{w}\t{p}")?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("translation table", "empty file"))??;
        let rest = header
            .strip_prefix("# stc-trans v1 ")
            .ok_or_else(|| Error::format("translation table", format!("bad header `{header}`")))?;
        let mut fields = HashMap::new();
        for kv in rest.split(' ') {
            if let Some((k, v)) = kv.split_once('=') {
                fields.insert(k, v);
            }
        }
        let field = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::format("translation table", format!("missing `{k}`")))
        };
        let bad = |k: &str| Error::format("translation table", format!("bad `{k}`"));
        let min_freq = field("min_freq")?.parse().map_err(|_| bad("min_freq"))?;
        let iterations = field("iterations")?.parse().map_err(|_| bad("iterations"))?;
        let null_token = field("null")?.parse().map_err(|_| bad("null"))?;
        let tag = field("tag")?.to_string();
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(w), Some(p), None) => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| Error::format("translation table", format!("bad `{line}`")))?;
                    entries.push((t.to_string(), w.to_string(), p));
                }
                _ => return Err(Error::format("translation table", format!("bad `{line}`"))),
            }
        }
        Ok(TranslationTable::from_entries(
            entries, min_freq, iterations, null_token, tag,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ibm1Config {
    pub em_iters: usize,
    pub min_freq: u32,
    /// Add an empty source word to every source sentence.
    pub null_token: bool,
}

impl Default for Ibm1Config {
    fn default() -> Self {
        Ibm1Config {
            em_iters: 5,
            min_freq: 10,
            null_token: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Ibm1Training {
    pub table: TranslationTable,
    /// Corpus log-likelihood under the initial parameters and after every
    /// EM iteration (`em_iters + 1` values).
    pub log_likelihood: Vec<f64>,
}

/// Source/target token sequences.
pub type Bitext = Vec<(Vec<String>, Vec<String>)>;

/// Both directions of every pair: `(post → comment)` then `(comment → post)`.
pub fn pooled_bitext(repo: &Repository) -> Bitext {
    let forward = repo.iter().map(|p| (tokens(&p.post), tokens(&p.comment)));
    let backward = repo.iter().map(|p| (tokens(&p.comment), tokens(&p.post)));
    forward.chain(backward).collect()
}

fn tokens(text: &ShortText) -> Vec<String> {
    text.words().map(str::to_string).collect()
}

/// Drops words whose token frequency over the original pairs is below
/// `min_freq`, and sentence pairs left with an empty side.
fn filter_rare(repo: &Repository, bitext: Bitext, min_freq: u32) -> Bitext {
    let mut freq: HashMap<&str, u32> = HashMap::new();
    for p in repo {
        for w in p.post.words().chain(p.comment.words()) {
            *freq.entry(w).or_insert(0) += 1;
        }
    }
    bitext
        .into_iter()
        .map(|(s, t)| {
            let keep = |v: Vec<String>| -> Vec<String> {
                v.into_iter()
                    .filter(|w| freq.get(w.as_str()).copied().unwrap_or(0) >= min_freq)
                    .collect()
            };
            (keep(s), keep(t))
        })
        .filter(|(s, t)| !s.is_empty() && !t.is_empty())
        .collect()
}

/// Trains `T(w|t)` on the pooled parallel corpus of a repository.
pub fn train_ibm1(repo: &Repository, cfg: &Ibm1Config, vocab_tag: &str) -> Result<Ibm1Training> {
    if cfg.em_iters == 0 {
        return Err(Error::Config("em_iters must be at least 1".into()));
    }
    let bitext = filter_rare(repo, pooled_bitext(repo), cfg.min_freq);
    if bitext.is_empty() {
        return Err(Error::VocabularyEmptied);
    }
    let mut training = train_ibm1_bitext(&bitext, cfg.em_iters, cfg.null_token, vocab_tag)?;
    training.table.min_freq = cfg.min_freq;
    Ok(training)
}

/// IBM Model 1 EM from a uniform start on an explicit bitext.
pub fn train_ibm1_bitext(
    bitext: &[(Vec<String>, Vec<String>)],
    em_iters: usize,
    null_token: bool,
    vocab_tag: &str,
) -> Result<Ibm1Training> {
    if em_iters == 0 {
        return Err(Error::Config("em_iters must be at least 1".into()));
    }
    let mut interner = Interner::default();
    let null_id = null_token.then(|| interner.id(NULL_WORD));
    let mut sentences: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(bitext.len());
    let mut target_vocab: Vec<bool> = Vec::new();
    for (src, tgt) in bitext {
        if src.is_empty() || tgt.is_empty() {
            continue;
        }
        let mut s: Vec<u32> = null_id.into_iter().collect();
        s.extend(src.iter().map(|w| interner.id(w)));
        let t: Vec<u32> = tgt.iter().map(|w| interner.id(w)).collect();
        for &w in &t {
            if target_vocab.len() <= w as usize {
                target_vocab.resize(w as usize + 1, false);
            }
            target_vocab[w as usize] = true;
        }
        sentences.push((s, t));
    }
    if sentences.is_empty() {
        return Err(Error::VocabularyEmptied);
    }
    let n_targets = target_vocab.iter().filter(|&&b| b).count();
    let uniform = 1.0 / n_targets as f64;

    let key = |s: u32, t: u32| ((s as u64) << 32) | t as u64;
    let mut table: HashMap<u64, f64> = HashMap::new();
    for (s, t) in &sentences {
        for &e in s {
            for &f in t {
                table.insert(key(e, f), uniform);
            }
        }
    }

    let log_likelihood_of = |table: &HashMap<u64, f64>| -> f64 {
        let mut ll = 0.0;
        for (s, t) in &sentences {
            let l = s.len() as f64;
            for &f in t {
                let denom: f64 = s.iter().map(|&e| table[&key(e, f)]).sum();
                ll += (denom / l).ln();
            }
        }
        ll
    };

    let mut trace = Vec::with_capacity(em_iters + 1);
    let mut denoms: Vec<f64> = Vec::new();
    for _ in 0..em_iters {
        let mut counts: HashMap<u64, f64> = HashMap::with_capacity(table.len());
        let mut totals: HashMap<u32, f64> = HashMap::new();
        let mut ll = 0.0;
        for (s, t) in &sentences {
            let l = s.len() as f64;
            denoms.clear();
            for &f in t {
                let denom: f64 = s.iter().map(|&e| table[&key(e, f)]).sum();
                ll += (denom / l).ln();
                denoms.push(denom);
            }
            for (&f, &denom) in t.iter().zip(&denoms) {
                for &e in s {
                    let c = table[&key(e, f)] / denom;
                    *counts.entry(key(e, f)).or_insert(0.0) += c;
                    *totals.entry(e).or_insert(0.0) += c;
                }
            }
        }
        trace.push(ll);
        for (k, c) in counts {
            let e = (k >> 32) as u32;
            table.insert(k, c / totals[&e]);
        }
    }
    trace.push(log_likelihood_of(&table));

    let words = interner.words;
    let entries = table.into_iter().map(|(k, p)| {
        let e = (k >> 32) as usize;
        let f = (k & 0xffff_ffff) as usize;
        (words[e].to_string(), words[f].to_string(), p)
    });
    let table = TranslationTable::from_entries(entries, 0, em_iters, null_token, vocab_tag.to_string());
    Ok(Ibm1Training {
        table,
        log_likelihood: trace,
    })
}

#[derive(Default)]
struct Interner<'a> {
    ids: HashMap<&'a str, u32>,
    words: Vec<&'a str>,
}

impl<'a> Interner<'a> {
    fn id(&mut self, w: &'a str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w);
        self.ids.insert(w, id);
        id
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransLmConfig {
    /// Jelinek-Mercer weight of the collection model.
    pub alpha: f64,
    /// Weight of the response side against the post side.
    pub beta: f64,
    /// Weight of the translation model against the unigram model.
    pub gamma: f64,
}

impl Default for TransLmConfig {
    fn default() -> Self {
        TransLmConfig {
            alpha: 0.8,
            beta: 0.9,
            gamma: 0.5,
        }
    }
}

impl TransLmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Maximum-likelihood unigram model of one text.
#[derive(Clone, Debug)]
pub struct TextLm<'a> {
    counts: BTreeMap<&'a str, usize>,
    len: usize,
}

impl<'a> TextLm<'a> {
    pub fn new(text: &'a ShortText) -> Self {
        TextLm {
            counts: text.term_counts(),
            len: text.token_count(),
        }
    }

    /// `count(w, x) / |x|`; zero for the empty text.
    pub fn prob(&self, w: &str) -> f64 {
        if self.len == 0 {
            return 0.0;
        }
        self.counts.get(w).copied().unwrap_or(0) as f64 / self.len as f64
    }

    /// `Σ_{t ∈ x} T(w|t) P_ml(t|x)`; unknown `t` contribute nothing.
    pub fn translation_prob(&self, table: &TranslationTable, w: &str) -> f64 {
        if self.len == 0 {
            return 0.0;
        }
        self.counts
            .iter()
            .map(|(t, &c)| table.prob(w, t) * c as f64 / self.len as f64)
            .sum()
    }
}

/// `P_ml(w|x)` for a single text.
pub fn unigram_prob(text: &ShortText, w: &str) -> f64 {
    TextLm::new(text).prob(w)
}

/// `Σ_{t ∈ text} T(w|t) P_ml(t|text)`.
pub fn trans_prob(table: &TranslationTable, text: &ShortText, w: &str) -> f64 {
    TextLm::new(text).translation_prob(table, w)
}

/// Add-one smoothed unigram model of the whole collection.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectionLm {
    counts: HashMap<String, u64>,
    total: u64,
}

impl CollectionLm {
    /// Counts tokens over the repository's document set (distinct posts and
    /// all comments).
    pub fn from_repository(repo: &Repository) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0;
        for doc in documents(repo) {
            for w in doc.words() {
                *counts.entry(w.to_string()).or_insert(0) += 1;
                total += 1;
            }
        }
        CollectionLm { counts, total }
    }

    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let total = counts.values().sum();
        CollectionLm { counts, total }
    }

    pub fn contains(&self, w: &str) -> bool {
        self.counts.contains_key(w)
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `(count(w) + 1) / (|C| + |V|)`.
    pub fn prob(&self, w: &str) -> f64 {
        let c = self.counts.get(w).copied().unwrap_or(0);
        (c + 1) as f64 / (self.total + self.counts.len() as u64) as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransLmScore {
    /// `Σ log P(w | (p, r))` over scored query words.
    pub log_prob: f64,
    pub scored_words: usize,
    /// Query tokens outside the collection vocabulary.
    pub skipped_words: usize,
}

impl TransLmScore {
    /// Log-probability per scored query word; zero when nothing was scored.
    pub fn per_word(&self) -> f64 {
        if self.scored_words == 0 {
            0.0
        } else {
            self.log_prob / self.scored_words as f64
        }
    }
}

/// Scores a query against a post–comment pair.
pub struct PairScorer<'a> {
    table: &'a TranslationTable,
    cfg: &'a TransLmConfig,
    collection: &'a CollectionLm,
    post: TextLm<'a>,
    comment: TextLm<'a>,
}

impl<'a> PairScorer<'a> {
    pub fn new(
        table: &'a TranslationTable,
        cfg: &'a TransLmConfig,
        collection: &'a CollectionLm,
        pair: &'a PostCommentPair,
    ) -> Self {
        PairScorer {
            table,
            cfg,
            collection,
            post: TextLm::new(&pair.post),
            comment: TextLm::new(&pair.comment),
        }
    }

    /// Mixture of the post and response models, before collection smoothing.
    pub fn mixture_prob(&self, w: &str) -> f64 {
        let g = self.cfg.gamma;
        let side = |lm: &TextLm<'_>| {
            let unigram = if g < 1.0 { lm.prob(w) } else { 0.0 };
            let trans = if g > 0.0 {
                lm.translation_prob(self.table, w)
            } else {
                0.0
            };
            (1.0 - g) * unigram + g * trans
        };
        (1.0 - self.cfg.beta) * side(&self.post) + self.cfg.beta * side(&self.comment)
    }

    pub fn word_prob(&self, w: &str) -> f64 {
        (1.0 - self.cfg.alpha) * self.mixture_prob(w) + self.cfg.alpha * self.collection.prob(w)
    }

    pub fn score(&self, q: &ShortText) -> TransLmScore {
        let mut out = TransLmScore::default();
        for w in q.words() {
            if !self.collection.contains(w) {
                out.skipped_words += 1;
                continue;
            }
            out.log_prob += self.word_prob(w).ln();
            out.scored_words += 1;
        }
        out
    }
}

/// `Σ_{w ∈ q} log P_TransLM(w | (p, r))`, skipping out-of-vocabulary words.
pub fn translm_logscore(
    table: &TranslationTable,
    cfg: &TransLmConfig,
    q: &ShortText,
    pair: &PostCommentPair,
    collection: &CollectionLm,
) -> TransLmScore {
    PairScorer::new(table, cfg, collection, pair).score(q)
}

//! Repository of post–comment pairs: parsing, cleaning, vocabulary and TF-IDF.
//!
//! The corpus file is UTF-8 with one pair per line and four tab-separated
//! fields: `pair_id  post_id  post_text  comment_text`. Texts are already
//! segmented: tokens are separated by spaces, each token is either a bare
//! surface or `surface|POS|NE`, and the literal token `||` separates
//! sentences.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentence separator inside a text field.
pub const SENTENCE_SEP: &str = "||";

/// Coarse part-of-speech tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Other,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Other => "OTHER",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NOUN" | "N" => Ok(Pos::Noun),
            "VERB" | "V" => Ok(Pos::Verb),
            "ADJ" | "A" => Ok(Pos::Adj),
            "OTHER" | "O" | "" => Ok(Pos::Other),
            other => Err(format!("unknown POS tag `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: Pos,
    pub is_ne: bool,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: Pos, is_ne: bool) -> Self {
        Token {
            surface: surface.into(),
            pos,
            is_ne,
        }
    }

    pub fn plain(surface: impl Into<String>) -> Self {
        Token::new(surface, Pos::Other, false)
    }

    fn parse(raw: &str) -> std::result::Result<Self, String> {
        let mut parts = raw.split('|');
        let surface = parts.next().unwrap_or_default();
        if surface.is_empty() {
            return Err(format!("empty token surface in `{raw}`"));
        }
        let pos = match parts.next() {
            Some(p) => p.parse::<Pos>()?,
            None => Pos::Other,
        };
        let is_ne = match parts.next() {
            None | Some("0") => false,
            Some("1") => true,
            Some(other) => return Err(format!("NE flag must be 0 or 1, got `{other}`")),
        };
        if parts.next().is_some() {
            return Err(format!("too many annotations in token `{raw}`"));
        }
        Ok(Token::new(surface, pos, is_ne))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pos == Pos::Other && !self.is_ne {
            f.write_str(&self.surface)
        } else {
            write!(f, "{}|{}|{}", self.surface, self.pos.as_str(), u8::from(self.is_ne))
        }
    }
}

/// A post, comment or query: ordered sentences of annotated tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortText {
    sentences: Vec<Vec<Token>>,
    raw_char_len: usize,
}

impl ShortText {
    /// Builds a text from sentences. Empty sentences are dropped, but the
    /// text always keeps at least one (possibly empty) sentence.
    ///
    /// The untokenized surface is the concatenation of token surfaces, so
    /// `raw_char_len` counts characters without separators, as for
    /// unsegmented CJK text.
    pub fn new(sentences: Vec<Vec<Token>>) -> Self {
        let mut sentences: Vec<Vec<Token>> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        if sentences.is_empty() {
            sentences.push(Vec::new());
        }
        let raw_char_len = sentences.iter().flatten().map(|t| t.surface.chars().count()).sum();
        ShortText {
            sentences,
            raw_char_len,
        }
    }

    pub fn empty() -> Self {
        ShortText::new(Vec::new())
    }

    /// Parses the corpus text format (`a b|NOUN|1 || c`).
    pub fn parse(field: &str) -> std::result::Result<Self, String> {
        let mut sentences = vec![Vec::new()];
        for raw in field.split(' ').filter(|t| !t.is_empty()) {
            if raw == SENTENCE_SEP {
                sentences.push(Vec::new());
            } else {
                sentences.last_mut().unwrap().push(Token::parse(raw)?);
            }
        }
        Ok(ShortText::new(sentences))
    }

    /// Whitespace tokenization of unsegmented input; every token is
    /// `OTHER`, non-NE, and the whole message is one sentence.
    pub fn from_raw(message: &str) -> Self {
        ShortText::new(vec![message.split_whitespace().map(Token::plain).collect()])
    }

    pub fn sentences(&self) -> &[Vec<Token>] {
        &self.sentences
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> + '_ {
        self.sentences.iter().flatten()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens().map(|t| t.surface.as_str())
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.token_count() == 0
    }

    pub fn raw_char_len(&self) -> usize {
        self.raw_char_len
    }

    /// Concatenated token surfaces.
    pub fn surface(&self) -> String {
        self.words().collect()
    }

    /// Distinct word types, sorted.
    pub fn word_types(&self) -> Vec<&str> {
        let mut types: Vec<&str> = self.words().collect();
        types.sort_unstable();
        types.dedup();
        types
    }

    /// Token counts per word.
    pub fn term_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for w in self.words() {
            *counts.entry(w).or_insert(0) += 1;
        }
        counts
    }
}

impl fmt::Display for ShortText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, sentence) in self.sentences.iter().enumerate() {
            if i > 0 {
                write!(f, " {SENTENCE_SEP} ")?;
            }
            for (j, tok) in sentence.iter().enumerate() {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{tok}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostCommentPair {
    pub pair_id: u32,
    pub post_id: u64,
    pub post: ShortText,
    pub comment: ShortText,
    /// 1-based position of this comment under its post, in file order.
    pub comment_rank: u32,
}

/// A parsed line the parser refused.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

/// Repository of pairs, kept in input order.
#[derive(Clone, Debug, Default)]
pub struct Repository {
    pairs: Vec<PostCommentPair>,
    by_id: HashMap<u32, usize>,
}

impl Repository {
    pub fn from_pairs(pairs: Vec<PostCommentPair>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            if by_id.insert(p.pair_id, i).is_some() {
                return Err(Error::DuplicatePairId {
                    pair_id: p.pair_id,
                    line: i + 1,
                });
            }
        }
        Ok(Repository { pairs, by_id })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[PostCommentPair] {
        &self.pairs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PostCommentPair> {
        self.pairs.iter()
    }

    pub fn get(&self, pair_id: u32) -> Option<&PostCommentPair> {
        self.by_id.get(&pair_id).map(|&i| &self.pairs[i])
    }

    /// Pair ids in ascending order.
    pub fn sorted_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.pairs.iter().map(|p| p.pair_id).collect();
        ids.sort_unstable();
        ids
    }

    /// Writes the repository in the corpus file format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.pairs {
            writeln!(out, "{}\t{}\t{}\t{}", p.pair_id, p.post_id, p.post, p.comment)?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Repository {
    type Item = &'a PostCommentPair;
    type IntoIter = std::slice::Iter<'a, PostCommentPair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

#[derive(Debug)]
pub struct ParsedCorpus {
    pub repository: Repository,
    pub rejections: Vec<Rejection>,
}

/// Parses corpus lines. Malformed lines are rejected with a reason and
/// their 1-based line number; a repeated `pair_id` is a hard error.
pub fn parse_corpus<R: BufRead>(input: R) -> Result<ParsedCorpus> {
    let mut pairs = Vec::new();
    let mut rejections = Vec::new();
    let mut seen = HashSet::new();
    let mut ranks: HashMap<u64, u32> = HashMap::new();

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            rejections.push(Rejection {
                line: line_no,
                reason: format!("field count: expected 4, found {}", fields.len()),
            });
            continue;
        }
        let parsed = (|| -> std::result::Result<(u32, u64, ShortText, ShortText), String> {
            let pair_id = fields[0].trim().parse::<u32>().map_err(|e| format!("pair_id: {e}"))?;
            let post_id = fields[1].trim().parse::<u64>().map_err(|e| format!("post_id: {e}"))?;
            let post = ShortText::parse(fields[2]).map_err(|e| format!("post: {e}"))?;
            let comment = ShortText::parse(fields[3]).map_err(|e| format!("comment: {e}"))?;
            Ok((pair_id, post_id, post, comment))
        })();
        match parsed {
            Ok((pair_id, post_id, post, comment)) => {
                if !seen.insert(pair_id) {
                    return Err(Error::DuplicatePairId { pair_id, line: line_no });
                }
                let rank = ranks.entry(post_id).or_insert(0);
                *rank += 1;
                pairs.push(PostCommentPair {
                    pair_id,
                    post_id,
                    post,
                    comment,
                    comment_rank: *rank,
                });
            }
            Err(reason) => rejections.push(Rejection { line: line_no, reason }),
        }
    }

    Ok(ParsedCorpus {
        repository: Repository::from_pairs(pairs)?,
        rejections,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub min_post_chars: usize,
    pub min_comment_chars: usize,
    pub max_comments_per_post: u32,
    /// Comments at least this long are candidates for the advertisement rule.
    pub ad_min_chars: usize,
    /// A long comment seen under this many distinct posts is an advertisement.
    pub ad_min_repeats: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            min_post_chars: 10,
            min_comment_chars: 5,
            max_comments_per_post: 100,
            ad_min_chars: 30,
            ad_min_repeats: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub short_post: usize,
    pub short_comment: usize,
    pub beyond_rank: usize,
    pub advertisement: usize,
    pub kept: usize,
}

/// Applies the length, comment-rank and advertisement rules in that order.
pub fn clean_pairs(repo: &Repository, rules: &CleaningConfig) -> (Repository, CleaningReport) {
    let mut report = CleaningReport {
        input: repo.len(),
        ..Default::default()
    };

    let mut survivors: Vec<&PostCommentPair> = Vec::with_capacity(repo.len());
    for p in repo {
        if p.post.raw_char_len() < rules.min_post_chars {
            report.short_post += 1;
        } else if p.comment.raw_char_len() < rules.min_comment_chars {
            report.short_comment += 1;
        } else if p.comment_rank > rules.max_comments_per_post {
            report.beyond_rank += 1;
        } else {
            survivors.push(p);
        }
    }

    let mut posts_by_comment: HashMap<String, HashSet<u64>> = HashMap::new();
    for p in &survivors {
        if p.comment.raw_char_len() >= rules.ad_min_chars {
            posts_by_comment
                .entry(p.comment.surface())
                .or_default()
                .insert(p.post_id);
        }
    }
    let ads: HashSet<&str> = posts_by_comment
        .iter()
        .filter(|(_, posts)| posts.len() >= rules.ad_min_repeats)
        .map(|(c, _)| c.as_str())
        .collect();

    let mut kept = Vec::with_capacity(survivors.len());
    for p in survivors {
        if !ads.is_empty()
            && p.comment.raw_char_len() >= rules.ad_min_chars
            && ads.contains(p.comment.surface().as_str())
        {
            report.advertisement += 1;
        } else {
            kept.push(p.clone());
        }
    }
    report.kept = kept.len();
    let cleaned = Repository::from_pairs(kept).expect("subset of a valid repository");
    (cleaned, report)
}

/// Word ids with document frequencies over posts and comments.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    df: Vec<u32>,
    ids: HashMap<String, u32>,
    n_docs: u32,
    tag: String,
}

impl Vocabulary {
    fn from_parts(words: Vec<String>, df: Vec<u32>, n_docs: u32) -> Self {
        let ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut v = Vocabulary {
            words,
            df,
            ids,
            n_docs,
            tag: String::new(),
        };
        v.tag = v.compute_tag();
        v
    }

    fn compute_tag(&self) -> String {
        let mut buf = Vec::new();
        self.write_body(&mut buf).expect("in-memory write");
        crate::math::sha256_hex(&buf)[..16].to_string()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    /// Content hash shared by every artifact trained against this vocabulary.
    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn df(&self, id: u32) -> u32 {
        self.df[id as usize]
    }

    pub fn lookup(&self, word: &str) -> Option<(u32, u32)> {
        self.id(word).map(|id| (id, self.df(id)))
    }

    /// `ln((N + 1) / (df + 1)) + 1`.
    pub fn idf(&self, id: u32) -> f64 {
        idf_formula(self.n_docs, self.df(id))
    }

    /// IDF of a word, treating unseen words as `df = 0`.
    pub fn idf_of(&self, word: &str) -> f64 {
        match self.id(word) {
            Some(id) => self.idf(id),
            None => idf_formula(self.n_docs, 0),
        }
    }

    fn write_body<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "n_docs\t{}", self.n_docs)?;
        for (w, df) in self.words.iter().zip(&self.df) {
            writeln!(out, "{w}\t{df}")?;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# stc-vocab v1 tag={}", self.tag)?;
        self.write_body(&mut out)?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("vocabulary", "empty file"))??;
        let tag = header
            .strip_prefix("# stc-vocab v1 tag=")
            .ok_or_else(|| Error::format("vocabulary", format!("bad header `{header}`")))?
            .to_string();
        let n_line = lines
            .next()
            .ok_or_else(|| Error::format("vocabulary", "missing n_docs"))??;
        let n_docs = n_line
            .strip_prefix("n_docs\t")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::format("vocabulary", format!("bad n_docs line `{n_line}`")))?;
        let mut words = Vec::new();
        let mut df = Vec::new();
        for line in lines {
            let line = line?;
            let (w, d) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("vocabulary", format!("bad entry `{line}`")))?;
            words.push(w.to_string());
            df.push(
                d.parse()
                    .map_err(|_| Error::format("vocabulary", format!("bad df in `{line}`")))?,
            );
        }
        let vocab = Vocabulary::from_parts(words, df, n_docs);
        if vocab.tag != tag {
            return Err(Error::Checksum(format!(
                "vocabulary (header {tag}, content {})",
                vocab.tag
            )));
        }
        Ok(vocab)
    }
}

pub(crate) fn idf_formula(n_docs: u32, df: u32) -> f64 {
    ((n_docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

/// Iterates the document set of a repository: each distinct post once
/// (first occurrence by `post_id`) and every comment.
pub(crate) fn documents(repo: &Repository) -> impl Iterator<Item = &ShortText> + '_ {
    let mut seen_posts = HashSet::new();
    repo.iter().flat_map(move |p| {
        let post = seen_posts.insert(p.post_id).then_some(&p.post);
        post.into_iter().chain(std::iter::once(&p.comment))
    })
}

/// Counts document frequency over distinct posts and all comments. Word ids
/// follow first appearance in repository order.
pub fn build_vocabulary(repo: &Repository) -> Result<Vocabulary> {
    if repo.is_empty() {
        return Err(Error::EmptyRepository);
    }
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut words: Vec<String> = Vec::new();
    let mut df: Vec<u32> = Vec::new();
    let mut n_docs = 0u32;
    for doc in documents(repo) {
        n_docs += 1;
        for w in doc.word_types() {
            let id = *ids.entry(w).or_insert_with(|| {
                words.push(w.to_string());
                df.push(0);
                (words.len() - 1) as u32
            });
            df[id as usize] += 1;
        }
    }
    Ok(Vocabulary::from_parts(words, df, n_docs))
}

/// Sparse weighted bag of words with strictly increasing ids and no zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new() -> Self {
        SparseVector::default()
    }

    /// Sums duplicate ids and drops zero weights.
    pub fn from_entries(entries: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (id, w) in entries {
            *acc.entry(id).or_insert(0.0) += w;
        }
        SparseVector {
            entries: acc.into_iter().filter(|&(_, w)| w != 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u32) -> f64 {
        self.entries
            .binary_search_by_key(&id, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Cosine similarity; zero when either vector is empty.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            (self.dot(other) / denom).clamp(-1.0, 1.0)
        }
    }

    pub fn scaled(&self, factor: f64) -> SparseVector {
        SparseVector::from_entries(self.entries.iter().map(|&(i, w)| (i, w * factor)))
    }

    /// Unit-length copy; the empty vector stays empty.
    pub fn normalized(&self) -> SparseVector {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            SparseVector {
                entries: self.entries.iter().map(|&(i, w)| (i, w / n)).collect(),
            }
        }
    }
}

/// `tf(w) * idf(w)` over in-vocabulary words.
pub fn tfidf_vector(text: &ShortText, vocab: &Vocabulary) -> SparseVector {
    let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
    for w in text.words() {
        if let Some(id) = vocab.id(w) {
            *tf.entry(id).or_insert(0) += 1;
        }
    }
    SparseVector {
        entries: tf.into_iter().map(|(id, n)| (id, n as f64 * vocab.idf(id))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(s: &str) -> ShortText {
        ShortText::parse(s).unwrap()
    }

    fn pair(pair_id: u32, post_id: u64, post: &str, comment: &str, rank: u32) -> PostCommentPair {
        PostCommentPair {
            pair_id,
            post_id,
            post: text(post),
            comment: text(comment),
            comment_rank: rank,
        }
    }

    #[test]
    fn empty_stream_is_empty_repository() {
        let parsed = parse_corpus("".as_bytes()).unwrap();
        assert!(parsed.repository.is_empty());
        assert!(parsed.rejections.is_empty());
    }

    #[test]
    fn single_line() {
        let parsed = parse_corpus("1\t7\thello world\tnice one\n".as_bytes()).unwrap();
        assert_eq!(parsed.repository.len(), 1);
        let p = parsed.repository.get(1).unwrap();
        assert_eq!(p.post_id, 7);
        assert_eq!(p.comment_rank, 1);
        assert_eq!(p.post.raw_char_len(), 10);
    }

    #[test]
    fn wrong_field_count_is_rejected() {
        let parsed = parse_corpus("1\t7\tonly three\n".as_bytes()).unwrap();
        assert!(parsed.repository.is_empty());
        assert_eq!(parsed.rejections.len(), 1);
        assert_eq!(parsed.rejections[0].line, 1);
        assert!(parsed.rejections[0].reason.starts_with("field count"));
    }

    #[test]
    fn bad_annotations_are_rejected_with_line_numbers() {
        let input = "1\t1\ta|NOUN|1 b\tc\n2\t1\ta|XYZ\tc\n3\t1\ta|NOUN|7\tc\nx\t1\ta\tb\n";
        let parsed = parse_corpus(input.as_bytes()).unwrap();
        assert_eq!(parsed.repository.len(), 1);
        let lines: Vec<usize> = parsed.rejections.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
    }

    #[test]
    fn duplicate_pair_id_is_hard_error() {
        let err = parse_corpus("1\t1\ta\tb\n1\t2\tc\td\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DuplicatePairId { pair_id: 1, line: 2 }));
    }

    #[test]
    fn comment_rank_follows_file_order_per_post() {
        let input = "1\t5\tp\ta\n2\t6\tq\tb\n3\t5\tp\tc\n";
        let repo = parse_corpus(input.as_bytes()).unwrap().repository;
        assert_eq!(repo.get(3).unwrap().comment_rank, 2);
        assert_eq!(repo.get(2).unwrap().comment_rank, 1);
    }

    #[test]
    fn parse_annotations_and_sentences() {
        let t = text("a|NOUN|1 b || c|VERB|0 ||  || d");
        assert_eq!(t.sentences().len(), 3);
        assert_eq!(t.sentences()[0][0], Token::new("a", Pos::Noun, true));
        assert_eq!(t.sentences()[0][1], Token::plain("b"));
        assert_eq!(t.sentences()[1][0].pos, Pos::Verb);
        assert_eq!(t.to_string(), "a|NOUN|1 b || c|VERB|0 || d");
        assert_eq!(text(&t.to_string()), t);
    }

    #[test]
    fn empty_text_keeps_one_sentence() {
        let t = text("");
        assert_eq!(t.sentences().len(), 1);
        assert!(t.is_empty());
        assert_eq!(t.raw_char_len(), 0);
    }

    #[test]
    fn short_post_is_dropped() {
        let repo = Repository::from_pairs(vec![
            pair(1, 1, "abcdefghi", "long enough", 1),
            pair(2, 2, "abcdefghij", "long enough", 1),
        ])
        .unwrap();
        let (clean, report) = clean_pairs(&repo, &CleaningConfig::default());
        assert_eq!(report.short_post, 1);
        assert!(clean.get(1).is_none());
        assert!(clean.get(2).is_some());
    }

    #[test]
    fn short_comment_is_dropped() {
        let repo = Repository::from_pairs(vec![pair(1, 1, "abcdefghij", "abcd", 1)]).unwrap();
        let (clean, report) = clean_pairs(&repo, &CleaningConfig::default());
        assert!(clean.is_empty());
        assert_eq!(report.short_comment, 1);
    }

    #[test]
    fn comment_beyond_rank_limit_is_dropped() {
        let repo = Repository::from_pairs(vec![
            pair(1, 1, "abcdefghij", "abcdef", 100),
            pair(2, 1, "abcdefghij", "abcdef", 101),
        ])
        .unwrap();
        let (clean, report) = clean_pairs(&repo, &CleaningConfig::default());
        assert_eq!(report.beyond_rank, 1);
        assert!(clean.get(1).is_some());
        assert!(clean.get(2).is_none());
    }

    #[test]
    fn repeated_long_comment_is_an_advertisement() {
        let ad = "x".repeat(40);
        let pairs: Vec<_> = (0..3)
            .map(|i| pair(i, i as u64, "abcdefghij", &ad, 1))
            .chain(std::iter::once(pair(9, 9, "abcdefghij", "a real reply", 1)))
            .collect();
        let repo = Repository::from_pairs(pairs).unwrap();

        // Brute-force oracle: for each long comment, count the distinct posts
        // carrying the same surface string.
        let oracle: Vec<u32> = repo
            .iter()
            .filter(|p| {
                p.comment.raw_char_len() >= 30
                    && repo
                        .iter()
                        .filter(|q| q.comment.surface() == p.comment.surface())
                        .map(|q| q.post_id)
                        .collect::<HashSet<_>>()
                        .len()
                        >= 3
            })
            .map(|p| p.pair_id)
            .collect();
        assert_eq!(oracle, vec![0, 1, 2]);

        let (clean, report) = clean_pairs(&repo, &CleaningConfig::default());
        assert_eq!(report.advertisement, 3);
        assert_eq!(clean.sorted_ids(), vec![9]);
    }

    #[test]
    fn long_comment_under_two_posts_is_kept() {
        let long = "y".repeat(40);
        let repo = Repository::from_pairs(vec![
            pair(1, 1, "abcdefghij", &long, 1),
            pair(2, 2, "abcdefghij", &long, 1),
            pair(3, 2, "abcdefghij", &long, 2),
        ])
        .unwrap();
        let (clean, _) = clean_pairs(&repo, &CleaningConfig::default());
        assert_eq!(clean.len(), 3);
    }

    #[test]
    fn vocabulary_counts_post_and_comment() {
        let repo = Repository::from_pairs(vec![pair(1, 1, "a b", "a", 1)]).unwrap();
        let vocab = build_vocabulary(&repo).unwrap();
        assert_eq!(vocab.n_docs(), 2);
        assert_eq!(vocab.lookup("a").map(|(_, df)| df), Some(2));
        assert_eq!(vocab.lookup("zzz"), None);
    }

    #[test]
    fn shared_post_is_one_document() {
        let repo = Repository::from_pairs(vec![pair(1, 1, "a", "b", 1), pair(2, 1, "a", "c", 2)]).unwrap();
        let vocab = build_vocabulary(&repo).unwrap();
        assert_eq!(vocab.n_docs(), 3);
        assert_eq!(vocab.lookup("a").unwrap().1, 1);
    }

    #[test]
    fn idf_hand_value() {
        // 3 documents, word in exactly one: ln(4/2) + 1.
        let repo = Repository::from_pairs(vec![pair(1, 1, "a", "b", 1), pair(2, 1, "a", "c", 2)]).unwrap();
        let vocab = build_vocabulary(&repo).unwrap();
        let idf = vocab.idf(vocab.id("b").unwrap());
        assert!((idf - (2f64.ln() + 1.0)).abs() < 1e-12);
        assert!((idf - 1.6931).abs() < 1e-4);
    }

    #[test]
    fn empty_repository_has_no_vocabulary() {
        assert!(matches!(
            build_vocabulary(&Repository::default()),
            Err(Error::EmptyRepository)
        ));
    }

    #[test]
    fn tfidf_repeated_token() {
        let repo = Repository::from_pairs(vec![pair(1, 1, "a b", "c", 1)]).unwrap();
        let vocab = build_vocabulary(&repo).unwrap();
        let v = tfidf_vector(&text("a a zz"), &vocab);
        let a = vocab.id("a").unwrap();
        assert_eq!(v.entries(), &[(a, 2.0 * vocab.idf(a))]);
        assert!(tfidf_vector(&text("zz qq"), &vocab).is_empty());
        assert!(tfidf_vector(&ShortText::empty(), &vocab).is_empty());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let repo = Repository::from_pairs(vec![pair(1, 1, "a b", "c a", 1), pair(2, 2, "d", "e", 1)]).unwrap();
        let vocab = build_vocabulary(&repo).unwrap();
        let mut buf = Vec::new();
        vocab.write_to(&mut buf).unwrap();
        let back = Vocabulary::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, vocab);
    }

    #[test]
    fn sparse_vector_drops_zeros_and_merges() {
        let v = SparseVector::from_entries([(3, 1.0), (1, 2.0), (3, -1.0), (2, 0.0), (1, 1.0)]);
        assert_eq!(v.entries(), &[(1, 3.0)]);
    }
}

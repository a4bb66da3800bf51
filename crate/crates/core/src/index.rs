//! Inverted index over posts and comments and Stage I candidate retrieval.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{tfidf_vector, Repository, ShortText, SparseVector, Vocabulary};
use crate::error::{Error, Result};
use crate::latent::{self, LatentModel};

const MAGIC: &[u8; 8] = b"STCIDX01";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Post,
    Comment,
}

/// Which basic matching model proposed a candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Q2R,
    Q2P,
    Latent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    vocab_tag: String,
    doc_ids: Vec<u32>,
    position: HashMap<u32, usize>,
    comment_postings: Vec<Vec<(u32, u32)>>,
    post_postings: Vec<Vec<(u32, u32)>>,
    comment_norms: Vec<f64>,
    post_norms: Vec<f64>,
    idf: Vec<f64>,
}

fn term_frequencies(text: &ShortText, vocab: &Vocabulary) -> BTreeMap<u32, u32> {
    let mut tf = BTreeMap::new();
    for w in text.words() {
        if let Some(id) = vocab.id(w) {
            *tf.entry(id).or_insert(0) += 1;
        }
    }
    tf
}

/// Indexes every in-vocabulary token of each pair on its own side.
pub fn build_index(repo: &Repository, vocab: &Vocabulary) -> InvertedIndex {
    let idf: Vec<f64> = (0..vocab.len() as u32).map(|id| vocab.idf(id)).collect();
    let doc_ids = repo.sorted_ids();
    let mut comment_postings = vec![Vec::new(); vocab.len()];
    let mut post_postings = vec![Vec::new(); vocab.len()];
    let mut comment_norms = Vec::with_capacity(doc_ids.len());
    let mut post_norms = Vec::with_capacity(doc_ids.len());

    for &pair_id in &doc_ids {
        let pair = repo.get(pair_id).expect("id from repository");
        for (text, postings, norms) in [
            (&pair.comment, &mut comment_postings, &mut comment_norms),
            (&pair.post, &mut post_postings, &mut post_norms),
        ] {
            let mut sq = 0.0;
            for (id, tf) in term_frequencies(text, vocab) {
                postings[id as usize].push((pair_id, tf));
                let w = tf as f64 * idf[id as usize];
                sq += w * w;
            }
            norms.push(sq.sqrt());
        }
    }

    InvertedIndex::assemble(
        vocab.tag().to_string(),
        doc_ids,
        comment_postings,
        post_postings,
        comment_norms,
        post_norms,
        idf,
    )
}

impl InvertedIndex {
    fn assemble(
        vocab_tag: String,
        doc_ids: Vec<u32>,
        comment_postings: Vec<Vec<(u32, u32)>>,
        post_postings: Vec<Vec<(u32, u32)>>,
        comment_norms: Vec<f64>,
        post_norms: Vec<f64>,
        idf: Vec<f64>,
    ) -> Self {
        let position = doc_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        InvertedIndex {
            vocab_tag,
            doc_ids,
            position,
            comment_postings,
            post_postings,
            comment_norms,
            post_norms,
            idf,
        }
    }

    pub fn vocab_tag(&self) -> &str {
        &self.vocab_tag
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    /// Indexed pair ids, ascending.
    pub fn doc_ids(&self) -> &[u32] {
        &self.doc_ids
    }

    pub fn postings(&self, side: Side, word_id: u32) -> &[(u32, u32)] {
        let lists = match side {
            Side::Post => &self.post_postings,
            Side::Comment => &self.comment_postings,
        };
        lists.get(word_id as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// TF-IDF norm of one side of an indexed pair.
    pub fn norm(&self, side: Side, pair_id: u32) -> Option<f64> {
        let pos = *self.position.get(&pair_id)?;
        Some(match side {
            Side::Post => self.post_norms[pos],
            Side::Comment => self.comment_norms[pos],
        })
    }

    /// Exact top-`k` cosine scores against one side, best first, ties by
    /// ascending pair id. Documents with no shared word are never returned.
    pub fn retrieve_cosine(&self, q: &SparseVector, side: Side, k: usize) -> Vec<(u32, f64)> {
        let q_norm = q.norm();
        if q.is_empty() || q_norm == 0.0 || k == 0 {
            return Vec::new();
        }
        let (lists, norms) = match side {
            Side::Post => (&self.post_postings, &self.post_norms),
            Side::Comment => (&self.comment_postings, &self.comment_norms),
        };
        let mut acc = vec![0.0f64; self.doc_ids.len()];
        let mut touched = Vec::new();
        for &(id, qw) in q.entries() {
            let Some(list) = lists.get(id as usize) else {
                continue;
            };
            let idf = self.idf[id as usize];
            for &(pair_id, tf) in list {
                let pos = self.position[&pair_id];
                if acc[pos] == 0.0 {
                    touched.push(pos);
                }
                acc[pos] += qw * (tf as f64 * idf);
            }
        }
        let mut scored: Vec<(u32, f64)> = touched
            .into_iter()
            .filter(|&pos| norms[pos] > 0.0 && acc[pos] > 0.0)
            .map(|pos| {
                let cos = (acc[pos] / (q_norm * norms[pos])).clamp(-1.0, 1.0);
                (self.doc_ids[pos], cos)
            })
            .collect();
        sort_scored(&mut scored);
        scored.truncate(k);
        scored
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        let tag = self.vocab_tag.as_bytes();
        out.write_all(&(tag.len() as u32).to_le_bytes())?;
        out.write_all(tag)?;
        out.write_all(&(self.idf.len() as u64).to_le_bytes())?;
        out.write_all(&(self.doc_ids.len() as u64).to_le_bytes())?;
        let mut prev = 0u32;
        for &id in &self.doc_ids {
            out.write_all(&(id - prev).to_le_bytes())?;
            prev = id;
        }
        for lists in [&self.comment_postings, &self.post_postings] {
            for list in lists {
                out.write_all(&(list.len() as u32).to_le_bytes())?;
                let mut prev = 0u32;
                for &(pair_id, tf) in list {
                    out.write_all(&(pair_id - prev).to_le_bytes())?;
                    out.write_all(&tf.to_le_bytes())?;
                    prev = pair_id;
                }
            }
        }
        for norms in [&self.comment_norms, &self.post_norms] {
            for n in norms {
                out.write_all(&n.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads an index written by [`InvertedIndex::write_to`]; the vocabulary
    /// supplies IDF values and must carry the same tag.
    pub fn read_from<R: Read>(mut input: R, vocab: &Vocabulary) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| Error::BadIndexHeader)?;
        if &magic != MAGIC {
            return Err(Error::BadIndexHeader);
        }
        let tag_len = read_u32(&mut input)? as usize;
        if tag_len > 1024 {
            return Err(Error::BadIndexHeader);
        }
        let mut tag = vec![0u8; tag_len];
        input.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag).map_err(|_| Error::BadIndexHeader)?;
        if tag != vocab.tag() {
            return Err(Error::VersionMismatch {
                left: "index".into(),
                left_tag: tag,
                right: "vocabulary".into(),
                right_tag: vocab.tag().into(),
            });
        }
        let vocab_size = read_u64(&mut input)? as usize;
        if vocab_size != vocab.len() {
            return Err(Error::format(
                "index",
                format!("vocabulary size {vocab_size} != {}", vocab.len()),
            ));
        }
        let n_docs = read_u64(&mut input)? as usize;
        let mut doc_ids = Vec::with_capacity(n_docs);
        let mut prev = 0u32;
        for _ in 0..n_docs {
            prev += read_u32(&mut input)?;
            doc_ids.push(prev);
        }
        let mut sides = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut lists = Vec::with_capacity(vocab_size);
            for _ in 0..vocab_size {
                let n = read_u32(&mut input)? as usize;
                let mut list = Vec::with_capacity(n.min(n_docs));
                let mut prev = 0u32;
                for _ in 0..n {
                    prev += read_u32(&mut input)?;
                    list.push((prev, read_u32(&mut input)?));
                }
                lists.push(list);
            }
            sides.push(lists);
        }
        let post_postings = sides.pop().unwrap();
        let comment_postings = sides.pop().unwrap();
        let mut norms = [Vec::with_capacity(n_docs), Vec::with_capacity(n_docs)];
        for side in norms.iter_mut() {
            for _ in 0..n_docs {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                side.push(f64::from_le_bytes(b));
            }
        }
        let [comment_norms, post_norms] = norms;
        let idf = (0..vocab.len() as u32).map(|id| vocab.idf(id)).collect();
        Ok(InvertedIndex::assemble(
            tag,
            doc_ids,
            comment_postings,
            post_postings,
            comment_norms,
            post_norms,
            idf,
        ))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Descending score, ascending pair id on ties.
pub(crate) fn sort_scored(scored: &mut [(u32, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub per_model_k: usize,
    /// Lexical candidates re-scored by the latent model.
    pub latent_pool: usize,
    /// Score every repository pair with the latent model instead.
    pub exhaustive_latent: bool,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            per_model_k: 10,
            latent_pool: 200,
            exhaustive_latent: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pair_id: u32,
    pub source: Source,
    pub stage1_score: f64,
}

/// Per-source candidate lists for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query_id: String,
    pub entries: Vec<Candidate>,
    /// Set when no latent model was available.
    pub latent_missing: bool,
}

impl CandidateSet {
    /// Distinct pair ids in first-proposed order (Q2R, then Q2P, then latent).
    pub fn merged(&self) -> Vec<u32> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|c| seen.insert(c.pair_id))
            .map(|c| c.pair_id)
            .collect()
    }

    pub fn from_source(&self, source: Source) -> impl Iterator<Item = &Candidate> + '_ {
        self.entries.iter().filter(move |c| c.source == source)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Stage I: union of the top `per_model_k` pairs by query–comment cosine,
/// query–post cosine and latent match score.
pub fn stage1_candidates(
    index: &InvertedIndex,
    repo: &Repository,
    vocab: &Vocabulary,
    latent: Option<&LatentModel>,
    query_id: &str,
    q: &ShortText,
    cfg: &Stage1Config,
) -> CandidateSet {
    let qv = tfidf_vector(q, vocab);
    let k = cfg.per_model_k;
    let mut entries = Vec::new();
    let mut push = |list: Vec<(u32, f64)>, source: Source| {
        entries.extend(list.into_iter().map(|(pair_id, score)| Candidate {
            pair_id,
            source,
            stage1_score: score,
        }));
    };
    push(index.retrieve_cosine(&qv, Side::Comment, k), Source::Q2R);
    push(index.retrieve_cosine(&qv, Side::Post, k), Source::Q2P);

    if let Some(model) = latent {
        if !qv.is_empty() && k > 0 {
            let pool: Vec<u32> = if cfg.exhaustive_latent {
                index.doc_ids().to_vec()
            } else {
                let mut ids: Vec<u32> = index
                    .retrieve_cosine(&qv, Side::Comment, cfg.latent_pool)
                    .into_iter()
                    .chain(index.retrieve_cosine(&qv, Side::Post, cfg.latent_pool))
                    .map(|(id, _)| id)
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            };
            let q_unit = qv.normalized();
            let mut scored: Vec<(u32, f64)> = pool
                .into_iter()
                .filter_map(|id| repo.get(id))
                .map(|pair| {
                    let r = latent::match_vector(&pair.comment, vocab);
                    (pair.pair_id, model.score(&q_unit, &r))
                })
                .collect();
            sort_scored(&mut scored);
            scored.truncate(k);
            push(scored, Source::Latent);
        }
    }

    CandidateSet {
        query_id: query_id.to_string(),
        entries,
        latent_missing: latent.is_none(),
    }
}

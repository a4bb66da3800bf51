//! The three-stage responder and model persistence.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, parse_corpus, Repository, ShortText, Vocabulary};
use crate::deepmatch::DeepMatchModel;
use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureSchema, FeatureVector, Matchers, QueryContext};
use crate::index::{stage1_candidates, InvertedIndex, Stage1Config};
use crate::latent::LatentModel;
use crate::math::sha256_hex;
use crate::ranker::{sort_ranking, RankingModel};
use crate::topicword::TopicWordModel;
use crate::translm::{CollectionLm, TransLmConfig, TranslationTable};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const INDEX_FILE: &str = "index.bin";
pub const LATENT_FILE: &str = "latent.bin";
pub const TRANS_FILE: &str = "trans.tsv";
pub const DEEPMATCH_FILE: &str = "deepmatch.bin";
pub const TOPICWORD_FILE: &str = "topicword.txt";
pub const RANKER_FILE: &str = "ranker.txt";
pub const CORPUS_FILE: &str = "corpus.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Everything needed to answer queries.
#[derive(Clone, Debug)]
pub struct ModelParts {
    pub repository: Repository,
    pub vocab: Vocabulary,
    pub index: InvertedIndex,
    pub ranker: RankingModel,
    pub latent: Option<LatentModel>,
    pub translation: Option<(TranslationTable, TransLmConfig)>,
    pub deepmatch: Option<DeepMatchModel>,
    pub topicword: Option<TopicWordModel>,
    pub stage1: Stage1Config,
}

/// Immutable, validated model set.
#[derive(Debug)]
pub struct ModelRegistry {
    parts: ModelParts,
    collection: Option<CollectionLm>,
}

fn mismatch(left: &str, left_tag: &str, right: &str, right_tag: &str) -> Error {
    Error::VersionMismatch {
        left: left.to_string(),
        left_tag: left_tag.to_string(),
        right: right.to_string(),
        right_tag: right_tag.to_string(),
    }
}

impl ModelRegistry {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let tag = parts.vocab.tag().to_string();
        let check = |name: &str, other: &str| {
            if other != tag {
                Err(mismatch(VOCAB_FILE, &tag, name, other))
            } else {
                Ok(())
            }
        };
        check(INDEX_FILE, parts.index.vocab_tag())?;
        if let Some(m) = &parts.latent {
            check(LATENT_FILE, m.vocab_tag())?;
        }
        if let Some((t, cfg)) = &parts.translation {
            check(TRANS_FILE, t.vocab_tag())?;
            cfg.validate()?;
        }
        if let Some(m) = &parts.deepmatch {
            check(DEEPMATCH_FILE, m.vocab_tag())?;
        }
        let collection = parts
            .translation
            .as_ref()
            .map(|_| CollectionLm::from_repository(&parts.repository));
        let reg = ModelRegistry { parts, collection };
        reg.matchers().check(&reg.parts.ranker.schema)?;
        Ok(reg)
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn into_parts(self) -> ModelParts {
        self.parts
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.parts.ranker.schema
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.parts.vocab
    }

    pub fn repository(&self) -> &Repository {
        &self.parts.repository
    }

    pub fn matchers(&self) -> Matchers<'_> {
        Matchers {
            latent: self.parts.latent.as_ref(),
            translation: self
                .parts
                .translation
                .as_ref()
                .zip(self.collection.as_ref())
                .map(|((t, c), l)| (t, c, l)),
            deepmatch: self.parts.deepmatch.as_ref(),
            topicword: self.parts.topicword.as_ref(),
        }
    }

    /// Raw feature values of one (query, pair) under the ranker's schema.
    pub fn features(&self, q: &ShortText, pair_id: u32) -> Result<FeatureVector> {
        let pair = self
            .parts
            .repository
            .get(pair_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown pair {pair_id}")))?;
        let m = self.matchers();
        let ctx = QueryContext::new(q, &self.parts.vocab, &m);
        assemble_features(&ctx, pair, &self.parts.vocab, &m, self.schema())
    }

    /// Final ranking score of one (query, pair).
    pub fn score(&self, q: &ShortText, pair_id: u32) -> Result<f64> {
        crate::ranker::rank_score(&self.parts.ranker, &self.features(q, pair_id)?)
    }

    /// Stage I retrieval, Stage II features and Stage III ranking.
    pub fn respond(&self, q: &ShortText, top_k: usize) -> Result<Response> {
        let p = &self.parts;
        let candidates = stage1_candidates(&p.index, &p.repository, &p.vocab, p.latent.as_ref(), "", q, &p.stage1);
        let ids = candidates.merged();
        if ids.is_empty() {
            return Ok(Response {
                candidates: Vec::new(),
                diagnostic: Some("no candidate shares a word with the query".into()),
            });
        }
        let m = self.matchers();
        let ctx = QueryContext::new(q, &p.vocab, &m);
        let mut scored = Vec::with_capacity(ids.len());
        let mut vectors = BTreeMap::new();
        for id in ids {
            let pair = p.repository.get(id).expect("index and repository agree");
            let fv = assemble_features(&ctx, pair, &p.vocab, &m, self.schema())?;
            scored.push((id, crate::ranker::rank_score(&p.ranker, &fv)?));
            vectors.insert(id, fv);
        }
        sort_ranking(&mut scored);
        scored.truncate(top_k);
        let names = self.schema().names();
        let candidates = scored
            .into_iter()
            .enumerate()
            .map(|(i, (id, score))| {
                let pair = p.repository.get(id).expect("scored pair exists");
                let fv = &vectors[&id];
                let z = p.ranker.standardize(fv).expect("schema checked");
                let features = names
                    .iter()
                    .enumerate()
                    .map(|(j, name)| FeatureValue {
                        name: name.to_string(),
                        raw: fv.values[j],
                        standardized: z[j],
                        weight: p.ranker.weights[j],
                        contribution: z[j] * p.ranker.weights[j],
                    })
                    .collect();
                RankedResponse {
                    rank: i + 1,
                    pair_id: id,
                    response: pair.comment.to_string(),
                    post: pair.post.to_string(),
                    score,
                    features,
                }
            })
            .collect();
        Ok(Response {
            candidates,
            diagnostic: None,
        })
    }

    /// Versions, settings and checksums of the artifacts, as saved.
    pub fn manifest(&self) -> Manifest {
        let files = self
            .artifacts()
            .into_iter()
            .map(|(name, bytes)| ManifestFile {
                name: name.to_string(),
                sha256: sha256_hex(&bytes),
            })
            .collect();
        let p = &self.parts;
        Manifest {
            vocab_tag: p.vocab.tag().to_string(),
            schema: self.schema().names().iter().map(|s| s.to_string()).collect(),
            schema_version: self.schema().version().to_string(),
            translm: p.translation.as_ref().map(|(_, c)| c.clone()),
            stage1: p.stage1.clone(),
            files,
        }
    }

    fn artifacts(&self) -> Vec<(&'static str, Vec<u8>)> {
        let p = &self.parts;
        let mut out = Vec::new();
        let mut put = |name: &'static str, write: &dyn Fn(&mut Vec<u8>) -> Result<()>| {
            let mut buf = Vec::new();
            write(&mut buf).expect("writing to memory cannot fail");
            out.push((name, buf));
        };
        put(VOCAB_FILE, &|b| p.vocab.write_to(b));
        put(CORPUS_FILE, &|b| p.repository.write_to(b));
        put(INDEX_FILE, &|b| p.index.write_to(b));
        put(RANKER_FILE, &|b| p.ranker.write_to(b));
        if let Some(m) = &p.latent {
            put(LATENT_FILE, &|b| m.write_to(b));
        }
        if let Some((t, _)) = &p.translation {
            put(TRANS_FILE, &|b| t.write_to(b));
        }
        if let Some(m) = &p.deepmatch {
            put(DEEPMATCH_FILE, &|b| m.write_to(b));
        }
        if let Some(m) = &p.topicword {
            put(TOPICWORD_FILE, &|b| m.write_to(b));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub name: String,
    pub raw: f64,
    pub standardized: f64,
    pub weight: f64,
    /// `weight · standardized`; contributions sum to the score.
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResponse {
    pub rank: usize,
    pub pair_id: u32,
    pub response: String,
    pub post: String,
    pub score: f64,
    pub features: Vec<FeatureValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub candidates: Vec<RankedResponse>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub vocab_tag: String,
    pub schema_version: String,
    pub schema: Vec<String>,
    pub translm: Option<TransLmConfig>,
    pub stage1: Stage1Config,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    fn render(&self) -> String {
        let mut s = String::from("# stc-models v1\n");
        s += &format!("tag {}\n", self.vocab_tag);
        s += &format!("schema {} {}\n", self.schema_version, self.schema.join(","));
        if let Some(c) = &self.translm {
            s += &format!("translm {:?} {:?} {:?}\n", c.alpha, c.beta, c.gamma);
        }
        s += &format!(
            "stage1 {} {} {}\n",
            self.stage1.per_model_k, self.stage1.latent_pool, self.stage1.exhaustive_latent
        );
        for f in &self.files {
            s += &format!("file {} {}\n", f.name, f.sha256);
        }
        s
    }

    fn parse(text: &str) -> Result<Self> {
        let bad = |d: String| Error::format("manifest", d);
        let mut lines = text.lines();
        if lines.next() != Some("# stc-models v1") {
            return Err(bad("bad header".into()));
        }
        let mut m = Manifest {
            vocab_tag: String::new(),
            schema_version: String::new(),
            schema: Vec::new(),
            translm: None,
            stage1: Stage1Config::default(),
            files: Vec::new(),
        };
        for line in lines {
            let f: Vec<&str> = line.split(' ').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number in `{line}`")));
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad count in `{line}`")));
            match (f[0], f.len()) {
                ("tag", 2) => m.vocab_tag = f[1].to_string(),
                ("schema", 3) => {
                    m.schema_version = f[1].to_string();
                    m.schema = f[2].split(',').map(String::from).collect();
                }
                ("translm", 4) => {
                    m.translm = Some(TransLmConfig {
                        alpha: num(f[1])?,
                        beta: num(f[2])?,
                        gamma: num(f[3])?,
                    })
                }
                ("stage1", 4) => {
                    m.stage1 = Stage1Config {
                        per_model_k: int(f[1])?,
                        latent_pool: int(f[2])?,
                        exhaustive_latent: f[3] == "true",
                    }
                }
                ("file", 3) => m.files.push(ManifestFile {
                    name: f[1].to_string(),
                    sha256: f[2].to_string(),
                }),
                _ => return Err(bad(format!("unexpected line `{line}`"))),
            }
        }
        Ok(m)
    }
}

/// Writes every artifact and a manifest of checksums into `dir`.
pub fn save_models(reg: &ModelRegistry, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in reg.artifacts() {
        fs::write(dir.join(name), bytes)?;
    }
    let manifest = reg.manifest();
    fs::write(dir.join(MANIFEST_FILE), manifest.render())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    Manifest::parse(&fs::read_to_string(path)?)
}

/// Loads and validates a model directory written by [`save_models`].
pub fn load_models(dir: &Path) -> Result<ModelRegistry> {
    let manifest = read_manifest(dir)?;
    let listed: BTreeMap<&str, &str> = manifest
        .files
        .iter()
        .map(|f| (f.name.as_str(), f.sha256.as_str()))
        .collect();
    for required in [VOCAB_FILE, CORPUS_FILE, INDEX_FILE, RANKER_FILE] {
        if !listed.contains_key(required) {
            return Err(Error::MissingFile(dir.join(required)));
        }
    }
    let mut bytes: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for (&name, &sum) in &listed {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let data = fs::read(&path)?;
        if sha256_hex(&data) != sum {
            return Err(Error::Checksum(name.to_string()));
        }
        bytes.insert(name, data);
    }
    let reader = |name: &str| BufReader::new(bytes[name].as_slice());

    let vocab = Vocabulary::read_from(reader(VOCAB_FILE))?;
    if vocab.tag() != manifest.vocab_tag {
        return Err(mismatch(MANIFEST_FILE, &manifest.vocab_tag, VOCAB_FILE, vocab.tag()));
    }
    let repository = parse_corpus(reader(CORPUS_FILE))?.repository;
    let corpus_vocab = build_vocabulary(&repository)?;
    if corpus_vocab.tag() != vocab.tag() {
        return Err(mismatch(VOCAB_FILE, vocab.tag(), CORPUS_FILE, corpus_vocab.tag()));
    }
    let index = InvertedIndex::read_from(reader(INDEX_FILE), &vocab)?;
    let ranker = RankingModel::read_from(reader(RANKER_FILE))?;
    let latent = match listed.contains_key(LATENT_FILE) {
        true => Some(LatentModel::read_from(reader(LATENT_FILE))?),
        false => None,
    };
    let translation = match listed.contains_key(TRANS_FILE) {
        true => {
            let cfg = manifest
                .translm
                .clone()
                .ok_or_else(|| Error::format("manifest", "translation table without translm settings"))?;
            Some((TranslationTable::read_from(reader(TRANS_FILE))?, cfg))
        }
        false => None,
    };
    let deepmatch = match listed.contains_key(DEEPMATCH_FILE) {
        true => Some(DeepMatchModel::read_from(reader(DEEPMATCH_FILE))?),
        false => None,
    };
    let topicword = match listed.contains_key(TOPICWORD_FILE) {
        true => Some(TopicWordModel::read_from(reader(TOPICWORD_FILE))?),
        false => None,
    };
    ModelRegistry::new(ModelParts {
        repository,
        vocab,
        index,
        ranker,
        latent,
        translation,
        deepmatch,
        topicword,
        stage1: manifest.stage1,
    })
}

//! A model directory being filled one training command at a time.
//!
//! Each command reads what earlier commands wrote and adds its own
//! artifact. `train-ranker` finishes the directory with a manifest, after
//! which it loads as a complete engine.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stc::corpus::{build_vocabulary, parse_corpus, Repository, Vocabulary};
use stc::deepmatch::DeepMatchModel;
use stc::engine::{CORPUS_FILE, DEEPMATCH_FILE, INDEX_FILE, LATENT_FILE, TOPICWORD_FILE, TRANS_FILE, VOCAB_FILE};
use stc::features::{Feature, FeatureSchema, Matchers};
use stc::index::InvertedIndex;
use stc::latent::LatentModel;
use stc::topicword::TopicWordModel;
use stc::translm::{CollectionLm, TransLmConfig, TranslationTable};

pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Workspace { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    fn open(&self, name: &str) -> Result<BufReader<File>> {
        let path = self.path(name);
        let f = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
        Ok(BufReader::new(f))
    }

    /// Writes an artifact through `f`, creating the directory if needed.
    pub fn write(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> stc::Result<()>) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path(name);
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        f(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn repository(&self) -> Result<Repository> {
        let parsed = parse_corpus(self.open(CORPUS_FILE)?)?;
        if !parsed.rejections.is_empty() {
            bail!("{} has {} malformed lines", CORPUS_FILE, parsed.rejections.len());
        }
        Ok(parsed.repository)
    }

    /// The stored vocabulary, checked against the stored corpus.
    pub fn vocab(&self, repo: &Repository) -> Result<Vocabulary> {
        let vocab = Vocabulary::read_from(self.open(VOCAB_FILE)?)?;
        let rebuilt = build_vocabulary(repo)?;
        if rebuilt.tag() != vocab.tag() {
            bail!(
                "{} has tag {} but the corpus gives {}; re-run `index`",
                VOCAB_FILE,
                vocab.tag(),
                rebuilt.tag()
            );
        }
        Ok(vocab)
    }

    pub fn index(&self, vocab: &Vocabulary) -> Result<InvertedIndex> {
        Ok(InvertedIndex::read_from(self.open(INDEX_FILE)?, vocab)?)
    }

    pub fn latent(&self) -> Result<Option<LatentModel>> {
        self.optional(LATENT_FILE, |r| LatentModel::read_from(r))
    }

    pub fn translation(&self) -> Result<Option<TranslationTable>> {
        self.optional(TRANS_FILE, |r| TranslationTable::read_from(r))
    }

    pub fn deepmatch(&self) -> Result<Option<DeepMatchModel>> {
        self.optional(DEEPMATCH_FILE, |r| DeepMatchModel::read_from(r))
    }

    pub fn topicword(&self) -> Result<Option<TopicWordModel>> {
        self.optional(TOPICWORD_FILE, |r| TopicWordModel::read_from(r))
    }

    fn optional<T>(&self, name: &str, read: impl FnOnce(BufReader<File>) -> stc::Result<T>) -> Result<Option<T>> {
        if !self.has(name) {
            return Ok(None);
        }
        let v = read(self.open(name)?).with_context(|| format!("cannot read {name}"))?;
        Ok(Some(v))
    }

    /// Everything the directory holds so far.
    pub fn load(&self, translm: TransLmConfig) -> Result<Loaded> {
        let repository = self.repository()?;
        let vocab = self.vocab(&repository)?;
        let index = self.index(&vocab)?;
        let translation = self.translation()?;
        let collection = translation.as_ref().map(|_| CollectionLm::from_repository(&repository));
        Ok(Loaded {
            latent: self.latent()?,
            translation,
            translm,
            collection,
            deepmatch: self.deepmatch()?,
            topicword: self.topicword()?,
            repository,
            vocab,
            index,
        })
    }
}

pub struct Loaded {
    pub repository: Repository,
    pub vocab: Vocabulary,
    pub index: InvertedIndex,
    pub latent: Option<LatentModel>,
    pub translation: Option<TranslationTable>,
    pub translm: TransLmConfig,
    collection: Option<CollectionLm>,
    pub deepmatch: Option<DeepMatchModel>,
    pub topicword: Option<TopicWordModel>,
}

impl Loaded {
    pub fn matchers(&self) -> Matchers<'_> {
        Matchers {
            latent: self.latent.as_ref(),
            translation: self
                .translation
                .as_ref()
                .zip(self.collection.as_ref())
                .map(|(t, c)| (t, &self.translm, c)),
            deepmatch: self.deepmatch.as_ref(),
            topicword: self.topicword.as_ref(),
        }
    }

    /// The full schema minus features whose model has not been trained.
    pub fn available_schema(&self) -> FeatureSchema {
        let m = self.matchers();
        let features: Vec<Feature> = FeatureSchema::full()
            .features()
            .iter()
            .copied()
            .filter(|f| m.check(&FeatureSchema::new(vec![*f]).expect("single feature")).is_ok())
            .collect();
        FeatureSchema::new(features).expect("subset of a valid schema")
    }
}

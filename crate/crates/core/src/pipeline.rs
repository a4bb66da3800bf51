//! End-to-end training and evaluation: clean, index, train every matcher,
//! pool and judge candidates, cross-validate feature sets and fit the
//! final ranker.

use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, clean_pairs, CleaningConfig, CleaningReport, Repository, ShortText, Vocabulary};
use crate::deepmatch::{
    learn_topics, repository_triples, train_deepmatch, DeepMatchConfig, DeepMatchModel, DeepMatchTrainConfig,
    GibbsConfig,
};
use crate::engine::{ModelParts, ModelRegistry};
use crate::error::{Error, Result};
use crate::eval::{compare_feature_sets, pool_candidates, ComparisonGrid, CvConfig, QueryCandidates, QueryJudgments};
use crate::features::{assemble_features, FeatureSchema, Matchers, QueryContext};
use crate::index::{build_index, Stage1Config};
use crate::latent::{match_vector, train_latent, LatentModel, LatentTrainConfig};
use crate::ranker::{build_preference_pairs, train_ranksvm, Label, LabeledCandidate, RankSvmConfig};
use crate::synthetic::SyntheticCorpus;
use crate::topicword::{train_topicword, training_examples, LabeledWord, TopicWordConfig, TopicWordModel};
use crate::translm::{train_ibm1, CollectionLm, Ibm1Config, TransLmConfig, TranslationTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cleaning: CleaningConfig,
    pub latent: LatentTrainConfig,
    pub ibm1: Ibm1Config,
    pub translm: TransLmConfig,
    pub gibbs: GibbsConfig,
    pub deepmatch: DeepMatchConfig,
    pub deepmatch_train: DeepMatchTrainConfig,
    /// Sampled negatives per repository pair for deep match training.
    pub triples_per_pair: usize,
    pub topicword: TopicWordConfig,
    pub stage1: Stage1Config,
    /// Per-retriever depth of the judged pool.
    pub pool_k: usize,
    pub cv: CvConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cleaning: CleaningConfig::default(),
            latent: LatentTrainConfig::default(),
            ibm1: Ibm1Config::default(),
            translm: TransLmConfig::default(),
            gibbs: GibbsConfig::default(),
            deepmatch: DeepMatchConfig::default(),
            deepmatch_train: DeepMatchTrainConfig::default(),
            triples_per_pair: 1,
            topicword: TopicWordConfig::default(),
            stage1: Stage1Config::default(),
            pool_k: 10,
            cv: CvConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Settings sized for the bundled synthetic benchmark; the model
    /// constants (α, β, γ, m, C, c) keep their defaults.
    pub fn synthetic(seed: u64) -> Self {
        PipelineConfig {
            latent: LatentTrainConfig {
                dim: 20,
                epochs: 10,
                negative_sampling: true,
                seed,
                ..Default::default()
            },
            ibm1: Ibm1Config {
                min_freq: 5,
                ..Default::default()
            },
            gibbs: GibbsConfig {
                topics: 10,
                words_per_side: 30,
                iterations: 60,
                max_df_ratio: 0.03,
                seed,
                ..Default::default()
            },
            deepmatch: DeepMatchConfig {
                seed,
                ..Default::default()
            },
            deepmatch_train: DeepMatchTrainConfig {
                seed,
                ..Default::default()
            },
            topicword: TopicWordConfig {
                seed,
                ..Default::default()
            },
            cv: CvConfig {
                seed,
                svm: RankSvmConfig {
                    seed,
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

/// Matchers trained on a cleaned repository.
#[derive(Clone, Debug)]
pub struct TrainedMatchers {
    pub repository: Repository,
    pub cleaning: CleaningReport,
    pub vocab: crate::corpus::Vocabulary,
    pub index: crate::index::InvertedIndex,
    pub latent: LatentModel,
    pub translation: TranslationTable,
    pub ibm1_log_likelihood: Vec<f64>,
    pub deepmatch: DeepMatchModel,
    pub topic_warnings: Vec<String>,
    pub topicword: TopicWordModel,
}

impl TrainedMatchers {
    pub fn matchers<'a>(&'a self, cfg: &'a TransLmConfig, collection: &'a CollectionLm) -> Matchers<'a> {
        Matchers {
            latent: Some(&self.latent),
            translation: Some((&self.translation, cfg, collection)),
            deepmatch: Some(&self.deepmatch),
            topicword: Some(&self.topicword),
        }
    }
}

pub fn train_matchers(raw: &Repository, labeled: &[LabeledWord], cfg: &PipelineConfig) -> Result<TrainedMatchers> {
    let (repository, cleaning) = clean_pairs(raw, &cfg.cleaning);
    let vocab = build_vocabulary(&repository)?;
    let index = build_index(&repository, &vocab);

    let latent_pairs: Vec<_> = repository
        .iter()
        .map(|p| (match_vector(&p.post, &vocab), match_vector(&p.comment, &vocab)))
        .collect();
    let latent = train_latent(&latent_pairs, vocab.len(), vocab.tag(), &cfg.latent)?;

    let ibm1 = train_ibm1(&repository, &cfg.ibm1, vocab.tag())?;

    let topics = learn_topics(&repository, &vocab, &cfg.gibbs)?;
    let model = DeepMatchModel::new(topics.patches, &cfg.deepmatch, vocab.tag())?;
    let triples = repository_triples(&repository, &vocab, cfg.triples_per_pair, cfg.deepmatch_train.seed);
    let deepmatch = train_deepmatch(model, &triples, &cfg.deepmatch_train)?;

    // Labels may point at pairs that cleaning removed.
    let usable: Vec<LabeledWord> = labeled
        .iter()
        .filter(|l| repository.get(l.text_id.pair_id).is_some())
        .cloned()
        .collect();
    let examples = training_examples(&usable, &repository, &vocab)?;
    let topicword = train_topicword(&examples, &cfg.topicword)?;

    Ok(TrainedMatchers {
        repository,
        cleaning,
        vocab,
        index,
        latent,
        translation: ibm1.table,
        ibm1_log_likelihood: ibm1.log_likelihood,
        deepmatch,
        topic_warnings: topics.warnings,
        topicword,
    })
}

/// Pools candidates for every query and labels them with `judge`; feature
/// vectors follow the full schema.
pub fn build_benchmark(
    trained: &TrainedMatchers,
    queries: &[(String, ShortText)],
    judge: impl Fn(usize, u32) -> Label,
    cfg: &PipelineConfig,
) -> Result<Vec<QueryCandidates>> {
    let collection = CollectionLm::from_repository(&trained.repository);
    let m = trained.matchers(&cfg.translm, &collection);
    let schema = FeatureSchema::full();
    let mut out = Vec::with_capacity(queries.len());
    for (qi, (qid, q)) in queries.iter().enumerate() {
        let pool = pool_candidates(
            &trained.index,
            &trained.repository,
            &trained.vocab,
            Some(&trained.latent),
            qid,
            q,
            cfg.pool_k,
        )?;
        let ctx = QueryContext::new(q, &trained.vocab, &m);
        let candidates = pool
            .merged()
            .into_iter()
            .map(|id| {
                let pair = trained.repository.get(id).expect("pooled pair exists");
                Ok(LabeledCandidate {
                    query_id: qid.clone(),
                    pair_id: id,
                    label: judge(qi, id),
                    features: assemble_features(&ctx, pair, &trained.vocab, &m, &schema)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(QueryCandidates {
            query_id: qid.clone(),
            candidates,
        });
    }
    Ok(out)
}

/// Feature vectors for every judged (query, pair) under `schema`. Queries
/// without judgments are left out; judgments naming an unknown query or
/// pair are errors.
pub fn judged_candidates(
    repo: &Repository,
    vocab: &Vocabulary,
    matchers: &Matchers<'_>,
    queries: &[(String, ShortText)],
    judgments: &[QueryJudgments],
    schema: &FeatureSchema,
) -> Result<Vec<QueryCandidates>> {
    matchers.check(schema)?;
    let mut out = Vec::with_capacity(judgments.len());
    for j in judgments {
        let (_, q) = queries
            .iter()
            .find(|(id, _)| *id == j.query_id)
            .ok_or_else(|| Error::InvalidInput(format!("judged query `{}` has no text", j.query_id)))?;
        let ctx = QueryContext::new(q, vocab, matchers);
        let candidates = j
            .labels
            .iter()
            .map(|(&id, &label)| {
                let pair = repo
                    .get(id)
                    .ok_or_else(|| Error::InvalidInput(format!("judged pair {id} is not in the repository")))?;
                Ok(LabeledCandidate {
                    query_id: j.query_id.clone(),
                    pair_id: id,
                    label,
                    features: assemble_features(&ctx, pair, vocab, matchers, schema)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(QueryCandidates {
            query_id: j.query_id.clone(),
            candidates,
        });
    }
    Ok(out)
}

/// Baseline first, then the grid rows, then the full model.
pub fn feature_sets() -> Vec<(String, FeatureSchema)> {
    use crate::features::Feature;
    let base = FeatureSchema::baseline();
    let with = |extra: &[Feature]| {
        let mut f = base.features().to_vec();
        f.extend_from_slice(extra);
        FeatureSchema::new(f).expect("distinct features")
    };
    vec![
        ("Baseline".into(), base.clone()),
        ("Baseline+TransLM".into(), with(&[Feature::TransLm])),
        ("Baseline+DeepMatch".into(), with(&[Feature::DeepMatch])),
        (
            "Baseline+TopicWord".into(),
            with(&[Feature::TopicWordQ2R, Feature::TopicWordQ2P]),
        ),
        ("Baseline+TransLM+DeepMatch+TopicWord".into(), FeatureSchema::full()),
    ]
}

pub struct PipelineOutput {
    pub trained: TrainedMatchers,
    pub benchmark: Vec<QueryCandidates>,
    pub grid: ComparisonGrid,
    pub registry: ModelRegistry,
}

/// Runs everything on a synthetic corpus and fits the final full-schema
/// ranker on all judged queries.
pub fn run_synthetic(corpus: &SyntheticCorpus, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let trained = train_matchers(&corpus.repository, &corpus.labeled_words, cfg)?;
    let benchmark = build_benchmark(&trained, &corpus.queries, |q, id| corpus.judge(q, id), cfg)?;
    let grid = compare_feature_sets(&benchmark, &FeatureSchema::full(), &feature_sets(), &cfg.cv)?;
    let all: Vec<LabeledCandidate> = benchmark.iter().flat_map(|q| q.candidates.iter().cloned()).collect();
    let ranker = train_ranksvm(&build_preference_pairs(&all), &FeatureSchema::full(), &cfg.cv.svm)?;
    let registry = ModelRegistry::new(ModelParts {
        repository: trained.repository.clone(),
        vocab: trained.vocab.clone(),
        index: trained.index.clone(),
        ranker,
        latent: Some(trained.latent.clone()),
        translation: Some((trained.translation.clone(), cfg.translm.clone())),
        deepmatch: Some(trained.deepmatch.clone()),
        topicword: Some(trained.topicword.clone()),
        stage1: cfg.stage1.clone(),
    })?;
    Ok(PipelineOutput {
        trained,
        benchmark,
        grid,
        registry,
    })
}

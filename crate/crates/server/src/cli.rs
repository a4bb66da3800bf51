//! The `stc` command line: corpus preparation, staged training,
//! evaluation, serving and a terminal chat.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stc::corpus::{build_vocabulary, clean_pairs, parse_corpus, CleaningConfig, Repository, ShortText};
use stc::deepmatch::{
    learn_topics, repository_triples, train_deepmatch, DeepMatchConfig, DeepMatchModel, DeepMatchTrainConfig,
    GibbsConfig,
};
use stc::engine::{
    load_models, save_models, ModelParts, ModelRegistry, CORPUS_FILE, DEEPMATCH_FILE, INDEX_FILE, LATENT_FILE,
    TOPICWORD_FILE, TRANS_FILE, VOCAB_FILE,
};
use stc::eval::{
    compare_feature_sets, parse_judgments, parse_queries, pool_candidates, write_judgments, write_queries, CvConfig,
    QueryJudgments,
};
use stc::features::{Feature, FeatureSchema};
use stc::index::{build_index, Stage1Config};
use stc::latent::{match_vector, train_latent, LatentTrainConfig};
use stc::pipeline::{feature_sets, judged_candidates};
use stc::ranker::{build_preference_pairs, train_ranksvm, RankSvmConfig};
use stc::synthetic::{generate, SyntheticConfig};
use stc::topicword::{parse_labeled_words, train_topicword, training_examples, write_labeled_words, TopicWordConfig};
use stc::translm::{train_ibm1, Ibm1Config, TransLmConfig};

use crate::api::{self, AppState};
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
#[command(name = "stc", version, about = "Retrieval-based short-text conversation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw corpus file and write the well-formed pairs.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the length, rank and advertisement filters.
    Clean {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_post_chars: usize,
        #[arg(long, default_value_t = 5)]
        min_comment_chars: usize,
        #[arg(long, default_value_t = 100)]
        max_comments: u32,
    },
    /// Build the vocabulary and inverted index into a model directory.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        models: ModelsArg,
    },
    TrainLatent {
        #[command(flatten)]
        models: ModelsArg,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long)]
        negative_sampling: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learn word translation probabilities with IBM Model 1.
    TrainTranslm {
        #[command(flatten)]
        models: ModelsArg,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        em_iters: u64,
        #[arg(long, default_value_t = 10)]
        min_freq: u32,
    },
    TrainDeepmatch {
        #[command(flatten)]
        models: ModelsArg,
        #[arg(long, default_value_t = 50)]
        topics: usize,
        #[arg(long, default_value_t = 50)]
        words_per_side: usize,
        #[arg(long, default_value_t = 100)]
        gibbs_iters: usize,
        /// Leave words in more than this fraction of texts out of the topics.
        #[arg(long, default_value_t = 1.0)]
        max_df_ratio: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 1)]
        triples_per_pair: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the topic-word classifier on labeled words.
    TrainTopicword {
        #[command(flatten)]
        models: ModelsArg,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the ranker on judged candidates and write the manifest.
    TrainRanker {
        #[command(flatten)]
        models: ModelsArg,
        #[command(flatten)]
        judged: JudgedArgs,
        /// Comma-separated feature names; all trained features by default.
        #[arg(long)]
        features: Option<String>,
        #[arg(long, default_value_t = 50.0)]
        c: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the judging pool: the union of each retriever's top k.
    Pool {
        #[command(flatten)]
        models: ModelsArg,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate feature sets and print the comparison grid.
    Eval {
        #[command(flatten)]
        models: ModelsArg,
        #[command(flatten)]
        judged: JudgedArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `name=feat,feat,...`; repeat for more rows. The first row is the
        /// reference. Defaults to the standard rows.
        #[arg(long = "set")]
        sets: Vec<String>,
        /// Also write the grid as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Model directory; falls back to STC_MODEL_DIR.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Talk to the engine in the terminal.
    Chat {
        #[command(flatten)]
        models: ModelsArg,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        /// Input lines use the corpus token syntax.
        #[arg(long)]
        pretokenized: bool,
    },
    /// Write a planted-topic corpus, queries and topic-word labels; with
    /// `--pool`, also judge that pool.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pool: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ModelsArg {
    /// Model directory.
    #[arg(long)]
    pub models: PathBuf,
}

#[derive(Debug, Args)]
pub struct JudgedArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
}

impl JudgedArgs {
    fn translm(&self) -> TransLmConfig {
        TransLmConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }
}

fn reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn read_repository(path: &Path) -> Result<Repository> {
    let parsed = parse_corpus(reader(path)?)?;
    if !parsed.rejections.is_empty() {
        bail!(
            "{} has {} malformed lines (first: line {}: {}); run `ingest` first",
            path.display(),
            parsed.rejections.len(),
            parsed.rejections[0].line,
            parsed.rejections[0].reason
        );
    }
    Ok(parsed.repository)
}

fn read_judged(args: &JudgedArgs) -> Result<(Vec<(String, ShortText)>, Vec<QueryJudgments>)> {
    Ok((
        parse_queries(reader(&args.queries)?)?,
        parse_judgments(reader(&args.judgments)?)?,
    ))
}

fn parse_features(list: &str) -> Result<FeatureSchema> {
    let features = list
        .split(',')
        .map(|s| s.trim().parse::<Feature>().map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureSchema::new(features)?)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out: dest } => {
            let parsed = parse_corpus(reader(&input)?)?;
            for r in &parsed.rejections {
                writeln!(out, "rejected line {}: {}", r.line, r.reason)?;
            }
            let mut w = writer(&dest)?;
            parsed.repository.write_to(&mut w)?;
            w.flush()?;
            writeln!(
                out,
                "{} pairs written, {} lines rejected",
                parsed.repository.len(),
                parsed.rejections.len()
            )?;
        }
        Command::Clean {
            input,
            out: dest,
            min_post_chars,
            min_comment_chars,
            max_comments,
        } => {
            let repo = read_repository(&input)?;
            let rules = CleaningConfig {
                min_post_chars,
                min_comment_chars,
                max_comments_per_post: max_comments,
                ..Default::default()
            };
            let (clean, report) = clean_pairs(&repo, &rules);
            let mut w = writer(&dest)?;
            clean.write_to(&mut w)?;
            w.flush()?;
            writeln!(
                out,
                "{} in, {} kept; removed {} short posts, {} short comments, {} beyond rank, {} advertisements",
                report.input,
                report.kept,
                report.short_post,
                report.short_comment,
                report.beyond_rank,
                report.advertisement
            )?;
        }
        Command::Index { corpus, models } => {
            let ws = Workspace::new(models.models);
            let repo = read_repository(&corpus)?;
            let vocab = build_vocabulary(&repo)?;
            let index = build_index(&repo, &vocab);
            ws.write(CORPUS_FILE, |w| repo.write_to(w))?;
            ws.write(VOCAB_FILE, |w| vocab.write_to(w))?;
            ws.write(INDEX_FILE, |w| index.write_to(w))?;
            writeln!(
                out,
                "{} pairs, {} words, vocabulary {}",
                repo.len(),
                vocab.len(),
                vocab.tag()
            )?;
        }
        Command::TrainLatent {
            models,
            dim,
            epochs,
            lr,
            negative_sampling,
            seed,
        } => {
            let ws = Workspace::new(models.models);
            let repo = ws.repository()?;
            let vocab = ws.vocab(&repo)?;
            let pairs: Vec<_> = repo
                .iter()
                .map(|p| (match_vector(&p.post, &vocab), match_vector(&p.comment, &vocab)))
                .collect();
            let cfg = LatentTrainConfig {
                dim,
                epochs,
                learning_rate: lr,
                negative_sampling,
                seed,
                ..Default::default()
            };
            let model = train_latent(&pairs, vocab.len(), vocab.tag(), &cfg)?;
            writeln!(out, "objective {:.6}", model.objective(&pairs))?;
            ws.write(LATENT_FILE, |w| model.write_to(w))?;
        }
        Command::TrainTranslm {
            models,
            em_iters,
            min_freq,
        } => {
            let ws = Workspace::new(models.models);
            let repo = ws.repository()?;
            let vocab = ws.vocab(&repo)?;
            let cfg = Ibm1Config {
                em_iters: em_iters as usize,
                min_freq,
                ..Default::default()
            };
            let trained = train_ibm1(&repo, &cfg, vocab.tag())?;
            for (i, ll) in trained.log_likelihood.iter().enumerate() {
                match i {
                    0 => writeln!(out, "initial log-likelihood {ll:.4}")?,
                    _ => writeln!(out, "EM iteration {i}: log-likelihood {ll:.4}")?,
                }
            }
            ws.write(TRANS_FILE, |w| trained.table.write_to(w))?;
        }
        Command::TrainDeepmatch {
            models,
            topics,
            words_per_side,
            gibbs_iters,
            max_df_ratio,
            epochs,
            lr,
            triples_per_pair,
            seed,
        } => {
            let ws = Workspace::new(models.models);
            let repo = ws.repository()?;
            let vocab = ws.vocab(&repo)?;
            let gibbs = GibbsConfig {
                topics,
                words_per_side,
                iterations: gibbs_iters,
                max_df_ratio,
                seed,
                ..Default::default()
            };
            let learned = learn_topics(&repo, &vocab, &gibbs)?;
            for w in &learned.warnings {
                writeln!(out, "warning: {w}")?;
            }
            let model = DeepMatchModel::new(
                learned.patches,
                &DeepMatchConfig {
                    seed,
                    ..Default::default()
                },
                vocab.tag(),
            )?;
            let triples = repository_triples(&repo, &vocab, triples_per_pair, seed);
            let cfg = DeepMatchTrainConfig {
                epochs,
                learning_rate: lr,
                seed,
                ..Default::default()
            };
            let before = model.objective(&triples, &cfg);
            let model = train_deepmatch(model, &triples, &cfg)?;
            writeln!(
                out,
                "{} triples, objective {:.4} -> {:.4}",
                triples.len(),
                before,
                model.objective(&triples, &cfg)
            )?;
            ws.write(DEEPMATCH_FILE, |w| model.write_to(w))?;
        }
        Command::TrainTopicword { models, labels, seed } => {
            let ws = Workspace::new(models.models);
            let repo = ws.repository()?;
            let vocab = ws.vocab(&repo)?;
            let labeled = parse_labeled_words(reader(&labels)?)?;
            let usable: Vec<_> = labeled
                .into_iter()
                .filter(|l| repo.get(l.text_id.pair_id).is_some())
                .collect();
            let examples = training_examples(&usable, &repo, &vocab)?;
            let model = train_topicword(
                &examples,
                &TopicWordConfig {
                    seed,
                    ..Default::default()
                },
            )?;
            let acc = stc::topicword::accuracy(&model, &examples);
            writeln!(out, "{} labeled words, training accuracy {:.4}", examples.len(), acc)?;
            ws.write(TOPICWORD_FILE, |w| model.write_to(w))?;
        }
        Command::TrainRanker {
            models,
            judged,
            features,
            c,
            seed,
        } => {
            let ws = Workspace::new(&models.models);
            let loaded = ws.load(judged.translm())?;
            let schema = match features {
                Some(list) => parse_features(&list)?,
                None => loaded.available_schema(),
            };
            let (queries, judgments) = read_judged(&judged)?;
            let data = judged_candidates(
                &loaded.repository,
                &loaded.vocab,
                &loaded.matchers(),
                &queries,
                &judgments,
                &schema,
            )?;
            let all: Vec<_> = data.iter().flat_map(|q| q.candidates.iter().cloned()).collect();
            let pairs = build_preference_pairs(&all);
            let ranker = train_ranksvm(
                &pairs,
                &schema,
                &RankSvmConfig {
                    c,
                    seed,
                    ..Default::default()
                },
            )?;
            writeln!(out, "{} preference pairs over {} features", pairs.len(), schema.len())?;
            for (name, w) in schema.names().iter().zip(&ranker.weights) {
                writeln!(out, "  {name:<16} {w:+.6}")?;
            }
            // Every trained model is kept; the latent one also feeds retrieval.
            let reg = ModelRegistry::new(ModelParts {
                latent: loaded.latent.clone(),
                translation: loaded.translation.clone().map(|t| (t, judged.translm())),
                deepmatch: loaded.deepmatch.clone(),
                topicword: loaded.topicword.clone(),
                repository: loaded.repository,
                vocab: loaded.vocab,
                index: loaded.index,
                ranker,
                stage1: Stage1Config::default(),
            })?;
            let manifest = save_models(&reg, &models.models)?;
            writeln!(out, "wrote {} files and the manifest", manifest.files.len())?;
        }
        Command::Pool {
            models,
            queries,
            k,
            out: dest,
        } => {
            let ws = Workspace::new(models.models);
            let repo = ws.repository()?;
            let vocab = ws.vocab(&repo)?;
            let index = ws.index(&vocab)?;
            let latent = ws.latent()?;
            if latent.is_none() {
                writeln!(out, "warning: no latent model, pooling the lexical retrievers only")?;
            }
            let queries = parse_queries(reader(&queries)?)?;
            let mut w = writer(&dest)?;
            let mut largest = 0;
            for (qid, q) in &queries {
                let pool = pool_candidates(&index, &repo, &vocab, latent.as_ref(), qid, q, k)?;
                let ids = pool.merged();
                largest = largest.max(ids.len());
                for id in ids {
                    writeln!(w, "{qid}\t{id}")?;
                }
            }
            w.flush()?;
            writeln!(
                out,
                "{} queries pooled, at most {} candidates each",
                queries.len(),
                largest
            )?;
        }
        Command::Eval {
            models,
            judged,
            folds,
            seed,
            sets,
            json,
        } => {
            let ws = Workspace::new(models.models);
            let loaded = ws.load(judged.translm())?;
            let source = loaded.available_schema();
            let sets: Vec<(String, FeatureSchema)> = if sets.is_empty() {
                feature_sets()
                    .into_iter()
                    .filter(|(_, s)| source.projection(s).is_ok())
                    .collect()
            } else {
                sets.iter()
                    .map(|s| {
                        let (name, list) = s.split_once('=').context("--set takes name=feat,feat,...")?;
                        Ok((name.to_string(), parse_features(list)?))
                    })
                    .collect::<Result<_>>()?
            };
            if sets.is_empty() {
                bail!("no feature set can be evaluated with the trained models");
            }
            let (queries, judgments) = read_judged(&judged)?;
            let data = judged_candidates(
                &loaded.repository,
                &loaded.vocab,
                &loaded.matchers(),
                &queries,
                &judgments,
                &source,
            )?;
            let cfg = CvConfig {
                folds,
                seed,
                svm: RankSvmConfig {
                    seed,
                    ..Default::default()
                },
            };
            let grid = compare_feature_sets(&data, &source, &sets, &cfg)?;
            write!(out, "{}", grid.render())?;
            if let Some(path) = json {
                let mut w = writer(&path)?;
                serde_json::to_writer_pretty(&mut w, &grid)?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        Command::Serve { models, port } => {
            let dir = models
                .or_else(|| std::env::var_os("STC_MODEL_DIR").map(PathBuf::from))
                .context("give --models or set STC_MODEL_DIR")?;
            let reg = load_models(&dir).with_context(|| format!("cannot load models from {}", dir.display()))?;
            writeln!(out, "serving {} on port {port}", api::engine_version(&reg))?;
            out.flush()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(api::serve(AppState::new(Some(reg)), port))?;
        }
        Command::Chat {
            models,
            top_k,
            pretokenized,
        } => {
            let reg = load_models(&models.models)?;
            let stdin = io::stdin();
            chat(&reg, stdin.lock(), out, top_k, pretokenized)?;
        }
        Command::Synth { seed, out: dir, pool } => {
            let corpus = generate(&SyntheticConfig {
                seed,
                ..Default::default()
            });
            fs::create_dir_all(&dir)?;
            match pool {
                None => {
                    let mut w = writer(&dir.join("corpus.tsv"))?;
                    corpus.repository.write_to(&mut w)?;
                    w.flush()?;
                    let mut w = writer(&dir.join("queries.tsv"))?;
                    write_queries(&corpus.queries, &mut w)?;
                    w.flush()?;
                    let mut w = writer(&dir.join("topic_words.tsv"))?;
                    write_labeled_words(&corpus.labeled_words, &mut w)?;
                    w.flush()?;
                    writeln!(
                        out,
                        "{} pairs, {} queries, {} labeled words in {}",
                        corpus.repository.len(),
                        corpus.queries.len(),
                        corpus.labeled_words.len(),
                        dir.display()
                    )?;
                }
                Some(pool) => {
                    let judgments = judge_pool(&corpus, &pool)?;
                    let mut w = writer(&dir.join("judgments.tsv"))?;
                    write_judgments(&judgments, &mut w)?;
                    w.flush()?;
                    let n: usize = judgments.iter().map(|j| j.labels.len()).sum();
                    writeln!(out, "{n} judgments in {}", dir.join("judgments.tsv").display())?;
                }
            }
        }
    }
    Ok(())
}

fn judge_pool(corpus: &stc::synthetic::SyntheticCorpus, pool: &Path) -> Result<Vec<QueryJudgments>> {
    let mut out: Vec<QueryJudgments> = Vec::new();
    for (n, line) in reader(pool)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, id) = line
            .split_once('\t')
            .with_context(|| format!("pool line {}: expected query_id<TAB>pair_id", n + 1))?;
        let id: u32 = id
            .trim()
            .parse()
            .with_context(|| format!("pool line {}: bad pair id", n + 1))?;
        let qi = corpus
            .queries
            .iter()
            .position(|(q, _)| q == qid)
            .with_context(|| format!("pool line {}: unknown query `{qid}`", n + 1))?;
        if out.last().map(|j| j.query_id.as_str()) != Some(qid) {
            out.push(QueryJudgments {
                query_id: qid.to_string(),
                labels: Default::default(),
            });
        }
        out.last_mut().unwrap().labels.insert(id, corpus.judge(qi, id));
    }
    Ok(out)
}

/// Reads messages line by line and prints the top responses to each.
pub fn chat(
    reg: &ModelRegistry,
    input: impl BufRead,
    out: &mut dyn Write,
    top_k: usize,
    pretokenized: bool,
) -> Result<()> {
    writeln!(out, "type a message, or an empty line to quit")?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            break;
        }
        let text = if pretokenized {
            match ShortText::parse(&line) {
                Ok(t) => t,
                Err(e) => {
                    writeln!(out, "! {e}")?;
                    continue;
                }
            }
        } else {
            ShortText::from_raw(&line)
        };
        let r = reg.respond(&text, top_k)?;
        if let Some(d) = &r.diagnostic {
            writeln!(out, "! {d}")?;
        }
        for c in &r.candidates {
            writeln!(out, "{}. {}  [{:.3}]", c.rank, c.response, c.score)?;
        }
    }
    Ok(())
}

pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

//! Pooling, MAP and P@1, k-fold cross-validation and the paired t-test.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Repository, ShortText, Vocabulary};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::index::{stage1_candidates, CandidateSet, InvertedIndex, Stage1Config};
use crate::latent::LatentModel;
use crate::ranker::{
    build_preference_pairs, rank_score, sort_ranking, train_ranksvm, Label, LabeledCandidate, RankSvmConfig,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryJudgments {
    pub query_id: String,
    pub labels: BTreeMap<u32, Label>,
}

impl QueryJudgments {
    pub fn is_suitable(&self, pair_id: u32) -> bool {
        self.labels.get(&pair_id).is_some_and(|l| l.is_suitable())
    }

    pub fn suitable_count(&self) -> usize {
        self.labels.values().filter(|l| l.is_suitable()).count()
    }
}

/// Reads `query_id<TAB>pair_id<TAB>label` lines, grouped by query in
/// order of first appearance.
pub fn parse_judgments<R: BufRead>(input: R) -> Result<Vec<QueryJudgments>> {
    let mut out: Vec<QueryJudgments> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |d: String| Error::format("judgments", format!("line {}: {d}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected 3 fields".into()));
        }
        let pair_id: u32 = f[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad pair id `{}`", f[1])))?;
        let label: Label = f[2].parse()?;
        let slot = *pos.entry(f[0].to_string()).or_insert_with(|| {
            out.push(QueryJudgments {
                query_id: f[0].to_string(),
                labels: BTreeMap::new(),
            });
            out.len() - 1
        });
        out[slot].labels.insert(pair_id, label);
    }
    Ok(out)
}

pub fn write_judgments<W: Write>(judgments: &[QueryJudgments], mut out: W) -> Result<()> {
    for j in judgments {
        for (id, label) in &j.labels {
            writeln!(out, "{}\t{id}\t{label}", j.query_id)?;
        }
    }
    Ok(())
}

/// Reads `query_id<TAB>text` lines; the text uses the corpus token syntax.
pub fn parse_queries<R: BufRead>(input: R) -> Result<Vec<(String, ShortText)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("queries", format!("line {}: expected 2 fields", i + 1)))?;
        let text = ShortText::parse(text).map_err(|e| Error::format("queries", format!("line {}: {e}", i + 1)))?;
        out.push((id.to_string(), text));
    }
    Ok(out)
}

pub fn write_queries<W: Write>(queries: &[(String, ShortText)], mut out: W) -> Result<()> {
    for (id, text) in queries {
        writeln!(out, "{id}\t{text}")?;
    }
    Ok(())
}

/// Union of the top `k` of the Q2R, Q2P and latent retrievers.
pub fn pool_candidates(
    index: &InvertedIndex,
    repo: &Repository,
    vocab: &Vocabulary,
    latent: Option<&LatentModel>,
    query_id: &str,
    q: &ShortText,
    k: usize,
) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::Config("pool depth k must be at least 1".into()));
    }
    let cfg = Stage1Config {
        per_model_k: k,
        exhaustive_latent: true,
        ..Stage1Config::default()
    };
    Ok(stage1_candidates(index, repo, vocab, latent, query_id, q, &cfg))
}

/// Mean over suitable items of the precision at their rank; `None` when
/// the judgments hold no suitable item. Unjudged items count as unsuitable.
pub fn average_precision(ranking: &[u32], judg: &QueryJudgments) -> Option<f64> {
    let total = judg.suitable_count();
    if total == 0 {
        return None;
    }
    let mut hits = 0;
    let mut sum = 0.0;
    for (i, id) in ranking.iter().enumerate() {
        if judg.is_suitable(*id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

pub fn p_at_1(ranking: &[u32], judg: &QueryJudgments) -> Option<f64> {
    if judg.suitable_count() == 0 {
        return None;
    }
    Some(match ranking.first() {
        Some(id) if judg.is_suitable(*id) => 1.0,
        _ => 0.0,
    })
}

/// Shuffles the ids and deals them round-robin into `k` folds.
pub fn kfold_split<T: Clone>(ids: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if k == 0 || k > ids.len() {
        return Err(Error::Config(format!(
            "cannot split {} queries into {k} folds",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, &j) in order.iter().enumerate() {
        folds[i % k].push(ids[j].clone());
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Two-sided CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .cdf(t)
}

/// Two-sided paired t-test of `a` against `b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidInput(
            "paired t-test needs two equal-length samples of at least 2".into(),
        ));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateTTest);
    }
    let t = mean / (var / n).sqrt();
    let df = a.len() - 1;
    let p = 2.0 * student_t_cdf(-t.abs(), df as f64);
    Ok(TTest {
        t,
        p_value: p.min(1.0),
        df,
    })
}

/// One query's judged candidate pool with features over a source schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryCandidates {
    pub query_id: String,
    pub candidates: Vec<LabeledCandidate>,
}

impl QueryCandidates {
    pub fn judgments(&self) -> QueryJudgments {
        QueryJudgments {
            query_id: self.query_id.clone(),
            labels: self.candidates.iter().map(|c| (c.pair_id, c.label)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub svm: RankSvmConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            seed: 0,
            svm: RankSvmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub fold: usize,
    /// `None` for skipped queries (no suitable candidate).
    pub ap: Option<f64>,
    pub p_at_1: Option<f64>,
    pub ranking: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub features: Vec<String>,
    pub map: f64,
    pub p_at_1: f64,
    pub skipped: usize,
    pub queries: Vec<QueryResult>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-query AP keyed by query id, skipped queries excluded.
    pub fn ap_by_query(&self) -> BTreeMap<&str, f64> {
        self.queries
            .iter()
            .filter_map(|q| q.ap.map(|ap| (q.query_id.as_str(), ap)))
            .collect()
    }

    pub fn p1_by_query(&self) -> BTreeMap<&str, f64> {
        self.queries
            .iter()
            .filter_map(|q| q.p_at_1.map(|p| (q.query_id.as_str(), p)))
            .collect()
    }
}

/// k-fold cross-validation of a RankingSVM restricted to `subset`.
pub fn cross_validate(
    data: &[QueryCandidates],
    source: &FeatureSchema,
    subset: &FeatureSchema,
    cfg: &CvConfig,
) -> Result<EvalReport> {
    let positions = source.projection(subset)?;
    let project = |c: &LabeledCandidate| LabeledCandidate {
        features: c.features.project(&positions),
        ..c.clone()
    };
    let ids: Vec<usize> = (0..data.len()).collect();
    let folds = kfold_split(&ids, cfg.folds, cfg.seed)?;
    let mut fold_of = vec![0; data.len()];
    for (f, members) in folds.iter().enumerate() {
        for &i in members {
            fold_of[i] = f;
        }
    }
    let mut results: Vec<Option<QueryResult>> = vec![None; data.len()];
    for (f, members) in folds.iter().enumerate() {
        let train: Vec<LabeledCandidate> = data
            .iter()
            .enumerate()
            .filter(|(i, _)| fold_of[*i] != f)
            .flat_map(|(_, q)| q.candidates.iter().map(project))
            .collect();
        let model = train_ranksvm(&build_preference_pairs(&train), subset, &cfg.svm)?;
        for &i in members {
            let q = &data[i];
            let mut scored = q
                .candidates
                .iter()
                .map(|c| Ok((c.pair_id, rank_score(&model, &c.features.project(&positions))?)))
                .collect::<Result<Vec<_>>>()?;
            sort_ranking(&mut scored);
            let ranking: Vec<u32> = scored.into_iter().map(|(id, _)| id).collect();
            let judg = q.judgments();
            results[i] = Some(QueryResult {
                query_id: q.query_id.clone(),
                fold: f,
                ap: average_precision(&ranking, &judg),
                p_at_1: p_at_1(&ranking, &judg),
                ranking,
            });
        }
    }
    let queries: Vec<QueryResult> = results
        .into_iter()
        .map(|r| r.expect("every query is in a fold"))
        .collect();
    let kept: Vec<&QueryResult> = queries.iter().filter(|q| q.ap.is_some()).collect();
    let n = kept.len().max(1) as f64;
    Ok(EvalReport {
        features: subset.names().iter().map(|s| s.to_string()).collect(),
        map: kept.iter().map(|q| q.ap.unwrap()).sum::<f64>() / n,
        p_at_1: kept.iter().map(|q| q.p_at_1.unwrap()).sum::<f64>() / n,
        skipped: queries.len() - kept.len(),
        queries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub name: String,
    pub report: EvalReport,
    /// Relative improvement over the first row.
    pub map_improvement: f64,
    pub p1_improvement: f64,
    /// Paired t-test against the first row; `None` on the first row or when
    /// the per-query differences are all zero.
    pub map_ttest: Option<TTest>,
    pub p1_ttest: Option<TTest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGrid {
    pub rows: Vec<GridRow>,
}

fn paired(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> (Vec<f64>, Vec<f64>) {
    a.iter().filter_map(|(k, x)| b.get(k).map(|y| (*x, *y))).unzip()
}

/// Cross-validates each named feature set and compares it with the first.
pub fn compare_feature_sets(
    data: &[QueryCandidates],
    source: &FeatureSchema,
    sets: &[(String, FeatureSchema)],
    cfg: &CvConfig,
) -> Result<ComparisonGrid> {
    let mut rows: Vec<GridRow> = Vec::new();
    for (name, schema) in sets {
        let report = cross_validate(data, source, schema, cfg)?;
        let (map_improvement, p1_improvement, map_ttest, p1_ttest) = match rows.first() {
            None => (0.0, 0.0, None, None),
            Some(base) => {
                let rel = |x: f64, b: f64| if b > 0.0 { (x - b) / b } else { 0.0 };
                let (a, b) = paired(&report.ap_by_query(), &base.report.ap_by_query());
                let (c, d) = paired(&report.p1_by_query(), &base.report.p1_by_query());
                (
                    rel(report.map, base.report.map),
                    rel(report.p_at_1, base.report.p_at_1),
                    paired_ttest(&a, &b).ok(),
                    paired_ttest(&c, &d).ok(),
                )
            }
        };
        rows.push(GridRow {
            name: name.clone(),
            report,
            map_improvement,
            p1_improvement,
            map_ttest,
            p1_ttest,
        });
    }
    Ok(ComparisonGrid { rows })
}

impl ComparisonGrid {
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>6}  {:>8}  {:>8}  {:>6}  {:>8}  {:>8}",
            "model", "MAP", "impr", "p", "P@1", "impr", "p"
        );
        let p = |t: &Option<TTest>| t.map_or("-".to_string(), |t| format!("{:.4}", t.p_value));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>6.4}  {:>7.2}%  {:>8}  {:>6.4}  {:>7.2}%  {:>8}",
                r.name,
                r.report.map,
                100.0 * r.map_improvement,
                p(&r.map_ttest),
                r.report.p_at_1,
                100.0 * r.p1_improvement,
                p(&r.p1_ttest)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judg(suitable: &[u32], unsuitable: &[u32]) -> QueryJudgments {
        let mut labels = BTreeMap::new();
        for &i in suitable {
            labels.insert(i, Label::Suitable);
        }
        for &i in unsuitable {
            labels.insert(i, Label::Unsuitable);
        }
        QueryJudgments {
            query_id: "q".into(),
            labels,
        }
    }

    #[test]
    fn ap_examples() {
        let j = judg(&[1, 3], &[2]);
        assert!((average_precision(&[1, 2, 3], &j).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[1, 3], &judg(&[1, 3], &[])).unwrap(), 1.0);
        let j = judg(&[5], &[1, 2, 3, 4]);
        assert_eq!(average_precision(&[1, 2, 3, 4, 5], &j).unwrap(), 0.2);
        assert_eq!(average_precision(&[1], &judg(&[], &[1])), None);
    }

    #[test]
    fn precision_at_one() {
        let j = judg(&[1], &[2]);
        assert_eq!(p_at_1(&[1, 2], &j), Some(1.0));
        assert_eq!(p_at_1(&[9, 1], &j), Some(0.0));
    }

    #[test]
    fn fold_sizes() {
        let ids: Vec<u32> = (0..422).collect();
        let folds = kfold_split(&ids, 5, 3).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![84, 84, 84, 85, 85]);
        let mut all: Vec<u32> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, ids);
        assert_eq!(kfold_split(&ids, 5, 3).unwrap(), folds);
        assert!(kfold_split(&ids[..3], 5, 0).is_err());
        assert!(kfold_split(&ids[..4], 4, 0).unwrap().iter().all(|f| f.len() == 1));
    }

    #[test]
    fn hand_t_statistic() {
        let a = [1.0, 2.0, 1.0, 2.0];
        let b = [0.0; 4];
        let t = paired_ttest(&a, &b).unwrap();
        assert!((t.t - 5.196152422706632).abs() < 1e-12);
        assert_eq!(t.df, 3);
        assert!(matches!(
            paired_ttest(&[1.0, 2.0], &[0.0, 1.0]),
            Err(Error::DegenerateTTest)
        ));
    }

    #[test]
    fn null_statistic_has_unit_p() {
        let a: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b = vec![0.0; 30];
        let t = paired_ttest(&a, &b).unwrap();
        assert_eq!(t.t, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn judgment_file_round_trip() {
        let src = "q1\t3\tsuitable\nq1\t4\tunsuitable\nq2\t3\t1\n";
        let j = parse_judgments(src.as_bytes()).unwrap();
        assert_eq!(j.len(), 2);
        assert!(j[0].is_suitable(3) && !j[0].is_suitable(4) && j[1].is_suitable(3));
        let mut out = Vec::new();
        write_judgments(&j, &mut out).unwrap();
        assert_eq!(parse_judgments(out.as_slice()).unwrap(), j);
    }
}

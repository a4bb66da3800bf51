//! Linear RankingSVM over z-scored matching features.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Suitable,
    Unsuitable,
}

impl Label {
    pub fn is_suitable(self) -> bool {
        self == Label::Suitable
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "suitable" | "1" => Ok(Label::Suitable),
            "unsuitable" | "0" => Ok(Label::Unsuitable),
            other => Err(Error::format("label", format!("`{other}`"))),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Suitable => "suitable",
            Label::Unsuitable => "unsuitable",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCandidate {
    pub query_id: String,
    pub pair_id: u32,
    pub label: Label,
    pub features: FeatureVector,
}

/// `better` should outrank `worse` for `query_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub query_id: String,
    pub better_id: u32,
    pub worse_id: u32,
    pub better: FeatureVector,
    pub worse: FeatureVector,
}

/// Every (suitable, unsuitable) combination within each query, in input
/// order.
pub fn build_preference_pairs(data: &[LabeledCandidate]) -> Vec<PreferencePair> {
    let mut by_query: BTreeMap<&str, Vec<&LabeledCandidate>> = BTreeMap::new();
    for c in data {
        by_query.entry(&c.query_id).or_default().push(c);
    }
    let mut out = Vec::new();
    for cands in by_query.values() {
        for pos in cands.iter().filter(|c| c.label.is_suitable()) {
            for neg in cands.iter().filter(|c| !c.label.is_suitable()) {
                out.push(PreferencePair {
                    query_id: pos.query_id.clone(),
                    better_id: pos.pair_id,
                    worse_id: neg.pair_id,
                    better: pos.features.clone(),
                    worse: neg.features.clone(),
                });
            }
        }
    }
    out
}

/// Suitable candidates paired against `per_positive` candidates drawn from
/// other queries, which stand in for unlabeled negatives.
pub fn build_random_negative_pairs(data: &[LabeledCandidate], per_positive: usize, seed: u64) -> Vec<PreferencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for pos in data.iter().filter(|c| c.label.is_suitable()) {
        let others: Vec<&LabeledCandidate> = data.iter().filter(|c| c.query_id != pos.query_id).collect();
        if others.is_empty() {
            continue;
        }
        for _ in 0..per_positive {
            let neg = others[rng.gen_range(0..others.len())];
            out.push(PreferencePair {
                query_id: pos.query_id.clone(),
                better_id: pos.pair_id,
                worse_id: neg.pair_id,
                better: pos.features.clone(),
                worse: neg.features.clone(),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSvmConfig {
    pub c: f64,
    pub max_epochs: usize,
    /// Stop when the projected-gradient spread falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for RankSvmConfig {
    fn default() -> Self {
        RankSvmConfig {
            c: 50.0,
            max_epochs: 2000,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingModel {
    pub schema: FeatureSchema,
    pub weights: Vec<f64>,
    pub mean: Vec<f64>,
    /// Zero marks a constant feature, which always gets weight zero.
    pub std: Vec<f64>,
    pub c: f64,
}

impl RankingModel {
    pub fn is_constant(&self, i: usize) -> bool {
        self.std[i] == 0.0
    }

    pub fn standardize(&self, fv: &FeatureVector) -> Result<Vec<f64>> {
        if fv.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "feature vector has {} values, schema has {}",
                fv.len(),
                self.schema.len()
            )));
        }
        Ok(fv
            .values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect())
    }

    /// Inverse of `standardize` on non-constant features.
    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    /// `# stc-ranker v1`, the schema header, `C <c>`, then
    /// `name<TAB>weight<TAB>mean<TAB>std` lines.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# stc-ranker v1")?;
        writeln!(out, "{}", self.schema.header())?;
        writeln!(out, "C {:?}", self.c)?;
        for (i, name) in self.schema.names().iter().enumerate() {
            writeln!(
                out,
                "{name}\t{:?}\t{:?}\t{:?}",
                self.weights[i], self.mean[i], self.std[i]
            )?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let bad = |d: String| Error::format("ranking model", d);
        let mut lines = input.lines();
        let mut next = || -> Result<String> { lines.next().transpose()?.ok_or_else(|| bad("truncated".into())) };
        if next()? != "# stc-ranker v1" {
            return Err(bad("bad header".into()));
        }
        let schema = FeatureSchema::parse_header(&next()?)?;
        let c_line = next()?;
        let c: f64 = c_line
            .strip_prefix("C ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad penalty line `{c_line}`")))?;
        let (mut weights, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
        for name in schema.names() {
            let line = next()?;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 || f[0] != name {
                return Err(bad(format!("expected row for `{name}`, found `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
            weights.push(num(f[1])?);
            mean.push(num(f[2])?);
            std.push(num(f[3])?);
        }
        Ok(RankingModel {
            schema,
            weights,
            mean,
            std,
            c,
        })
    }
}

/// `ω · standardize(Φ)`.
pub fn rank_score(m: &RankingModel, fv: &FeatureVector) -> Result<f64> {
    let z = m.standardize(fv)?;
    Ok(crate::math::dot(&m.weights, &z))
}

/// Per-feature terms `ω_i · z_i`, which sum to the score.
pub fn score_terms(m: &RankingModel, fv: &FeatureVector) -> Result<Vec<f64>> {
    let z = m.standardize(fv)?;
    Ok(z.iter().zip(&m.weights).map(|(z, w)| z * w).collect())
}

/// Mean and population standard deviation over the distinct
/// (query, candidate) vectors appearing in `pairs`.
pub fn standardization(pairs: &[PreferencePair], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut distinct: BTreeMap<(&str, u32), &FeatureVector> = BTreeMap::new();
    for p in pairs {
        distinct.insert((&p.query_id, p.better_id), &p.better);
        distinct.insert((&p.query_id, p.worse_id), &p.worse);
    }
    let n = distinct.len().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for v in distinct.values() {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in distinct.values() {
        for ((s, x), m) in var.iter_mut().zip(&v.values).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    // Relative cut so that rounding noise on a constant column does not pass
    // for variation.
    let std = var
        .iter()
        .zip(&mean)
        .map(|(s, m)| {
            let sd = (s / n).sqrt();
            if sd <= 1e-12 * m.abs().max(1.0) {
                0.0
            } else {
                sd
            }
        })
        .collect();
    (mean, std)
}

/// `½‖ω‖² + C Σ max(0, 1 − ω·d)` over difference vectors `d`.
pub fn primal_objective(weights: &[f64], diffs: &[Vec<f64>], c: f64) -> f64 {
    let hinge: f64 = diffs
        .iter()
        .map(|d| (1.0 - crate::math::dot(weights, d)).max(0.0))
        .sum();
    0.5 * crate::math::dot(weights, weights) + c * hinge
}

/// Standardized difference vectors `z(Φ⁺) − z(Φ⁻)`.
pub fn difference_vectors(pairs: &[PreferencePair], mean: &[f64], std: &[f64]) -> Vec<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            p.better
                .values
                .iter()
                .zip(&p.worse.values)
                .zip(mean.iter().zip(std))
                .map(|((a, b), (_, s))| if *s > 0.0 { (a - b) / s } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Dual coordinate descent for the L1-loss linear SVM on difference vectors
/// with all labels positive.
pub fn solve_dual(diffs: &[Vec<f64>], dim: usize, c: f64, cfg: &RankSvmConfig) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    let mut alpha = vec![0.0; diffs.len()];
    let q: Vec<f64> = diffs.iter().map(|d| crate::math::dot(d, d)).collect();
    let mut order: Vec<usize> = (0..diffs.len()).filter(|&i| q[i] > 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = crate::math::dot(&w, &diffs[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                let delta = alpha[i] - old;
                for (wj, dj) in w.iter_mut().zip(&diffs[i]) {
                    *wj += delta * dj;
                }
            }
        }
        if pg_max - pg_min < cfg.tolerance {
            break;
        }
    }
    w
}

pub fn train_ranksvm(pairs: &[PreferencePair], schema: &FeatureSchema, cfg: &RankSvmConfig) -> Result<RankingModel> {
    if pairs.is_empty() {
        return Err(Error::DegenerateTrainingData);
    }
    if !(cfg.c > 0.0) {
        return Err(Error::Config("C must be positive".into()));
    }
    let dim = schema.len();
    if pairs.iter().any(|p| p.better.len() != dim || p.worse.len() != dim) {
        return Err(Error::Schema("preference pair does not match the schema".into()));
    }
    let (mean, std) = standardization(pairs, dim);
    let diffs = difference_vectors(pairs, &mean, &std);
    if diffs.iter().all(|d| d.iter().all(|&x| x == 0.0)) {
        return Err(Error::DegenerateTrainingData);
    }
    let weights = solve_dual(&diffs, dim, cfg.c, cfg);
    Ok(RankingModel {
        schema: schema.clone(),
        weights,
        mean,
        std,
        c: cfg.c,
    })
}

/// Fraction of pairs the model orders strictly correctly.
pub fn pairwise_accuracy(m: &RankingModel, pairs: &[PreferencePair]) -> Result<f64> {
    let mut hits = 0;
    for p in pairs {
        if rank_score(m, &p.better)? > rank_score(m, &p.worse)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len().max(1) as f64)
}

/// Sorts `(pair_id, score)` by score descending, ties by pair id.
pub fn sort_ranking(scored: &mut [(u32, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

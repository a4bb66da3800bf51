//! Bilinear latent-space matching between queries and responses.
//!
//! A query vector `q` and a response vector `r` are mapped into a shared
//! `d`-dimensional space by `L_q` and `L_r`; the match score is the inner
//! product of the two images. Every row of both matrices is kept on the
//! sphere `‖row‖₂ = μ2` inside the ball `‖row‖₁ ≤ μ1`.

use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tfidf_vector, ShortText, SparseVector, Vocabulary};
use crate::error::{Error, Result};
use crate::math::{l1_norm, l2_norm};

const MAGIC: &str = "STCLAT01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTrainConfig {
    pub dim: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Train on `max(1 + s⁻ − s⁺, 0)` with one sampled mismatched response
    /// per positive instead of the positives-only hinge.
    pub negative_sampling: bool,
    pub seed: u64,
}

impl Default for LatentTrainConfig {
    fn default() -> Self {
        LatentTrainConfig {
            dim: 100,
            mu1: 5.0,
            mu2: 1.0,
            learning_rate: 0.1,
            epochs: 5,
            negative_sampling: false,
            seed: 0,
        }
    }
}

impl LatentTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        if !(self.mu2 > 0.0 && self.mu1 >= self.mu2) {
            return Err(Error::Config(format!(
                "row norm bounds need mu1 >= mu2 > 0, got mu1={} mu2={}",
                self.mu1, self.mu2
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Unit-normalized TF-IDF vector, the input representation of the model.
pub fn match_vector(text: &ShortText, vocab: &Vocabulary) -> SparseVector {
    tfidf_vector(text, vocab).normalized()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel {
    dim: usize,
    mu1: f64,
    mu2: f64,
    n_q: usize,
    n_r: usize,
    lq: Vec<f64>,
    lr: Vec<f64>,
    vocab_tag: String,
}

impl LatentModel {
    /// Builds a model from explicit row-major matrices. Rows are not
    /// projected, so callers can construct hand-made instances.
    pub fn from_matrices(
        dim: usize,
        lq: Vec<f64>,
        lr: Vec<f64>,
        mu1: f64,
        mu2: f64,
        vocab_tag: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 || lq.len() % dim != 0 || lr.len() % dim != 0 {
            return Err(Error::Config(format!(
                "matrix sizes {}, {} are not multiples of dim {dim}",
                lq.len(),
                lr.len()
            )));
        }
        Ok(LatentModel {
            dim,
            mu1,
            mu2,
            n_q: lq.len() / dim,
            n_r: lr.len() / dim,
            lq,
            lr,
            vocab_tag: vocab_tag.into(),
        })
    }

    /// Random rows, uniform in `[-0.1, 0.1]`, projected onto the feasible set.
    pub fn init(n_q: usize, n_r: usize, cfg: &LatentTrainConfig, vocab_tag: &str) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.dim;
        let mut random_rows = |n: usize| {
            let mut m = Vec::with_capacity(n * d);
            for row in 0..n {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.1..=0.1)).collect();
                m.extend(project_row(&v, cfg.mu1, cfg.mu2, row));
            }
            m
        };
        let lq = random_rows(n_q);
        let lr = random_rows(n_r);
        LatentModel::from_matrices(d, lq, lr, cfg.mu1, cfg.mu2, vocab_tag)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    pub fn vocab_tag(&self) -> &str {
        &self.vocab_tag
    }

    pub fn query_rows(&self) -> usize {
        self.n_q
    }

    pub fn response_rows(&self) -> usize {
        self.n_r
    }

    pub fn query_row(&self, i: usize) -> &[f64] {
        &self.lq[i * self.dim..(i + 1) * self.dim]
    }

    pub fn response_row(&self, i: usize) -> &[f64] {
        &self.lr[i * self.dim..(i + 1) * self.dim]
    }

    fn image(m: &[f64], n_rows: usize, dim: usize, v: &SparseVector) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(id, w) in v.entries() {
            let id = id as usize;
            if id >= n_rows {
                continue;
            }
            for (o, x) in out.iter_mut().zip(&m[id * dim..(id + 1) * dim]) {
                *o += w * x;
            }
        }
        out
    }

    /// `L_qᵀ q`.
    pub fn query_image(&self, q: &SparseVector) -> Vec<f64> {
        Self::image(&self.lq, self.n_q, self.dim, q)
    }

    /// `L_rᵀ r`.
    pub fn response_image(&self, r: &SparseVector) -> Vec<f64> {
        Self::image(&self.lr, self.n_r, self.dim, r)
    }

    /// `qᵀ L_q L_rᵀ r`, evaluated as the dot product of the two images.
    pub fn score(&self, q: &SparseVector, r: &SparseVector) -> f64 {
        if q.is_empty() || r.is_empty() {
            return 0.0;
        }
        crate::math::dot(&self.query_image(q), &self.response_image(r))
    }

    /// Positives-only hinge objective `Σ max(1 − score, 0)`.
    pub fn objective(&self, pairs: &[(SparseVector, SparseVector)]) -> f64 {
        pairs.iter().map(|(q, r)| (1.0 - self.score(q, r)).max(0.0)).sum()
    }

    /// True when every row satisfies both norm constraints.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.lq
            .chunks(self.dim)
            .chain(self.lr.chunks(self.dim))
            .all(|row| l1_norm(row) <= self.mu1 + tol && (l2_norm(row) - self.mu2).abs() <= tol)
    }

    fn add_to_row(m: &mut [f64], dim: usize, row: usize, coef: f64, dir: &[f64]) {
        for (x, g) in m[row * dim..(row + 1) * dim].iter_mut().zip(dir) {
            *x += coef * g;
        }
    }

    fn project_rows(&mut self, q_rows: &[u32], r_rows: &[u32]) {
        let d = self.dim;
        for &row in q_rows {
            let row = row as usize;
            if row < self.n_q {
                let p = project_row(&self.lq[row * d..(row + 1) * d], self.mu1, self.mu2, row);
                self.lq[row * d..(row + 1) * d].copy_from_slice(&p);
            }
        }
        for &row in r_rows {
            let row = row as usize;
            if row < self.n_r {
                let p = project_row(&self.lr[row * d..(row + 1) * d], self.mu1, self.mu2, row);
                self.lr[row * d..(row + 1) * d].copy_from_slice(&p);
            }
        }
    }

    /// One projected subgradient step on a single positive pair.
    fn positive_step(&mut self, q: &SparseVector, r: &SparseVector, lr: f64) {
        let u = self.query_image(q);
        let z = self.response_image(r);
        if crate::math::dot(&u, &z) >= 1.0 {
            return;
        }
        let d = self.dim;
        for &(id, w) in q.entries() {
            if (id as usize) < self.n_q {
                Self::add_to_row(&mut self.lq, d, id as usize, lr * w, &z);
            }
        }
        for &(id, w) in r.entries() {
            if (id as usize) < self.n_r {
                Self::add_to_row(&mut self.lr, d, id as usize, lr * w, &u);
            }
        }
        self.project_rows(&ids(q), &ids(r));
    }

    /// One step on `max(1 + s(q, r⁻) − s(q, r⁺), 0)`.
    fn contrastive_step(&mut self, q: &SparseVector, pos: &SparseVector, neg: &SparseVector, lr: f64) {
        let u = self.query_image(q);
        let zp = self.response_image(pos);
        let zn = self.response_image(neg);
        let margin = 1.0 + crate::math::dot(&u, &zn) - crate::math::dot(&u, &zp);
        if margin <= 0.0 {
            return;
        }
        let d = self.dim;
        let diff: Vec<f64> = zp.iter().zip(&zn).map(|(a, b)| a - b).collect();
        for &(id, w) in q.entries() {
            if (id as usize) < self.n_q {
                Self::add_to_row(&mut self.lq, d, id as usize, lr * w, &diff);
            }
        }
        let r_dir = SparseVector::from_entries(
            pos.entries()
                .iter()
                .copied()
                .chain(neg.entries().iter().map(|&(i, w)| (i, -w))),
        );
        for &(id, w) in r_dir.entries() {
            if (id as usize) < self.n_r {
                Self::add_to_row(&mut self.lr, d, id as usize, lr * w, &u);
            }
        }
        let r_rows: Vec<u32> = ids(pos).into_iter().chain(ids(neg)).collect();
        self.project_rows(&ids(q), &r_rows);
    }

    /// Full-batch projected subgradient step on the positives-only objective.
    pub fn full_batch_step(&mut self, pairs: &[(SparseVector, SparseVector)], lr: f64) {
        let d = self.dim;
        let mut gq = vec![0.0; self.lq.len()];
        let mut gr = vec![0.0; self.lr.len()];
        let mut touched_q = Vec::new();
        let mut touched_r = Vec::new();
        for (q, r) in pairs {
            let u = self.query_image(q);
            let z = self.response_image(r);
            if crate::math::dot(&u, &z) >= 1.0 {
                continue;
            }
            for &(id, w) in q.entries() {
                if (id as usize) < self.n_q {
                    Self::add_to_row(&mut gq, d, id as usize, w, &z);
                    touched_q.push(id);
                }
            }
            for &(id, w) in r.entries() {
                if (id as usize) < self.n_r {
                    Self::add_to_row(&mut gr, d, id as usize, w, &u);
                    touched_r.push(id);
                }
            }
        }
        touched_q.sort_unstable();
        touched_q.dedup();
        touched_r.sort_unstable();
        touched_r.dedup();
        for (x, g) in self.lq.iter_mut().zip(&gq) {
            *x += lr * g;
        }
        for (x, g) in self.lr.iter_mut().zip(&gr) {
            *x += lr * g;
        }
        self.project_rows(&touched_q, &touched_r);
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{MAGIC} dim={} mu1={:?} mu2={:?} n_q={} n_r={} tag={}",
            self.dim, self.mu1, self.mu2, self.n_q, self.n_r, self.vocab_tag
        )?;
        for x in self.lq.iter().chain(&self.lr) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let fields = header_fields(header.trim_end(), MAGIC, "latent model")?;
        let get = |k: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::format("latent model", format!("missing `{k}`")))
        };
        let parse_err = |k: &str| Error::format("latent model", format!("bad `{k}`"));
        let dim: usize = get("dim")?.parse().map_err(|_| parse_err("dim"))?;
        let mu1: f64 = get("mu1")?.parse().map_err(|_| parse_err("mu1"))?;
        let mu2: f64 = get("mu2")?.parse().map_err(|_| parse_err("mu2"))?;
        let n_q: usize = get("n_q")?.parse().map_err(|_| parse_err("n_q"))?;
        let n_r: usize = get("n_r")?.parse().map_err(|_| parse_err("n_r"))?;
        let tag = get("tag")?.to_string();
        let lq = read_f64s(&mut input, n_q * dim)?;
        let lr = read_f64s(&mut input, n_r * dim)?;
        LatentModel::from_matrices(dim, lq, lr, mu1, mu2, tag)
    }
}

fn ids(v: &SparseVector) -> Vec<u32> {
    v.entries().iter().map(|&(i, _)| i).collect()
}

pub(crate) fn header_fields<'a>(line: &'a str, magic: &str, what: &'static str) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split(' ');
    if parts.next() != Some(magic) {
        return Err(Error::format(what, format!("expected `{magic}` header")));
    }
    parts
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| Error::format(what, format!("bad header field `{p}`")))
        })
        .collect()
}

pub(crate) fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        input.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

/// Maps a row onto `{x : ‖x‖₁ ≤ μ1, ‖x‖₂ = μ2}`.
///
/// The result is `μ2 · s_θ(v) / ‖s_θ(v)‖₂` where `s_θ` soft-thresholds every
/// entry by `θ` and `θ ≥ 0` is the smallest threshold whose L1/L2 ratio is at
/// most `μ1/μ2`; this is the feasible point with the largest inner product
/// with `v`. When `v` is feasible up to scale this is a plain rescale. Ties
/// at the largest magnitude that cannot all survive keep the lowest indices.
/// A zero row maps to `μ2 · e_(fallback mod n)`.
pub fn project_row(v: &[f64], mu1: f64, mu2: f64, fallback: usize) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let l2 = l2_norm(v);
    if l2 == 0.0 || !l2.is_finite() {
        let mut out = vec![0.0; n];
        out[fallback % n] = mu2;
        return out;
    }
    let rho = mu1 / mu2;
    if l1_norm(v) <= rho * l2 {
        return finish(v.iter().map(|x| x * mu2 / l2).collect(), mu1);
    }

    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).filter(|&a| a > 0.0).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut prefix1 = Vec::with_capacity(mags.len() + 1);
    let mut prefix2 = Vec::with_capacity(mags.len() + 1);
    prefix1.push(0.0);
    prefix2.push(0.0);
    for &a in &mags {
        prefix1.push(prefix1.last().unwrap() + a);
        prefix2.push(prefix2.last().unwrap() + a * a);
    }

    // Breakpoints are the distinct magnitudes below the maximum, ascending;
    // with threshold t the support is every entry strictly above t.
    let mut breakpoints: Vec<(f64, usize)> = Vec::new();
    for j in (1..mags.len()).rev() {
        let t = mags[j];
        if t < mags[j - 1] && breakpoints.last().map_or(true, |&(b, _)| b != t) {
            breakpoints.push((t, j));
        }
    }

    let mut prev = (0.0, mags.len());
    for &(t, support) in &breakpoints {
        let (s1, s2) = (prefix1[support], prefix2[support]);
        let j = support as f64;
        let l1 = s1 - j * t;
        let l2sq = s2 - 2.0 * t * s1 + j * t * t;
        if l1 * l1 <= rho * rho * l2sq {
            let theta = solve_threshold(prefix1[prev.1], prefix2[prev.1], prev.1, rho).clamp(prev.0, t);
            return finish(soft_threshold(v, theta, mu2), mu1);
        }
        prev = (t, support);
    }

    // Last interval: support is the block of maximal entries and above.
    let theta = solve_threshold(prefix1[prev.1], prefix2[prev.1], prev.1, rho);
    if theta.is_finite() && theta < mags[0] && theta >= prev.0 {
        let out = soft_threshold(v, theta, mu2);
        if out.iter().any(|&x| x != 0.0) {
            return finish(out, mu1);
        }
    }
    // The largest magnitude is tied across more entries than the ratio
    // allows: keep the first floor(ρ²) of them at equal magnitude.
    let top = mags[0];
    let keep = ((rho * rho + 1e-9).floor() as usize).max(1);
    let mut out = vec![0.0; n];
    let mag = mu2 / (keep as f64).sqrt();
    let mut kept = 0;
    for (o, &x) in out.iter_mut().zip(v) {
        if kept < keep && x.abs() == top {
            *o = mag * x.signum();
            kept += 1;
        }
    }
    finish(out, mu1)
}

/// Smallest root of `(S1 − jθ)² = ρ² (S2 − 2θS1 + jθ²)` for support size `j`.
fn solve_threshold(s1: f64, s2: f64, support: usize, rho: f64) -> f64 {
    let j = support as f64;
    let d = j - rho * rho;
    if d <= 0.0 {
        return f64::INFINITY;
    }
    let disc = (s1 * s1 - j * (s1 * s1 - rho * rho * s2) / d).max(0.0);
    (s1 - disc.sqrt()) / j
}

fn soft_threshold(v: &[f64], theta: f64, mu2: f64) -> Vec<f64> {
    let s: Vec<f64> = v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect();
    let n = l2_norm(&s);
    if n == 0.0 {
        return s;
    }
    s.into_iter().map(|x| x * mu2 / n).collect()
}

/// Guards the L1 bound against rounding in the last ulp.
fn finish(mut out: Vec<f64>, mu1: f64) -> Vec<f64> {
    let mut l1 = l1_norm(&out);
    while l1 > mu1 {
        let f = mu1 / l1 * (1.0 - 2.0 * f64::EPSILON);
        out.iter_mut().for_each(|x| *x *= f);
        l1 = l1_norm(&out);
    }
    out
}

/// Trains the latent model with stochastic projected subgradient descent.
///
/// Every row touched by an update is projected back onto the feasible set
/// before the next example. Deterministic for a fixed seed.
pub fn train_latent(
    pairs: &[(SparseVector, SparseVector)],
    n_words: usize,
    vocab_tag: &str,
    cfg: &LatentTrainConfig,
) -> Result<LatentModel> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no training pairs for the latent model".into()));
    }
    let mut model = LatentModel::init(n_words, n_words, cfg, vocab_tag)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (q, r) = &pairs[i];
            if cfg.negative_sampling && pairs.len() > 1 {
                let mut j = rng.gen_range(0..pairs.len() - 1);
                if j >= i {
                    j += 1;
                }
                model.contrastive_step(q, r, &pairs[j].1, cfg.learning_rate);
            } else {
                model.positive_step(q, r, cfg.learning_rate);
            }
        }
    }
    Ok(model)
}

//! Deep matching model: `K` bilinear local matchers, each restricted to a
//! topic patch of query-side and response-side words, feeding a multi-layer
//! perceptron with sigmoid hidden units and a linear scalar output.
//!
//! Patches come from a collapsed Gibbs topic model over pseudo-documents
//! made of a pair's post words (tagged as query side) and comment words
//! (tagged as response side). Parameters live in one flat vector so the
//! whole model can be trained and gradient-checked uniformly.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Repository, SparseVector, Vocabulary};
use crate::error::{Error, Result};
use crate::latent::{header_fields, read_f64s};
use crate::math::sigmoid;

const MAGIC: &str = "STCDM001";

/// Word subsets matched by one local matcher.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicPatch {
    pub k: usize,
    /// Query-side vocabulary ids, ascending.
    pub x_words: Vec<u32>,
    /// Response-side vocabulary ids, ascending.
    pub y_words: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub topics: usize,
    pub words_per_side: usize,
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Words in more than this fraction of the vocabulary's documents are
    /// left out of the topic model, as stopwords usually are.
    pub max_df_ratio: f64,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            topics: 50,
            words_per_side: 50,
            iterations: 100,
            alpha: 0.1,
            beta: 0.01,
            max_df_ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TopicPatches {
    pub patches: Vec<TopicPatch>,
    pub warnings: Vec<String>,
}

/// Learns `K` topic patches with collapsed Gibbs sampling.
///
/// Token `w` of a post becomes word `2·id(w)`, of a comment `2·id(w) + 1`,
/// so one topic spans both sides. Patch `k` keeps the `words_per_side`
/// most frequent words of topic `k` on each side (ties by word id).
pub fn learn_topics(repo: &Repository, vocab: &Vocabulary, cfg: &GibbsConfig) -> Result<TopicPatches> {
    if cfg.topics == 0 || cfg.words_per_side == 0 {
        return Err(Error::Config("topics and words_per_side must be positive".into()));
    }
    let k_topics = cfg.topics;
    let n_words = 2 * vocab.len();
    let max_df = cfg.max_df_ratio * vocab.n_docs() as f64;
    let keep = |w: &str| vocab.lookup(w).filter(|&(_, df)| df as f64 <= max_df).map(|(id, _)| id);
    let docs: Vec<Vec<u32>> = repo
        .iter()
        .map(|p| {
            let x = p.post.words().filter_map(keep).map(|id| 2 * id);
            let y = p.comment.words().filter_map(keep).map(|id| 2 * id + 1);
            x.chain(y).collect()
        })
        .filter(|d: &Vec<u32>| !d.is_empty())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut n_dk = vec![0u32; docs.len() * k_topics];
    let mut n_kw = vec![0u32; k_topics * n_words];
    let mut n_k = vec![0u32; k_topics];
    let mut z: Vec<Vec<u16>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let zd: Vec<u16> = doc
            .iter()
            .map(|&w| {
                let k = rng.gen_range(0..k_topics);
                n_dk[d * k_topics + k] += 1;
                n_kw[k * n_words + w as usize] += 1;
                n_k[k] += 1;
                k as u16
            })
            .collect();
        z.push(zd);
    }

    let v_beta = n_words as f64 * cfg.beta;
    let mut p = vec![0.0; k_topics];
    for _ in 0..cfg.iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = z[d][i] as usize;
                n_dk[d * k_topics + old] -= 1;
                n_kw[old * n_words + w] -= 1;
                n_k[old] -= 1;
                let mut total = 0.0;
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = (n_dk[d * k_topics + k] as f64 + cfg.alpha) * (n_kw[k * n_words + w] as f64 + cfg.beta)
                        / (n_k[k] as f64 + v_beta);
                    total += *pk;
                }
                let mut u = rng.gen::<f64>() * total;
                let mut new = k_topics - 1;
                for (k, &pk) in p.iter().enumerate() {
                    if u < pk {
                        new = k;
                        break;
                    }
                    u -= pk;
                }
                z[d][i] = new as u16;
                n_dk[d * k_topics + new] += 1;
                n_kw[new * n_words + w] += 1;
                n_k[new] += 1;
            }
        }
    }

    // Global side frequencies pick a fallback word for empty topics.
    let mut global = vec![0u64; n_words];
    for doc in &docs {
        for &w in doc {
            global[w as usize] += 1;
        }
    }
    let side_words: [Vec<u32>; 2] = [0u32, 1].map(|side| {
        (0..vocab.len() as u32)
            .filter(|&id| global[(2 * id + side) as usize] > 0)
            .collect()
    });
    let mut warnings = Vec::new();
    for (words, name) in side_words.iter().zip(["query", "response"]) {
        if words.len() < cfg.words_per_side {
            warnings.push(format!(
                "{name}-side vocabulary has {} words, fewer than words_per_side={}; patches truncated",
                words.len(),
                cfg.words_per_side
            ));
        }
    }

    let top_words = |k: usize, side: u32| -> Vec<u32> {
        let candidates = &side_words[side as usize];
        let mut ranked: Vec<(u32, u32)> = candidates
            .iter()
            .map(|&id| (n_kw[k * n_words + (2 * id + side) as usize], id))
            .filter(|&(c, _)| c > 0)
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut words: Vec<u32> = ranked.into_iter().take(cfg.words_per_side).map(|(_, id)| id).collect();
        if words.is_empty() {
            // Empty topic: fall back to the most frequent word of the side.
            let freq = |id: u32| global[(2 * id + side) as usize];
            if let Some(&id) = candidates
                .iter()
                .max_by(|&&a, &&b| freq(a).cmp(&freq(b)).then(b.cmp(&a)))
            {
                words.push(id);
            }
        }
        words.sort_unstable();
        words
    };

    let patches: Vec<TopicPatch> = (0..k_topics)
        .map(|k| TopicPatch {
            k,
            x_words: top_words(k, 0),
            y_words: top_words(k, 1),
        })
        .collect();
    if patches.iter().any(|p| p.x_words.is_empty() || p.y_words.is_empty()) {
        return Err(Error::InvalidInput(
            "repository has no indexed words on one side".into(),
        ));
    }
    Ok(TopicPatches { patches, warnings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepMatchConfig {
    /// Latent width of each local matcher.
    pub patch_dim: usize,
    /// Sigmoid hidden layer sizes of the upper network.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for DeepMatchConfig {
    fn default() -> Self {
        DeepMatchConfig {
            patch_dim: 5,
            hidden: vec![32],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct PatchLayout {
    lx: usize,
    ly: usize,
    bias: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct LayerLayout {
    weights: usize,
    bias: usize,
    inputs: usize,
    outputs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepMatchModel {
    patches: Vec<TopicPatch>,
    patch_dim: usize,
    /// `[K, hidden..., 1]`.
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    /// Parameters under the L2 penalty (all but biases).
    regularized: Vec<bool>,
    patch_layout: Vec<PatchLayout>,
    layer_layout: Vec<LayerLayout>,
    seed: u64,
    vocab_tag: String,
}

/// Intermediate values of one forward pass.
struct Trace {
    /// Per patch: restricted inputs as (row, value), images u and v.
    xs: Vec<Vec<(usize, f64)>>,
    ys: Vec<Vec<(usize, f64)>>,
    us: Vec<Vec<f64>>,
    vs: Vec<Vec<f64>>,
    /// Activations per layer; `acts[0]` are the local scores.
    acts: Vec<Vec<f64>>,
    score: f64,
}

impl DeepMatchModel {
    fn layouts(
        patches: &[TopicPatch],
        patch_dim: usize,
        layer_sizes: &[usize],
    ) -> (Vec<PatchLayout>, Vec<LayerLayout>, Vec<bool>) {
        let mut offset = 0;
        let mut regularized = Vec::new();
        let mut patch_layout = Vec::with_capacity(patches.len());
        for p in patches {
            let lx = offset;
            offset += p.x_words.len() * patch_dim;
            let ly = offset;
            offset += p.y_words.len() * patch_dim;
            let bias = offset;
            offset += 1;
            regularized.resize(bias, true);
            regularized.push(false);
            patch_layout.push(PatchLayout { lx, ly, bias });
        }
        let mut layer_layout = Vec::new();
        for w in layer_sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let weights = offset;
            offset += inputs * outputs;
            let bias = offset;
            offset += outputs;
            regularized.resize(bias, true);
            regularized.resize(offset, false);
            layer_layout.push(LayerLayout {
                weights,
                bias,
                inputs,
                outputs,
            });
        }
        (patch_layout, layer_layout, regularized)
    }

    /// Seeded initialization: patch matrices uniform in `[-0.1, 0.1]`, upper
    /// weights uniform in `±1/√fan_in`, biases zero.
    pub fn new(patches: Vec<TopicPatch>, cfg: &DeepMatchConfig, vocab_tag: &str) -> Result<Self> {
        if patches.is_empty() || cfg.patch_dim == 0 || cfg.hidden.contains(&0) {
            return Err(Error::Config(
                "deep match needs at least one patch and positive layer widths".into(),
            ));
        }
        for (i, p) in patches.iter().enumerate() {
            let ascending = |w: &[u32]| w.windows(2).all(|p| p[0] < p[1]);
            if p.x_words.is_empty()
                || p.y_words.is_empty()
                || p.k != i
                || !ascending(&p.x_words)
                || !ascending(&p.y_words)
            {
                return Err(Error::Config(format!("malformed topic patch {i}")));
            }
        }
        let mut layer_sizes = vec![patches.len()];
        layer_sizes.extend(&cfg.hidden);
        layer_sizes.push(1);
        let (patch_layout, layer_layout, regularized) = Self::layouts(&patches, cfg.patch_dim, &layer_sizes);
        let mut params = vec![0.0; regularized.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for pl in &patch_layout {
            for x in &mut params[pl.lx..pl.bias] {
                *x = rng.gen_range(-0.1..=0.1);
            }
        }
        for ll in &layer_layout {
            let r = 1.0 / (ll.inputs as f64).sqrt();
            for x in &mut params[ll.weights..ll.bias] {
                *x = rng.gen_range(-r..=r);
            }
        }
        Ok(DeepMatchModel {
            patches,
            patch_dim: cfg.patch_dim,
            layer_sizes,
            params,
            regularized,
            patch_layout,
            layer_layout,
            seed: cfg.seed,
            vocab_tag: vocab_tag.to_string(),
        })
    }

    pub fn patches(&self) -> &[TopicPatch] {
        &self.patches
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_dim
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn vocab_tag(&self) -> &str {
        &self.vocab_tag
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn regularized_mask(&self) -> &[bool] {
        &self.regularized
    }

    /// Row-major `|x_words| × d` matrix of patch `k`.
    pub fn lx(&self, k: usize) -> &[f64] {
        let pl = &self.patch_layout[k];
        &self.params[pl.lx..pl.ly]
    }

    pub fn ly(&self, k: usize) -> &[f64] {
        let pl = &self.patch_layout[k];
        &self.params[pl.ly..pl.bias]
    }

    pub fn patch_bias(&self, k: usize) -> f64 {
        self.params[self.patch_layout[k].bias]
    }

    /// Weights (`outputs × inputs`, row-major) and biases of upper layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let ll = &self.layer_layout[l];
        (
            &self.params[ll.weights..ll.bias],
            &self.params[ll.bias..ll.bias + ll.outputs],
        )
    }

    fn restrict(words: &[u32], v: &SparseVector) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        let e = v.entries();
        while i < words.len() && j < e.len() {
            match words[i].cmp(&e[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push((i, e[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    fn image(&self, m_offset: usize, rows: &[(usize, f64)]) -> Vec<f64> {
        let d = self.patch_dim;
        let mut out = vec![0.0; d];
        for &(row, val) in rows {
            let base = m_offset + row * d;
            for (o, w) in out.iter_mut().zip(&self.params[base..base + d]) {
                *o += val * w;
            }
        }
        out
    }

    fn trace(&self, x: &SparseVector, y: &SparseVector) -> Trace {
        let k_n = self.patches.len();
        let mut xs = Vec::with_capacity(k_n);
        let mut ys = Vec::with_capacity(k_n);
        let mut us = Vec::with_capacity(k_n);
        let mut vs = Vec::with_capacity(k_n);
        let mut local = Vec::with_capacity(k_n);
        for (patch, pl) in self.patches.iter().zip(&self.patch_layout) {
            let xr = Self::restrict(&patch.x_words, x);
            let yr = Self::restrict(&patch.y_words, y);
            let u = self.image(pl.lx, &xr);
            let v = self.image(pl.ly, &yr);
            let z = crate::math::dot(&u, &v) + self.params[pl.bias];
            local.push(sigmoid(z));
            xs.push(xr);
            ys.push(yr);
            us.push(u);
            vs.push(v);
        }
        let mut acts = vec![local];
        let last = self.layer_layout.len() - 1;
        for (l, ll) in self.layer_layout.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut out = Vec::with_capacity(ll.outputs);
            for o in 0..ll.outputs {
                let row = &self.params[ll.weights + o * ll.inputs..ll.weights + (o + 1) * ll.inputs];
                let pre = crate::math::dot(row, input) + self.params[ll.bias + o];
                out.push(if l == last { pre } else { sigmoid(pre) });
            }
            acts.push(out);
        }
        let score = acts.last().unwrap()[0];
        Trace {
            xs,
            ys,
            us,
            vs,
            acts,
            score,
        }
    }

    /// Local score `a⁽ᵏ⁾ = σ(x⁽ᵏ⁾ᵀ L_x L_yᵀ y⁽ᵏ⁾ + b⁽ᵏ⁾)` of patch `k`.
    pub fn local_score(&self, k: usize, x: &SparseVector, y: &SparseVector) -> f64 {
        let patch = &self.patches[k];
        let pl = &self.patch_layout[k];
        let u = self.image(pl.lx, &Self::restrict(&patch.x_words, x));
        let v = self.image(pl.ly, &Self::restrict(&patch.y_words, y));
        sigmoid(crate::math::dot(&u, &v) + self.params[pl.bias])
    }

    /// All `K` local scores.
    pub fn local_scores(&self, x: &SparseVector, y: &SparseVector) -> Vec<f64> {
        (0..self.patches.len()).map(|k| self.local_score(k, x, y)).collect()
    }

    /// Matching score `s(x, y)`.
    pub fn forward(&self, x: &SparseVector, y: &SparseVector) -> f64 {
        self.trace(x, y).score
    }

    /// Adds `scale · ∇s(x, y)` to `grad`.
    pub fn accumulate_score_gradient(&self, x: &SparseVector, y: &SparseVector, scale: f64, grad: &mut [f64]) {
        let t = self.trace(x, y);
        let n_layers = self.layer_layout.len();
        // Output layer is linear.
        let mut delta = vec![scale];
        for l in (0..n_layers).rev() {
            let ll = &self.layer_layout[l];
            let input = &t.acts[l];
            for o in 0..ll.outputs {
                let d = delta[o];
                grad[ll.bias + o] += d;
                let base = ll.weights + o * ll.inputs;
                for (g, &a) in grad[base..base + ll.inputs].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            let mut below = vec![0.0; ll.inputs];
            for o in 0..ll.outputs {
                let base = ll.weights + o * ll.inputs;
                for (b, w) in below.iter_mut().zip(&self.params[base..base + ll.inputs]) {
                    *b += delta[o] * w;
                }
            }
            // Every input to this layer went through a sigmoid (hidden units
            // or local matchers).
            for (b, &a) in below.iter_mut().zip(input) {
                *b *= a * (1.0 - a);
            }
            delta = below;
        }
        let d = self.patch_dim;
        for (k, pl) in self.patch_layout.iter().enumerate() {
            let dz = delta[k];
            if dz == 0.0 {
                continue;
            }
            grad[pl.bias] += dz;
            for &(row, val) in &t.xs[k] {
                let base = pl.lx + row * d;
                for (g, &v) in grad[base..base + d].iter_mut().zip(&t.vs[k]) {
                    *g += dz * val * v;
                }
            }
            for &(row, val) in &t.ys[k] {
                let base = pl.ly + row * d;
                for (g, &u) in grad[base..base + d].iter_mut().zip(&t.us[k]) {
                    *g += dz * val * u;
                }
            }
        }
    }

    /// Hinge error `max(0, m + s(x, y⁻) − s(x, y⁺))` of one triple.
    pub fn hinge(&self, t: &PreferenceTriple, margin: f64) -> f64 {
        (margin + self.forward(&t.x, &t.y_minus) - self.forward(&t.x, &t.y_plus)).max(0.0)
    }

    /// Adds `scale · ∇ hinge` to `grad`; returns the hinge value.
    pub fn accumulate_hinge_gradient(&self, t: &PreferenceTriple, margin: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let e = self.hinge(t, margin);
        if e > 0.0 {
            self.accumulate_score_gradient(&t.x, &t.y_minus, scale, grad);
            self.accumulate_score_gradient(&t.x, &t.y_plus, -scale, grad);
        }
        e
    }

    pub fn l2_penalty(&self) -> f64 {
        self.params
            .iter()
            .zip(&self.regularized)
            .filter(|(_, &r)| r)
            .map(|(w, _)| w * w)
            .sum()
    }

    /// Summed hinge error plus `λ‖W‖²`.
    pub fn objective(&self, triples: &[PreferenceTriple], cfg: &DeepMatchTrainConfig) -> f64 {
        let hinge: f64 = triples.iter().map(|t| self.hinge(t, cfg.margin)).sum();
        hinge + cfg.l2 * self.l2_penalty()
    }

    /// Mini-batch estimate of the objective's gradient when the full
    /// training set has `total` triples: the batch hinge gradient scaled
    /// by `total / |batch|`, plus weight decay.
    pub fn batch_gradient(&self, batch: &[&PreferenceTriple], total: usize, cfg: &DeepMatchTrainConfig) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        if !batch.is_empty() {
            let scale = total as f64 / batch.len() as f64;
            for t in batch {
                self.accumulate_hinge_gradient(t, cfg.margin, scale, &mut grad);
            }
        }
        for ((g, p), &r) in grad.iter_mut().zip(&self.params).zip(&self.regularized) {
            if r {
                *g += 2.0 * cfg.l2 * p;
            }
        }
        grad
    }

    /// One plain gradient step; see [`DeepMatchModel::batch_gradient`].
    pub fn step(&mut self, batch: &[&PreferenceTriple], total: usize, cfg: &DeepMatchTrainConfig) {
        let grad = self.batch_gradient(batch, total, cfg);
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let layers: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        writeln!(
            out,
            "{MAGIC} K={} d_k={} layers={} seed={} params={} tag={}",
            self.patches.len(),
            self.patch_dim,
            layers.join(","),
            self.seed,
            self.params.len(),
            self.vocab_tag
        )?;
        let join = |ids: &[u32]| ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        for p in &self.patches {
            writeln!(out, "{}\t{}\t{}", p.k, join(&p.x_words), join(&p.y_words))?;
        }
        for x in &self.params {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let fields: HashMap<&str, &str> = header_fields(header.trim_end(), MAGIC, "deep match model")?
            .into_iter()
            .collect();
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::format("deep match model", format!("missing `{k}`")))
        };
        let bad = |k: &str| Error::format("deep match model", format!("bad `{k}`"));
        let k_n: usize = get("K")?.parse().map_err(|_| bad("K"))?;
        let patch_dim: usize = get("d_k")?.parse().map_err(|_| bad("d_k"))?;
        let layer_sizes: Vec<usize> = get("layers")?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad("layers")))
            .collect::<Result<_>>()?;
        let seed: u64 = get("seed")?.parse().map_err(|_| bad("seed"))?;
        let n_params: usize = get("params")?.parse().map_err(|_| bad("params"))?;
        let tag = get("tag")?.to_string();
        let mut patches = Vec::with_capacity(k_n);
        for _ in 0..k_n {
            let mut line = String::new();
            input.read_line(&mut line)?;
            let mut parts = line.trim_end_matches('\n').split('\t');
            let ids = |s: Option<&str>| -> Result<Vec<u32>> {
                s.unwrap_or_default()
                    .split(' ')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse().map_err(|_| bad("patch")))
                    .collect()
            };
            let k: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("patch"))?;
            let x_words = ids(parts.next())?;
            let y_words = ids(parts.next())?;
            patches.push(TopicPatch { k, x_words, y_words });
        }
        if layer_sizes.first() != Some(&k_n) || layer_sizes.last() != Some(&1) {
            return Err(bad("layers"));
        }
        let (patch_layout, layer_layout, regularized) = Self::layouts(&patches, patch_dim, &layer_sizes);
        if regularized.len() != n_params {
            return Err(bad("params"));
        }
        let params = read_f64s(&mut input, n_params)?;
        Ok(DeepMatchModel {
            patches,
            patch_dim,
            layer_sizes,
            params,
            regularized,
            patch_layout,
            layer_layout,
            seed,
            vocab_tag: tag,
        })
    }
}

/// `x` matched with `y_plus` better than with `y_minus`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceTriple {
    pub x: SparseVector,
    pub y_plus: SparseVector,
    pub y_minus: SparseVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepMatchTrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for DeepMatchTrainConfig {
    fn default() -> Self {
        DeepMatchTrainConfig {
            margin: 2.0,
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 32,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Mini-batch AdaGrad on the large-margin ranking objective. The per-weight
/// step sizes matter here: at the small initial weights the bilinear
/// matchers have gradients several orders below the upper layers'.
pub fn train_deepmatch(
    mut model: DeepMatchModel,
    triples: &[PreferenceTriple],
    cfg: &DeepMatchTrainConfig,
) -> Result<DeepMatchModel> {
    if triples.is_empty() {
        return Err(Error::InvalidInput("no preference triples for deep match".into()));
    }
    if !(cfg.margin > 0.0) || cfg.batch_size == 0 {
        return Err(Error::Config("margin and batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut accum = vec![0.0; model.params.len()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreferenceTriple> = chunk.iter().map(|&i| &triples[i]).collect();
            let grad = model.batch_gradient(&batch, triples.len(), cfg);
            for ((p, g), a) in model.params.iter_mut().zip(&grad).zip(&mut accum) {
                *a += g * g;
                if *a > 0.0 {
                    *p -= cfg.learning_rate * g / a.sqrt();
                }
            }
        }
    }
    Ok(model)
}

/// Largest relative error between the analytic hinge gradient and central
/// finite differences over every parameter. Relative error is
/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(model: &DeepMatchModel, triple: &PreferenceTriple, margin: f64, eps: f64) -> f64 {
    let mut analytic = vec![0.0; model.params.len()];
    model.accumulate_hinge_gradient(triple, margin, 1.0, &mut analytic);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + eps;
        let up = probe.hinge(triple, margin);
        probe.params[i] = orig - eps;
        let down = probe.hinge(triple, margin);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// Training triples from the repository itself: each post with its own
/// comment as the better response and a sampled comment of another post as
/// the worse one.
pub fn repository_triples(repo: &Repository, vocab: &Vocabulary, per_pair: usize, seed: u64) -> Vec<PreferenceTriple> {
    let vectors: Vec<(u64, SparseVector, SparseVector)> = repo
        .iter()
        .map(|p| {
            (
                p.post_id,
                crate::latent::match_vector(&p.post, vocab),
                crate::latent::match_vector(&p.comment, vocab),
            )
        })
        .collect();
    let n = vectors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    for (post_id, x, y) in &vectors {
        if x.is_empty() || y.is_empty() {
            continue;
        }
        for _ in 0..per_pair {
            // A few retries to avoid sampling a comment of the same post.
            let mut pick = rng.gen_range(0..n);
            for _ in 0..8 {
                if vectors[pick].0 != *post_id && !vectors[pick].2.is_empty() {
                    break;
                }
                pick = rng.gen_range(0..n);
            }
            if vectors[pick].0 == *post_id || vectors[pick].2 == *y {
                continue;
            }
            out.push(PreferenceTriple {
                x: x.clone(),
                y_plus: y.clone(),
                y_minus: vectors[pick].2.clone(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(e: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_entries(e.iter().copied())
    }

    fn one_patch_model(hidden: Vec<usize>) -> DeepMatchModel {
        let patches = vec![TopicPatch {
            k: 0,
            x_words: vec![0],
            y_words: vec![1],
        }];
        DeepMatchModel::new(
            patches,
            &DeepMatchConfig {
                patch_dim: 1,
                hidden,
                seed: 1,
            },
            "t",
        )
        .unwrap()
    }

    #[test]
    fn local_score_without_patch_words_is_half() {
        let mut m = one_patch_model(vec![]);
        let b = m.patch_layout[0].bias;
        m.params[b] = 0.0;
        assert_eq!(m.local_score(0, &sv(&[(5, 1.0)]), &sv(&[(1, 1.0)])), 0.5);
    }

    #[test]
    fn scalar_local_score() {
        let mut m = one_patch_model(vec![]);
        let pl = m.patch_layout[0].clone();
        m.params[pl.lx] = 1.0;
        m.params[pl.ly] = 1.0;
        m.params[pl.bias] = 0.0;
        let a = m.local_score(0, &sv(&[(0, 2.0)]), &sv(&[(1, 3.0)]));
        assert!((a - 1.0 / (1.0 + (-6f64).exp())).abs() < 1e-15);
        assert!((a - 0.99753).abs() < 1e-5);
    }

    #[test]
    fn identity_upper_network_passes_local_score() {
        let mut m = one_patch_model(vec![]);
        let ll = m.layer_layout[0].clone();
        m.params[ll.weights] = 1.0;
        m.params[ll.bias] = 0.0;
        let (x, y) = (sv(&[(0, 0.7)]), sv(&[(1, -0.2)]));
        assert_eq!(m.forward(&x, &y), m.local_score(0, &x, &y));
    }

    #[test]
    fn inactive_hinge_only_decays_weights() {
        let m = one_patch_model(vec![2]);
        let x = sv(&[(0, 1.0)]);
        let t = PreferenceTriple {
            x: x.clone(),
            y_plus: sv(&[(1, 1.0)]),
            y_minus: sv(&[(1, 0.5)]),
        };
        // A negative margin can never be violated by a finite score gap of
        // less than |margin|.
        let cfg = DeepMatchTrainConfig {
            margin: -1e6,
            learning_rate: 0.1,
            l2: 0.01,
            ..Default::default()
        };
        let mut grad = vec![0.0; m.params.len()];
        assert_eq!(m.accumulate_hinge_gradient(&t, cfg.margin, 1.0, &mut grad), 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        let mut stepped = m.clone();
        stepped.step(&[&t], 1, &cfg);
        for ((a, b), &r) in stepped.params.iter().zip(&m.params).zip(&m.regularized) {
            let expected = if r { b * (1.0 - 2.0 * 0.1 * 0.01) } else { *b };
            assert!((a - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn file_round_trip() {
        let patches = vec![
            TopicPatch {
                k: 0,
                x_words: vec![0, 2],
                y_words: vec![1],
            },
            TopicPatch {
                k: 1,
                x_words: vec![3],
                y_words: vec![1, 4, 5],
            },
        ];
        let m = DeepMatchModel::new(patches, &DeepMatchConfig::default(), "abc").unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(DeepMatchModel::read_from(buf.as_slice()).unwrap(), m);
    }
}

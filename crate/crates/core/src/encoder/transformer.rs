//! Small pre-norm transformer encoder with explicit forward and backward passes.
//!
//! Layout per block:
//!
//! ```text
//! x1 = x  + Wo · MHA(LN1(x))
//! x2 = x1 + W2 · gelu(W1 · LN2(x1))
//! ```
//!
//! followed by a final layer norm. Positions use fixed sinusoids. Biases are
//! stored as `1 × n` matrices so every parameter is an `Array2<f64>`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::tokenizer::PieceSequence;
use super::EncoderError;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Architecture hyperparameters without the vocabulary size, which is only
/// known once a tokenizer has been trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        let t = EncoderConfig::toy(1);
        EncoderShape {
            d_model: t.d_model,
            heads: t.heads,
            ffn: t.ffn,
            layers: t.layers,
            max_len: t.max_len,
        }
    }
}

impl EncoderShape {
    pub fn with_vocab(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d_model: self.d_model,
            heads: self.heads,
            ffn: self.ffn,
            layers: self.layers,
            max_len: self.max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl EncoderConfig {
    /// Desk-scale default: width 64, 4 heads, 2 blocks.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            d_model: 64,
            heads: 4,
            ffn: 128,
            layers: 2,
            max_len: 128,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(EncoderError::Config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.vocab_size == 0 || self.ffn == 0 || self.max_len < 2 {
            return Err(EncoderError::Config("vocab, ffn and max_len must be positive".into()));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        LayerNorm {
            gamma: Array2::ones((1, d)),
            beta: Array2::zeros((1, d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub ln1: LayerNorm,
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln2: LayerNorm,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub embed: Array2<f64>,
    pub blocks: Vec<Block>,
    pub ln_f: LayerNorm,
}

pub(crate) fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

impl EncoderParams {
    /// Random initialization, deterministic in `seed`.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let f = config.ffn;
        let proj = 1.0 / (d as f64).sqrt();
        let resid = proj / (2.0 * config.layers as f64).sqrt();
        let embed = random_matrix(&mut rng, config.vocab_size, d, 0.5);
        let blocks = (0..config.layers)
            .map(|_| Block {
                ln1: LayerNorm::new(d),
                wq: random_matrix(&mut rng, d, d, proj),
                bq: Array2::zeros((1, d)),
                wk: random_matrix(&mut rng, d, d, proj),
                bk: Array2::zeros((1, d)),
                wv: random_matrix(&mut rng, d, d, proj),
                bv: Array2::zeros((1, d)),
                wo: random_matrix(&mut rng, d, d, resid),
                bo: Array2::zeros((1, d)),
                ln2: LayerNorm::new(d),
                w1: random_matrix(&mut rng, d, f, proj),
                b1: Array2::zeros((1, f)),
                w2: random_matrix(&mut rng, f, d, resid / ((f as f64 / d as f64).sqrt())),
                b2: Array2::zeros((1, d)),
            })
            .collect();
        Ok(EncoderParams {
            ln_f: LayerNorm::new(d),
            config,
            embed,
            blocks,
        })
    }
}

impl Parameters for LayerNorm {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

impl Parameters for Block {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = self
            .ln1
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("ln1.{n}"), t))
            .collect();
        out.extend([
            ("wq".into(), &self.wq),
            ("bq".into(), &self.bq),
            ("wk".into(), &self.wk),
            ("bk".into(), &self.bk),
            ("wv".into(), &self.wv),
            ("bv".into(), &self.bv),
            ("wo".into(), &self.wo),
            ("bo".into(), &self.bo),
        ]);
        out.extend(self.ln2.named_tensors().into_iter().map(|(n, t)| (format!("ln2.{n}"), t)));
        out.extend([
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
        ]);
        out
    }
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = self.ln1.tensors_mut();
        out.extend([
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
        ]);
        out.extend(self.ln2.tensors_mut());
        out.extend([&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]);
        out
    }
}

impl Parameters for EncoderParams {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![("embed".to_string(), &self.embed)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(
                b.named_tensors()
                    .into_iter()
                    .map(|(n, t)| (format!("block{i}.{n}"), t)),
            );
        }
        out.extend(
            self.ln_f
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (format!("ln_f.{n}"), t)),
        );
        out
    }
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.embed];
        for b in &mut self.blocks {
            out.extend(b.tensors_mut());
        }
        out.extend(self.ln_f.tensors_mut());
        out
    }
}

/// One vector per piece plus the pooled (`<CLS>` position) vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub vectors: Array2<f64>,
    pub pooled: Array1<f64>,
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct BlockCache {
    h1: Array2<f64>,
    ln1: LnCache,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    h2: Array2<f64>,
    ln2: LnCache,
    z: Array2<f64>,
    g: Array2<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    ids: Vec<u32>,
    blocks: Vec<BlockCache>,
    ln_f: LnCache,
}

fn sinusoid(pos: usize, i: usize, d: usize) -> f64 {
    let pair = (i / 2) as f64;
    let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
    if i.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rv = *r;
        row.mapv_inplace(|v| v * rv);
    }
    let y = &xhat * &ln.gamma + &ln.beta;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    ln: &LayerNorm,
    grad: &mut LayerNorm,
) -> Array2<f64> {
    grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * &ln.gamma;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
        let dh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_dh = dh.sum() / d;
        let mean_dh_xh = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        let r = cache.rstd[i];
        for j in 0..row.len() {
            row[j] = r * (dh[j] - mean_dh - xh[j] * mean_dh_xh);
        }
    }
    dx
}

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh())
}

fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + 0.044715 * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn affine(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn accumulate_affine(
    x: &Array2<f64>,
    dy: &Array2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dy);
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&w.t())
}

impl EncoderParams {
    fn check_ids(&self, ids: &[u32]) -> Result<(), EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::EmptySequence);
        }
        if ids.len() > self.config.max_len {
            return Err(EncoderError::TooLong {
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(EncoderError::UnknownPiece(bad));
        }
        Ok(())
    }

    /// Inference-mode encoding.
    pub fn encode(&self, seq: &PieceSequence) -> Result<EncoderOutput, EncoderError> {
        let (vectors, _) = self.forward(&seq.ids)?;
        let pooled = vectors.row(0).to_owned();
        Ok(EncoderOutput { vectors, pooled })
    }

    /// Forward pass keeping activations for [`EncoderParams::backward`].
    pub fn forward(&self, ids: &[u32]) -> Result<(Array2<f64>, ForwardCache), EncoderError> {
        self.check_ids(ids)?;
        let cfg = &self.config;
        let d = cfg.d_model;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let n = ids.len();

        let mut x = Array2::from_shape_fn((n, d), |(p, i)| {
            self.embed[[ids[p] as usize, i]] + sinusoid(p, i, d)
        });
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (h1, ln1) = layer_norm(&x, &b.ln1);
            let q = affine(&h1.view(), &b.wq, &b.bq);
            let k = affine(&h1.view(), &b.wk, &b.bk);
            let v = affine(&h1.view(), &b.wv, &b.bv);
            let mut attn = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut scores);
                attn.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            x = &x + &affine(&attn.view(), &b.wo, &b.bo);
            let (h2, ln2) = layer_norm(&x, &b.ln2);
            let z = affine(&h2.view(), &b.w1, &b.b1);
            let g = z.mapv(gelu);
            x = &x + &affine(&g.view(), &b.w2, &b.b2);
            caches.push(BlockCache {
                h1,
                ln1,
                q,
                k,
                v,
                probs,
                attn,
                h2,
                ln2,
                z,
                g,
            });
        }
        let (y, ln_f) = layer_norm(&x, &self.ln_f);
        Ok((
            y,
            ForwardCache {
                ids: ids.to_vec(),
                blocks: caches,
                ln_f,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` given `d_out = ∂loss/∂vectors`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>, grad: &mut EncoderParams) {
        let cfg = &self.config;
        let d = cfg.d_model;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let n = cache.ids.len();

        let mut dx = layer_norm_backward(d_out, &cache.ln_f, &self.ln_f, &mut grad.ln_f);
        for (bi, b) in self.blocks.iter().enumerate().rev() {
            let c = &cache.blocks[bi];
            let gb = &mut grad.blocks[bi];

            // feed-forward sublayer
            let dg = accumulate_affine(&c.g, &dx, &b.w2, &mut gb.w2, &mut gb.b2);
            let dz = &dg * &c.z.mapv(gelu_grad);
            let dh2 = accumulate_affine(&c.h2, &dz, &b.w1, &mut gb.w1, &mut gb.b1);
            dx += &layer_norm_backward(&dh2, &c.ln2, &b.ln2, &mut gb.ln2);

            // attention sublayer
            let dattn = accumulate_affine(&c.attn, &dx, &b.wo, &mut gb.wo, &mut gb.bo);
            let mut dq = Array2::zeros((n, d));
            let mut dk = Array2::zeros((n, d));
            let mut dv = Array2::zeros((n, d));
            for h in 0..cfg.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let p = &c.probs[h];
                let dout = dattn.slice(cols);
                let dp = dout.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&p.t().dot(&dout));
                let mut ds = dp;
                for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                    let dot: f64 = drow.iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
                    for (dv, &pv) in drow.iter_mut().zip(prow.iter()) {
                        *dv = pv * (*dv - dot) * scale;
                    }
                }
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            let mut dh1 = accumulate_affine(&c.h1, &dq, &b.wq, &mut gb.wq, &mut gb.bq);
            dh1 += &accumulate_affine(&c.h1, &dk, &b.wk, &mut gb.wk, &mut gb.bk);
            dh1 += &accumulate_affine(&c.h1, &dv, &b.wv, &mut gb.wv, &mut gb.bv);
            dx += &layer_norm_backward(&dh1, &c.ln1, &b.ln1, &mut gb.ln1);
        }
        for (p, &id) in cache.ids.iter().enumerate() {
            let mut row = grad.embed.row_mut(id as usize);
            row += &dx.row(p);
        }
    }
}

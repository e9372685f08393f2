//! GRU encoder-decoder with optional dot-product attention.
//!
//! All parameters live in one flat `Vec<f64>`; [`Layout`] records where each
//! tensor starts. Matrices are row-major. The order is:
//!
//! 1. embedding `V x E` (shared by encoder and decoder)
//! 2. per encoder layer: `w_ih (3H x in)`, `w_hh (3H x H)`, `b_ih (3H)`, `b_hh (3H)`
//! 3. per decoder layer: same as the encoder
//! 4. output projection `V x D` then output bias `V`, where `D = 2H` with
//!    attention (`[h; context]`) and `D = H` without.
//!
//! Gate rows inside the GRU matrices are ordered reset, update, candidate:
//!
//! ```text
//! r = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DialogPair;
use crate::{Error, Result, BOS, EOS, PAD, SEP, UNK};

use super::GeneratorOutput;

pub const RESERVED: [&str; 5] = [PAD, BOS, EOS, UNK, SEP];
const BOS_ID: usize = 1;
const EOS_ID: usize = 2;
const UNK_ID: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seq2SeqConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub attention: bool,
    /// Tokens rarer than this map to `<unk>`.
    pub min_count: u64,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            hidden_dim: 64,
            num_layers: 1,
            attention: true,
            min_count: 1,
        }
    }
}

impl Seq2SeqConfig {
    /// Three layers of 1024 units, the full-size architecture.
    pub fn full_scale() -> Self {
        Self {
            embedding_dim: 1024,
            hidden_dim: 1024,
            num_layers: 3,
            attention: true,
            min_count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(Error::Config("seq2seq dimensions and layer count must be >= 1".into()));
        }
        if self.min_count == 0 {
            return Err(Error::Config("seq2seq min_count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.01,
            batch_size: 10,
            clip_norm: 5.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// 1 = greedy
    pub beam_width: usize,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 1,
            max_len: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Index 0 is the loss at initialization; index `e` is the mean
    /// per-token training loss during epoch `e`.
    pub loss_history: Vec<f64>,
    /// Teacher-forced per-token cross-entropy after the last epoch.
    pub final_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GruOffsets {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    input: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    emb: usize,
    enc: Vec<GruOffsets>,
    dec: Vec<GruOffsets>,
    out_w: usize,
    out_b: usize,
    feature_dim: usize,
    total: usize,
}

impl Layout {
    fn new(config: &Seq2SeqConfig, vocab: usize) -> Self {
        let (e, h) = (config.embedding_dim, config.hidden_dim);
        let mut at = 0;
        let mut take = |n: usize| {
            at += n;
            at - n
        };
        let emb = take(vocab * e);
        let mut gru_stack = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut layers = Vec::with_capacity(config.num_layers);
            for l in 0..config.num_layers {
                let input = if l == 0 { e } else { h };
                layers.push(GruOffsets {
                    w_ih: take(3 * h * input),
                    w_hh: take(3 * h * h),
                    b_ih: take(3 * h),
                    b_hh: take(3 * h),
                    input,
                });
            }
            gru_stack.push(layers);
        }
        let dec = gru_stack.pop().expect("two stacks");
        let enc = gru_stack.pop().expect("two stacks");
        let feature_dim = if config.attention { 2 * h } else { h };
        let out_w = take(vocab * feature_dim);
        let out_b = take(vocab);
        let total = out_b + vocab;
        Self {
            emb,
            enc,
            dec,
            out_w,
            out_b,
            feature_dim,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Range of the output bias vector.
    pub fn output_bias(&self) -> std::ops::Range<usize> {
        self.out_b..self.total
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Seq2SeqParts", into = "Seq2SeqParts")]
pub struct Seq2SeqModel {
    config: Seq2SeqConfig,
    vocab: Vec<String>,
    params: Vec<f64>,
    trained: bool,
    index: BTreeMap<String, usize>,
    layout: Option<Layout>,
}

/// Persisted fields; `params` follows the module-level layout.
#[derive(Serialize, Deserialize)]
struct Seq2SeqParts {
    config: Seq2SeqConfig,
    vocab: Vec<String>,
    trained: bool,
    params: Vec<f64>,
}

impl TryFrom<Seq2SeqParts> for Seq2SeqModel {
    type Error = Error;

    fn try_from(p: Seq2SeqParts) -> Result<Self> {
        p.config.validate()?;
        let mut model = Self {
            config: p.config,
            vocab: p.vocab,
            params: p.params,
            trained: p.trained,
            index: BTreeMap::new(),
            layout: None,
        };
        model.rebuild();
        if model.params.len() != model.layout().total {
            return Err(Error::Config(format!(
                "seq2seq parameter count {} does not match layout {}",
                model.params.len(),
                model.layout().total
            )));
        }
        if model.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("seq2seq parameters must be finite".into()));
        }
        Ok(model)
    }
}

impl From<Seq2SeqModel> for Seq2SeqParts {
    fn from(m: Seq2SeqModel) -> Self {
        Self {
            config: m.config,
            vocab: m.vocab,
            trained: m.trained,
            params: m.params,
        }
    }
}

impl PartialEq for Seq2SeqModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.vocab == other.vocab
            && self.params == other.params
            && self.trained == other.trained
    }
}

// ---------------------------------------------------------------------------
// dense helpers

/// out = W x + b, W is rows x cols
fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = b[..rows].to_vec();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    out
}

/// dx += Wᵀ dy
fn add_transposed(w: &[f64], dy: &[f64], dx: &mut [f64], cols: usize) {
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (d, &a) in dx.iter_mut().zip(row) {
            *d += g * a;
        }
    }
}

/// dW += dy ⊗ x
fn add_outer(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, &a) in row.iter_mut().zip(x) {
            *d += g * a;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigm(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

// ---------------------------------------------------------------------------
// GRU cell

struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// W_hn h + b_hn
    hn: Vec<f64>,
    h: Vec<f64>,
}

fn gru_forward(p: &[f64], off: &GruOffsets, hidden: usize, x: &[f64], h_prev: &[f64]) -> GruCache {
    let gi = affine(&p[off.w_ih..], &p[off.b_ih..], x, 3 * hidden, off.input);
    let gh = affine(&p[off.w_hh..], &p[off.b_hh..], h_prev, 3 * hidden, hidden);
    let mut r = vec![0.0; hidden];
    let mut z = vec![0.0; hidden];
    let mut n = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for i in 0..hidden {
        r[i] = sigm(gi[i] + gh[i]);
        z[i] = sigm(gi[hidden + i] + gh[hidden + i]);
        n[i] = (gi[2 * hidden + i] + r[i] * gh[2 * hidden + i]).tanh();
        h[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
    }
    GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        n,
        hn: gh[2 * hidden..].to_vec(),
        h,
    }
}

/// Accumulates parameter gradients into `g`; returns (dx, dh_prev).
fn gru_backward(
    p: &[f64],
    g: &mut [f64],
    off: &GruOffsets,
    hidden: usize,
    c: &GruCache,
    dh: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut d_gi = vec![0.0; 3 * hidden];
    let mut d_gh = vec![0.0; 3 * hidden];
    let mut dh_prev = vec![0.0; hidden];
    for i in 0..hidden {
        let dn = dh[i] * (1.0 - c.z[i]);
        let dz = dh[i] * (c.h_prev[i] - c.n[i]);
        dh_prev[i] = dh[i] * c.z[i];
        let dn_pre = dn * (1.0 - c.n[i] * c.n[i]);
        let dr = dn_pre * c.hn[i];
        let dr_pre = dr * c.r[i] * (1.0 - c.r[i]);
        let dz_pre = dz * c.z[i] * (1.0 - c.z[i]);
        d_gi[i] = dr_pre;
        d_gi[hidden + i] = dz_pre;
        d_gi[2 * hidden + i] = dn_pre;
        d_gh[i] = dr_pre;
        d_gh[hidden + i] = dz_pre;
        d_gh[2 * hidden + i] = dn_pre * c.r[i];
    }
    let rows = 3 * hidden;
    add_outer(&mut g[off.w_ih..off.w_ih + rows * off.input], &d_gi, &c.x);
    add_into(&mut g[off.b_ih..off.b_ih + rows], &d_gi);
    add_outer(&mut g[off.w_hh..off.w_hh + rows * hidden], &d_gh, &c.h_prev);
    add_into(&mut g[off.b_hh..off.b_hh + rows], &d_gh);
    let mut dx = vec![0.0; off.input];
    add_transposed(&p[off.w_ih..], &d_gi, &mut dx, off.input);
    add_transposed(&p[off.w_hh..], &d_gh, &mut dh_prev, hidden);
    (dx, dh_prev)
}

// ---------------------------------------------------------------------------

struct StepOutput {
    layers: Vec<GruCache>,
    attn: Vec<f64>,
    feature: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<usize>,
    log_prob: f64,
    steps: usize,
    state: Vec<Vec<f64>>,
}

impl Seq2SeqModel {
    /// A freshly initialized (untrained) model; parameters are uniform in
    /// `±1/sqrt(hidden_dim)`.
    pub fn new(config: Seq2SeqConfig, vocab: Vec<String>, seed: u64) -> Result<Self> {
        config.validate()?;
        for (i, r) in RESERVED.iter().enumerate() {
            if vocab.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Config(format!(
                    "vocabulary must start with the reserved tokens {RESERVED:?}"
                )));
            }
        }
        let layout = Layout::new(&config, vocab.len());
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..layout.total).map(|_| rng.random_range(-bound..bound)).collect();
        let mut model = Self {
            config,
            vocab,
            params,
            trained: false,
            index: BTreeMap::new(),
            layout: None,
        };
        model.rebuild();
        Ok(model)
    }

    fn rebuild(&mut self) {
        self.index = self.vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        self.layout = Some(Layout::new(&self.config, self.vocab.len()));
    }

    fn layout(&self) -> &Layout {
        self.layout.as_ref().expect("layout is built on construction and load")
    }

    pub fn layout_info(&self) -> Layout {
        self.layout().clone()
    }

    pub fn config(&self) -> &Seq2SeqConfig {
        &self.config
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.token_id(t.as_ref())).collect()
    }

    pub fn encode_pair(&self, pair: &DialogPair) -> (Vec<usize>, Vec<usize>) {
        (self.encode(&pair.post), self.encode(&pair.response))
    }

    fn embed(&self, id: usize) -> &[f64] {
        let e = self.config.embedding_dim;
        let start = self.layout().emb + id * e;
        &self.params[start..start + e]
    }

    fn encode_source(&self, src: &[usize]) -> (Vec<Vec<GruCache>>, Vec<Vec<f64>>) {
        let h = self.config.hidden_dim;
        let layout = self.layout();
        let mut state = vec![vec![0.0; h]; self.config.num_layers];
        let mut caches = Vec::with_capacity(src.len());
        for &id in src {
            let mut x = self.embed(id).to_vec();
            let mut step = Vec::with_capacity(self.config.num_layers);
            for (l, off) in layout.enc.iter().enumerate() {
                let c = gru_forward(&self.params, off, h, &x, &state[l]);
                x = c.h.clone();
                state[l] = c.h.clone();
                step.push(c);
            }
            caches.push(step);
        }
        (caches, state)
    }

    fn decoder_step(&self, enc_out: &[&[f64]], state: &[Vec<f64>], prev: usize) -> StepOutput {
        let h = self.config.hidden_dim;
        let layout = self.layout();
        let mut x = self.embed(prev).to_vec();
        let mut layers = Vec::with_capacity(self.config.num_layers);
        for (l, off) in layout.dec.iter().enumerate() {
            let c = gru_forward(&self.params, off, h, &x, &state[l]);
            x = c.h.clone();
            layers.push(c);
        }
        let top = x;
        let (attn, feature) = if self.config.attention {
            let scores: Vec<f64> = enc_out.iter().map(|e| dot(e, &top)).collect();
            let attn = if scores.is_empty() { scores } else { softmax(&scores) };
            let mut ctx = vec![0.0; h];
            for (a, e) in attn.iter().zip(enc_out) {
                for (c, v) in ctx.iter_mut().zip(e.iter()) {
                    *c += a * v;
                }
            }
            let mut feature = top;
            feature.extend(ctx);
            (attn, feature)
        } else {
            (Vec::new(), top)
        };
        let v = self.vocab.len();
        let logits = affine(
            &self.params[layout.out_w..],
            &self.params[layout.out_b..],
            &feature,
            v,
            layout.feature_dim,
        );
        StepOutput {
            layers,
            attn,
            feature,
            probs: softmax(&logits),
        }
    }

    /// Summed cross-entropy (nats) of `tgt + </s>` given `src`, with the
    /// gradient accumulated into `grad`. Returns (loss, predicted tokens).
    fn example_loss_grad(&self, src: &[usize], tgt: &[usize], grad: Option<&mut [f64]>) -> (f64, usize) {
        let h = self.config.hidden_dim;
        let layers = self.config.num_layers;
        let (enc_caches, enc_state) = self.encode_source(src);
        let enc_out: Vec<&[f64]> = enc_caches
            .iter()
            .map(|s| s.last().expect("at least one layer").h.as_slice())
            .collect();

        let inputs: Vec<usize> = std::iter::once(BOS_ID).chain(tgt.iter().copied()).collect();
        let targets: Vec<usize> = tgt.iter().copied().chain(std::iter::once(EOS_ID)).collect();

        let mut state = enc_state;
        let mut steps = Vec::with_capacity(targets.len());
        let mut loss = 0.0;
        for (&prev, &target) in inputs.iter().zip(&targets) {
            let out = self.decoder_step(&enc_out, &state, prev);
            loss -= out.probs[target].ln();
            for (l, c) in out.layers.iter().enumerate() {
                state[l] = c.h.clone();
            }
            steps.push(out);
        }
        let Some(g) = grad else {
            return (loss, targets.len());
        };

        let layout = self.layout();
        let v = self.vocab.len();
        let fd = layout.feature_dim;
        let mut d_enc_out = vec![vec![0.0; h]; enc_out.len()];
        let mut carry = vec![vec![0.0; h]; layers];

        for (t, out) in steps.iter().enumerate().rev() {
            let mut dlogits = out.probs.clone();
            dlogits[targets[t]] -= 1.0;
            add_outer(&mut g[layout.out_w..layout.out_w + v * fd], &dlogits, &out.feature);
            add_into(&mut g[layout.out_b..layout.out_b + v], &dlogits);
            let mut dfeature = vec![0.0; fd];
            add_transposed(&self.params[layout.out_w..], &dlogits, &mut dfeature, fd);

            let mut dh_top = dfeature[..h].to_vec();
            if self.config.attention && !enc_out.is_empty() {
                let top = &out.feature[..h];
                let dctx = &dfeature[h..];
                let da: Vec<f64> = enc_out.iter().map(|e| dot(dctx, e)).collect();
                let mean: f64 = out.attn.iter().zip(&da).map(|(a, d)| a * d).sum();
                for (j, e) in enc_out.iter().enumerate() {
                    let a = out.attn[j];
                    let ds = a * (da[j] - mean);
                    for i in 0..h {
                        d_enc_out[j][i] += a * dctx[i] + ds * top[i];
                        dh_top[i] += ds * e[i];
                    }
                }
            }

            let mut dh = dh_top;
            for l in (0..layers).rev() {
                add_into(&mut dh, &carry[l]);
                let (dx, dh_prev) = gru_backward(&self.params, g, &layout.dec[l], h, &out.layers[l], &dh);
                carry[l] = dh_prev;
                if l > 0 {
                    dh = dx;
                } else {
                    let e = self.config.embedding_dim;
                    let start = layout.emb + inputs[t] * e;
                    add_into(&mut g[start..start + e], &dx);
                }
            }
        }

        // the decoder's initial state is the encoder's final state
        for (t, step) in enc_caches.iter().enumerate().rev() {
            let mut dh = std::mem::take(&mut d_enc_out[t]);
            for l in (0..layers).rev() {
                add_into(&mut dh, &carry[l]);
                let (dx, dh_prev) = gru_backward(&self.params, g, &layout.enc[l], h, &step[l], &dh);
                carry[l] = dh_prev;
                if l > 0 {
                    dh = dx;
                } else {
                    let e = self.config.embedding_dim;
                    let start = layout.emb + src[t] * e;
                    add_into(&mut g[start..start + e], &dx);
                }
            }
        }
        (loss, targets.len())
    }

    /// Mean per-token cross-entropy over `examples` and its gradient.
    pub fn loss_and_gradient(&self, examples: &[(Vec<usize>, Vec<usize>)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut tokens = 0;
        for (src, tgt) in examples {
            let (l, n) = self.example_loss_grad(src, tgt, Some(&mut grad));
            loss += l;
            tokens += n;
        }
        let scale = 1.0 / tokens.max(1) as f64;
        for g in &mut grad {
            *g *= scale;
        }
        (loss * scale, grad)
    }

    /// Mean per-token cross-entropy without gradients.
    pub fn loss(&self, examples: &[(Vec<usize>, Vec<usize>)]) -> f64 {
        let (mut loss, mut tokens) = (0.0, 0);
        for (src, tgt) in examples {
            let (l, n) = self.example_loss_grad(src, tgt, None);
            loss += l;
            tokens += n;
        }
        loss / tokens.max(1) as f64
    }

    /// Decodes a response. Beam width 1 is greedy decoding.
    pub fn generate<S: AsRef<str>>(&self, post: &[S], config: &DecodeConfig) -> Result<GeneratorOutput> {
        Ok(self.generate_traced(post, config)?.0)
    }

    /// Like [`generate`](Self::generate), also returning the output
    /// distribution of every decode step taken by the winning hypothesis
    /// (greedy) or by every expanded hypothesis (beam).
    pub fn generate_traced<S: AsRef<str>>(
        &self,
        post: &[S],
        config: &DecodeConfig,
    ) -> Result<(GeneratorOutput, Vec<Vec<f64>>)> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let src = self.encode(post);
        let (enc_caches, enc_state) = self.encode_source(&src);
        let enc_out: Vec<&[f64]> = enc_caches
            .iter()
            .map(|s| s.last().expect("at least one layer").h.as_slice())
            .collect();
        let width = config.beam_width.max(1);
        let mut dists = Vec::new();

        let mut active = vec![Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            steps: 0,
            state: enc_state,
        }];
        let mut finished: Vec<Hypothesis> = Vec::new();
        for _ in 0..config.max_len {
            // (log_prob, hypothesis, token)
            let mut expansions: Vec<(f64, usize, usize)> = Vec::new();
            let mut next_states = Vec::with_capacity(active.len());
            for (hi, hyp) in active.iter().enumerate() {
                let prev = hyp.tokens.last().copied().unwrap_or(BOS_ID);
                let out = self.decoder_step(&enc_out, &hyp.state, prev);
                for (w, &p) in out.probs.iter().enumerate() {
                    expansions.push((hyp.log_prob + p.ln(), hi, w));
                }
                next_states.push(out.layers.into_iter().map(|c| c.h).collect::<Vec<_>>());
                dists.push(out.probs);
            }
            expansions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut next = Vec::with_capacity(width);
            for &(log_prob, hi, w) in expansions.iter().take(width) {
                let parent = &active[hi];
                if w == EOS_ID {
                    finished.push(Hypothesis {
                        tokens: parent.tokens.clone(),
                        log_prob,
                        steps: parent.steps + 1,
                        state: Vec::new(),
                    });
                } else {
                    let mut tokens = parent.tokens.clone();
                    tokens.push(w);
                    next.push(Hypothesis {
                        tokens,
                        log_prob,
                        steps: parent.steps + 1,
                        state: next_states[hi].clone(),
                    });
                }
            }
            active = next;
            if finished.len() >= width || active.is_empty() {
                break;
            }
        }
        finished.extend(active);

        let best = finished
            .iter()
            .fold(None::<&Hypothesis>, |best, h| {
                let score = h.log_prob / h.steps.max(1) as f64;
                match best {
                    Some(b) if b.log_prob / b.steps.max(1) as f64 >= score => Some(b),
                    _ => Some(h),
                }
            })
            .expect("at least one hypothesis");
        let confidence = if best.steps == 0 {
            0.0
        } else {
            (best.log_prob / best.steps as f64).min(0.0)
        };
        let tokens = best.tokens.iter().map(|&id| self.vocab[id].clone()).collect();
        Ok((GeneratorOutput { tokens, confidence }, dists))
    }
}

/// Vocabulary for a training set: reserved tokens first, then every token
/// seen at least `min_count` times in sorted order.
pub fn build_vocab(pairs: &[DialogPair], min_count: u64) -> Vec<String> {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for p in pairs {
        for t in p.post.iter().chain(&p.response) {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut vocab: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    vocab.extend(
        freq.into_iter()
            .filter(|(t, n)| *n >= min_count && !RESERVED.contains(t))
            .map(|(t, _)| t.to_owned()),
    );
    vocab
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grad {
            *g *= s;
        }
    }
}

/// Teacher-forced training with Adam over shuffled mini-batches.
pub fn train_seq2seq(
    config: Seq2SeqConfig,
    pairs: &[DialogPair],
    train: &TrainConfig,
) -> Result<(Seq2SeqModel, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if train.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let vocab = build_vocab(pairs, config.min_count);
    let mut model = Seq2SeqModel::new(config, vocab, train.seed)?;
    let examples: Vec<(Vec<usize>, Vec<usize>)> = pairs.iter().map(|p| model.encode_pair(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed.wrapping_add(1));
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let initial = model.loss(&examples);
    if !initial.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            detail: format!("initial loss {initial}"),
        });
    }
    let mut loss_history = vec![initial];
    for epoch in 1..=train.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for batch in order.chunks(train.batch_size) {
            let batch: Vec<(Vec<usize>, Vec<usize>)> = batch.iter().map(|&i| examples[i].clone()).collect();
            let tokens: usize = batch.iter().map(|(_, t)| t.len() + 1).sum();
            let (loss, mut grad) = model.loss_and_gradient(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("batch loss {loss}"),
                });
            }
            clip(&mut grad, train.clip_norm);
            adam.step(&mut model.params, &grad, train.learning_rate);
            epoch_loss += loss * tokens as f64;
            epoch_tokens += tokens;
        }
        loss_history.push(epoch_loss / epoch_tokens as f64);
    }
    model.trained = true;
    let final_loss = model.loss(&examples);
    Ok((
        model,
        TrainReport {
            loss_history,
            final_loss,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(post: &str, response: &str) -> DialogPair {
        DialogPair {
            post: post.split_whitespace().map(str::to_owned).collect(),
            response: response.split_whitespace().map(str::to_owned).collect(),
            domain: "t".into(),
            context_depth: 1,
        }
    }

    fn micro(attention: bool, layers: usize) -> Seq2SeqModel {
        let pairs = [pair("a b c", "d e"), pair("c a", "e e f")];
        let cfg = Seq2SeqConfig {
            embedding_dim: 4,
            hidden_dim: 5,
            num_layers: layers,
            attention,
            min_count: 1,
        };
        Seq2SeqModel::new(cfg, build_vocab(&pairs, 1), 3).unwrap()
    }

    fn check_gradient(model: &mut Seq2SeqModel) {
        let ex = vec![(vec![5, 6, 7], vec![8, 9]), (vec![7], vec![9, 10, 8])];
        let (_, grad) = model.loss_and_gradient(&ex);
        let eps = 1e-5;
        for i in (0..model.params.len()).step_by(7) {
            let orig = model.params[i];
            model.params[i] = orig + eps;
            let up = model.loss(&ex);
            model.params[i] = orig - eps;
            let down = model.loss(&ex);
            model.params[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let denom = numeric.abs().max(grad[i].abs()).max(1e-8);
            assert!(
                (numeric - grad[i]).abs() / denom < 1e-4 || (numeric - grad[i]).abs() < 1e-9,
                "param {i}: numeric {numeric} analytic {}",
                grad[i]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradient(&mut micro(true, 1));
        check_gradient(&mut micro(false, 1));
        check_gradient(&mut micro(true, 2));
    }

    #[test]
    fn layout_covers_all_params() {
        let m = micro(true, 2);
        let l = m.layout();
        assert_eq!(l.total, m.params.len());
        assert_eq!(l.output_bias().len(), m.vocab.len());
        assert_eq!(l.feature_dim, 10);
    }

    #[test]
    fn untrained_model_refuses_to_generate() {
        let m = micro(true, 1);
        assert!(matches!(
            m.generate(&["a"], &DecodeConfig::default()),
            Err(Error::Untrained)
        ));
    }

    #[test]
    fn forced_end_token_gives_zero_confidence() {
        let mut m = micro(true, 1);
        let bias = m.layout().output_bias();
        m.params[bias.start + EOS_ID] = 1e4;
        m.trained = true;
        let out = m.generate(&["a", "b"], &DecodeConfig::default()).unwrap();
        assert!(out.tokens.is_empty());
        assert_eq!(out.confidence, 0.0);
    }

    #[test]
    fn forced_single_token_then_end() {
        let mut m = micro(false, 1);
        // "d" wins every step, so decoding runs to max_len
        let bias = m.layout().output_bias();
        let d = m.token_id("d");
        m.params[bias.start + d] = 1e4;
        m.trained = true;
        let out = m
            .generate(
                &["a"],
                &DecodeConfig {
                    beam_width: 1,
                    max_len: 3,
                },
            )
            .unwrap();
        assert_eq!(out.tokens, ["d", "d", "d"]);
        assert_eq!(out.confidence, 0.0);
    }

    #[test]
    fn beam_one_equals_greedy_and_softmax_normalized() {
        let mut m = micro(true, 1);
        m.trained = true;
        let greedy = m.generate_traced(&["a", "c"], &DecodeConfig::default()).unwrap();
        let beam = m
            .generate(
                &["a", "c"],
                &DecodeConfig {
                    beam_width: 1,
                    max_len: 30,
                },
            )
            .unwrap();
        assert_eq!(greedy.0, beam);
        for d in &greedy.1 {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let wide = m
            .generate(
                &["a", "c"],
                &DecodeConfig {
                    beam_width: 4,
                    max_len: 30,
                },
            )
            .unwrap();
        assert!(wide.confidence <= 0.0);
    }

    #[test]
    fn vocab_respects_min_count() {
        let pairs = [pair("a a b", "c")];
        let v = build_vocab(&pairs, 2);
        assert_eq!(v.len(), RESERVED.len() + 1);
        assert_eq!(v.last().unwrap(), "a");
    }

    #[test]
    fn rejects_empty_training_set() {
        assert!(matches!(
            train_seq2seq(Seq2SeqConfig::default(), &[], &TrainConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn full_scale_config_is_valid() {
        let cfg = Seq2SeqConfig::full_scale();
        assert!(cfg.validate().is_ok());
        assert_eq!((cfg.num_layers, cfg.hidden_dim), (3, 1024));
    }
}

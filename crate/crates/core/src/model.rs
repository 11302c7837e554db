//! Sequence encoder with a softmax classification head.
//!
//! Two encoders share the embedding table and the output layer:
//! - `MeanPool`: masked mean of token embeddings.
//! - `Attention`: learned position embeddings, one single-head
//!   self-attention block with residual connections and a GELU feed-forward
//!   layer, then masked mean pooling.
//!
//! Only non-PAD positions enter the computation, so padding never changes
//! the output. Gradients are derived by hand; [`EncoderModel::backward_into`]
//! accumulates them into a [`Params`] buffer of the same shape as the model.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sequence::InputSequence;

pub const LOG_FLOOR: f64 = 1e-12;
const CHECKPOINT_MAGIC: &str = "mucos-checkpoint";
const CHECKPOINT_VERSION: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EncoderKind {
    #[default]
    MeanPool,
    Attention,
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean_pool" | "mean" => Ok(Self::MeanPool),
            "attention" | "attn" => Ok(Self::Attention),
            other => Err(format!("unknown encoder `{other}`")),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MeanPool => "mean_pool",
            Self::Attention => "attention",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: EncoderKind,
    pub vocab_size: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub num_classes: usize,
    /// Rows of the position table; only the attention encoder reads it.
    pub max_positions: usize,
}

impl ModelConfig {
    pub fn new(kind: EncoderKind, vocab_size: usize, num_classes: usize) -> Self {
        Self {
            kind,
            vocab_size,
            dim: 64,
            ff_dim: 128,
            num_classes,
            max_positions: 128,
        }
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn fill_uniform(&mut self, rng: &mut impl Rng, scale: f64) {
        for x in &mut self.data {
            *x = rng.gen_range(-scale..=scale);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub pos: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every trainable tensor. Also used as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embed: Tensor,
    pub attention: Option<AttentionParams>,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.dim;
        let attention = (cfg.kind == EncoderKind::Attention).then(|| AttentionParams {
            pos: Tensor::zeros(cfg.max_positions, d),
            wq: Tensor::zeros(d, d),
            wk: Tensor::zeros(d, d),
            wv: Tensor::zeros(d, d),
            w1: Tensor::zeros(d, cfg.ff_dim),
            b1: Tensor::zeros(1, cfg.ff_dim),
            w2: Tensor::zeros(cfg.ff_dim, d),
            b2: Tensor::zeros(1, d),
        });
        Self {
            embed: Tensor::zeros(cfg.vocab_size, d),
            attention,
            w_out: Tensor::zeros(cfg.num_classes, d),
            b_out: Tensor::zeros(1, cfg.num_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![("embed", &self.embed)];
        if let Some(a) = &self.attention {
            v.extend([
                ("pos", &a.pos),
                ("wq", &a.wq),
                ("wk", &a.wk),
                ("wv", &a.wv),
                ("w1", &a.w1),
                ("b1", &a.b1),
                ("w2", &a.w2),
                ("b2", &a.b2),
            ]);
        }
        v.extend([("w_out", &self.w_out), ("b_out", &self.b_out)]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut v = vec![("embed", &mut self.embed)];
        if let Some(a) = &mut self.attention {
            v.extend([
                ("pos", &mut a.pos),
                ("wq", &mut a.wq),
                ("wk", &mut a.wk),
                ("wv", &mut a.wv),
                ("w1", &mut a.w1),
                ("b1", &mut a.b1),
                ("w2", &mut a.w2),
                ("b2", &mut a.b2),
            ]);
        }
        v.extend([("w_out", &mut self.w_out), ("b_out", &mut self.b_out)]);
        v
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }
}

/// Cached activations of one forward pass over the active (non-PAD) tokens.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    generation: u64,
    tokens: Vec<usize>,
    positions: Vec<usize>,
    attention: Option<AttentionTrace>,
    pooled: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct AttentionTrace {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EncoderModel {
    config: ModelConfig,
    params: Params,
    generation: u64,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `x · W` for a row vector `x` and matrix `W` (`x.len() == W.rows`).
fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; w.cols];
    for (a, &xa) in x.iter().enumerate() {
        for (o, &wv) in out.iter_mut().zip(w.row(a)) {
            *o += xa * wv;
        }
    }
    out
}

/// `W · y` for `y.len() == W.cols`.
fn mat_vec(w: &Tensor, y: &[f64]) -> Vec<f64> {
    (0..w.rows).map(|i| dot(w.row(i), y)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dW += xᵀ · dy` for one row.
fn outer_acc(dw: &mut Tensor, x: &[f64], dy: &[f64], scale: f64) {
    for (a, &xa) in x.iter().enumerate() {
        let s = xa * scale;
        for (d, &g) in dw.row_mut(a).iter_mut().zip(dy) {
            *d += s * g;
        }
    }
}

/// `W · dy` over the columns (`dy.len() == W.cols`), i.e. the gradient
/// flowing back into the input of `vec_mat`.
fn back_vec_mat(w: &Tensor, dy: &[f64]) -> Vec<f64> {
    mat_vec(w, dy)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `-ln p[label]` with `p` floored at [`LOG_FLOOR`]. The flag reports
/// whether the floor was hit.
pub fn loss(probs: &[f64], label: usize) -> (f64, bool) {
    let p = probs[label];
    if p < LOG_FLOOR {
        (-LOG_FLOOR.ln(), true)
    } else {
        (-p.ln(), false)
    }
}

impl EncoderModel {
    /// Uniform initialization in `[-init_scale, init_scale]`.
    pub fn new(config: ModelConfig, seed: u64, init_scale: f64) -> Self {
        let mut params = Params::zeros(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in params.tensors_mut() {
            t.fill_uniform(&mut rng, init_scale);
        }
        Self {
            config,
            params,
            generation: 0,
        }
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        let expected = Params::zeros(&config);
        for ((name, want), (_, got)) in expected.tensors().iter().zip(params.tensors()) {
            if want.shape() != got.shape() {
                return Err(Error::Dimension(format!(
                    "{name}: expected {:?}, got {:?}",
                    want.shape(),
                    got.shape()
                )));
            }
        }
        if expected.tensors().len() != params.tensors().len() {
            return Err(Error::Dimension("tensor set does not match encoder".into()));
        }
        Ok(Self {
            config,
            params,
            generation: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access; invalidates outstanding traces.
    pub fn params_mut(&mut self) -> &mut Params {
        self.generation += 1;
        &mut self.params
    }

    fn active_tokens(&self, seq: &InputSequence) -> Result<(Vec<usize>, Vec<usize>)> {
        if seq.token_ids.len() != seq.attention_mask.len() {
            return Err(Error::Dimension(format!(
                "{} tokens but {} mask entries",
                seq.token_ids.len(),
                seq.attention_mask.len()
            )));
        }
        let mut tokens = Vec::with_capacity(seq.token_ids.len());
        let mut positions = Vec::with_capacity(seq.token_ids.len());
        let positional = self.config.kind == EncoderKind::Attention;
        for (i, (&id, &m)) in seq.token_ids.iter().zip(&seq.attention_mask).enumerate() {
            if m == 0 {
                continue;
            }
            if positional && i >= self.config.max_positions {
                return Err(Error::Dimension(format!(
                    "position {i} outside table of {}",
                    self.config.max_positions
                )));
            }
            if id as usize >= self.config.vocab_size {
                return Err(Error::Dimension(format!(
                    "token {id} outside vocabulary of {}",
                    self.config.vocab_size
                )));
            }
            tokens.push(id as usize);
            positions.push(i);
        }
        if tokens.is_empty() {
            return Err(Error::Dimension("sequence has no active tokens".into()));
        }
        Ok((tokens, positions))
    }

    pub fn forward(&self, seq: &InputSequence) -> Result<ForwardTrace> {
        let (tokens, positions) = self.active_tokens(seq)?;
        let p = &self.params;
        let d = self.config.dim;
        let len = tokens.len() as f64;
        let (pooled, attention) = match &p.attention {
            None => {
                let mut pooled = vec![0.0; d];
                for &t in &tokens {
                    axpy(&mut pooled, 1.0 / len, p.embed.row(t));
                }
                (pooled, None)
            }
            Some(ap) => {
                let x: Vec<Vec<f64>> = tokens
                    .iter()
                    .zip(&positions)
                    .map(|(&t, &i)| {
                        let mut xi = p.embed.row(t).to_vec();
                        axpy(&mut xi, 1.0, ap.pos.row(i));
                        xi
                    })
                    .collect();
                let q: Vec<_> = x.iter().map(|xi| vec_mat(xi, &ap.wq)).collect();
                let k: Vec<_> = x.iter().map(|xi| vec_mat(xi, &ap.wk)).collect();
                let v: Vec<_> = x.iter().map(|xi| vec_mat(xi, &ap.wv)).collect();
                let scale = 1.0 / (d as f64).sqrt();
                let a: Vec<Vec<f64>> = q
                    .iter()
                    .map(|qi| softmax(&k.iter().map(|kj| dot(qi, kj) * scale).collect::<Vec<_>>()))
                    .collect();
                let h1: Vec<Vec<f64>> = x
                    .iter()
                    .zip(&a)
                    .map(|(xi, ai)| {
                        let mut h = xi.clone();
                        for (aij, vj) in ai.iter().zip(&v) {
                            axpy(&mut h, *aij, vj);
                        }
                        h
                    })
                    .collect();
                let u: Vec<Vec<f64>> = h1
                    .iter()
                    .map(|hi| {
                        let mut ui = vec_mat(hi, &ap.w1);
                        axpy(&mut ui, 1.0, &ap.b1.data);
                        ui
                    })
                    .collect();
                let g: Vec<Vec<f64>> = u
                    .iter()
                    .map(|ui| ui.iter().map(|&z| gelu(z)).collect())
                    .collect();
                let mut pooled = vec![0.0; d];
                for (hi, gi) in h1.iter().zip(&g) {
                    let mut h2 = hi.clone();
                    axpy(&mut h2, 1.0, &vec_mat(gi, &ap.w2));
                    axpy(&mut h2, 1.0, &ap.b2.data);
                    axpy(&mut pooled, 1.0 / len, &h2);
                }
                (
                    pooled,
                    Some(AttentionTrace {
                        x,
                        q,
                        k,
                        v,
                        a,
                        h1,
                        u,
                        g,
                    }),
                )
            }
        };
        let mut logits = mat_vec(&p.w_out, &pooled);
        axpy(&mut logits, 1.0, &p.b_out.data);
        let probs = softmax(&logits);
        Ok(ForwardTrace {
            generation: self.generation,
            tokens,
            positions,
            attention,
            pooled,
            logits,
            probs,
        })
    }

    /// Adds `scale · ∂loss/∂θ` for every parameter into `grads`.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        label: usize,
        grads: &mut Params,
        scale: f64,
    ) -> Result<()> {
        if trace.generation != self.generation {
            return Err(Error::StaleTrace);
        }
        if label >= self.config.num_classes {
            return Err(Error::Dimension(format!(
                "label {label} outside {} classes",
                self.config.num_classes
            )));
        }
        let p = &self.params;
        let mut dlogits = trace.probs.clone();
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|x| *x *= scale);

        for (c, &g) in dlogits.iter().enumerate() {
            axpy(grads.w_out.row_mut(c), g, &trace.pooled);
            grads.b_out.data[c] += g;
        }
        let mut dpooled = vec![0.0; self.config.dim];
        for (c, &g) in dlogits.iter().enumerate() {
            axpy(&mut dpooled, g, p.w_out.row(c));
        }
        let inv_len = 1.0 / trace.tokens.len() as f64;

        match (&p.attention, &trace.attention, &mut grads.attention) {
            (None, None, None) => {
                for &t in &trace.tokens {
                    axpy(grads.embed.row_mut(t), inv_len, &dpooled);
                }
            }
            (Some(ap), Some(at), Some(ga)) => {
                let n = trace.tokens.len();
                let dh2: Vec<f64> = dpooled.iter().map(|x| x * inv_len).collect();
                let mut dh1 = vec![dh2.clone(); n];
                for i in 0..n {
                    outer_acc(&mut ga.w2, &at.g[i], &dh2, 1.0);
                    axpy(&mut ga.b2.data, 1.0, &dh2);
                    let dg = back_vec_mat(&ap.w2, &dh2);
                    let du: Vec<f64> = dg
                        .iter()
                        .zip(&at.u[i])
                        .map(|(g, &u)| g * gelu_grad(u))
                        .collect();
                    outer_acc(&mut ga.w1, &at.h1[i], &du, 1.0);
                    axpy(&mut ga.b1.data, 1.0, &du);
                    axpy(&mut dh1[i], 1.0, &back_vec_mat(&ap.w1, &du));
                }
                // H1 = X + A·V
                let mut dx = dh1.clone();
                let mut dv = vec![vec![0.0; self.config.dim]; n];
                let mut ds = vec![vec![0.0; n]; n];
                for i in 0..n {
                    let da: Vec<f64> = at.v.iter().map(|vj| dot(&dh1[i], vj)).collect();
                    for j in 0..n {
                        axpy(&mut dv[j], at.a[i][j], &dh1[i]);
                    }
                    let mix = dot(&at.a[i], &da);
                    for j in 0..n {
                        ds[i][j] = at.a[i][j] * (da[j] - mix);
                    }
                }
                let s = 1.0 / (self.config.dim as f64).sqrt();
                let mut dq = vec![vec![0.0; self.config.dim]; n];
                let mut dk = vec![vec![0.0; self.config.dim]; n];
                for i in 0..n {
                    for j in 0..n {
                        axpy(&mut dq[i], s * ds[i][j], &at.k[j]);
                        axpy(&mut dk[j], s * ds[i][j], &at.q[i]);
                    }
                }
                for i in 0..n {
                    outer_acc(&mut ga.wq, &at.x[i], &dq[i], 1.0);
                    outer_acc(&mut ga.wk, &at.x[i], &dk[i], 1.0);
                    outer_acc(&mut ga.wv, &at.x[i], &dv[i], 1.0);
                    axpy(&mut dx[i], 1.0, &back_vec_mat(&ap.wq, &dq[i]));
                    axpy(&mut dx[i], 1.0, &back_vec_mat(&ap.wk, &dk[i]));
                    axpy(&mut dx[i], 1.0, &back_vec_mat(&ap.wv, &dv[i]));
                }
                for ((&t, &i), dxi) in trace.tokens.iter().zip(&trace.positions).zip(&dx) {
                    axpy(grads.embed.row_mut(t), 1.0, dxi);
                    axpy(ga.pos.row_mut(i), 1.0, dxi);
                }
            }
            _ => {
                return Err(Error::Dimension(
                    "gradient buffer does not match encoder".into(),
                ))
            }
        }
        Ok(())
    }

    /// Fresh gradient set for one example.
    pub fn backward(&self, trace: &ForwardTrace, label: usize) -> Result<Params> {
        let mut grads = self.params.zeros_like();
        self.backward_into(trace, label, &mut grads, 1.0)?;
        Ok(grads)
    }

    /// Class probabilities for one sequence.
    pub fn predict(&self, seq: &InputSequence) -> Result<Vec<f64>> {
        Ok(self.forward(seq)?.probs)
    }

    /// Writes a text checkpoint: header, config, metadata echo, then each
    /// tensor as `name rows cols` followed by its row-major values.
    pub fn save(&self, path: &Path, echo: &BTreeMap<String, String>) -> Result<()> {
        let mut out = String::new();
        let c = &self.config;
        out.push_str(&format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n"));
        out.push_str(&format!("kind={}\n", c.kind));
        out.push_str(&format!("vocab_size={}\n", c.vocab_size));
        out.push_str(&format!("dim={}\n", c.dim));
        out.push_str(&format!("ff_dim={}\n", c.ff_dim));
        out.push_str(&format!("num_classes={}\n", c.num_classes));
        out.push_str(&format!("max_positions={}\n", c.max_positions));
        for (k, v) in echo {
            out.push_str(&format!("echo.{k}={v}\n"));
        }
        for (name, t) in self.params.tensors() {
            out.push_str(&format!("tensor {name} {} {}\n", t.rows, t.cols));
            let values: Vec<String> = t.data.iter().map(|x| x.to_string()).collect();
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint, rejecting tensors whose shape disagrees with the
    /// stored config.
    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        if header != format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}") {
            return Err(bad(format!("unsupported header `{header}`")));
        }
        let mut fields = BTreeMap::new();
        let mut echo = BTreeMap::new();
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        while let Some(line) = lines.next() {
            if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 {
                    return Err(bad(format!("malformed tensor header `{line}`")));
                }
                let dim = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
                let (rows, cols) = (dim(parts[1])?, dim(parts[2])?);
                let values = lines.next().unwrap_or("");
                let data = if values.is_empty() {
                    Vec::new()
                } else {
                    values
                        .split(' ')
                        .map(|v| v.parse::<f64>().map_err(|e| bad(format!("{v}: {e}"))))
                        .collect::<Result<Vec<_>>>()?
                };
                if data.len() != rows * cols {
                    return Err(bad(format!(
                        "tensor {} declares {rows}x{cols} but holds {} values",
                        parts[0],
                        data.len()
                    )));
                }
                tensors.push((parts[0].to_owned(), Tensor { rows, cols, data }));
            } else if let Some((k, v)) = line.split_once('=') {
                match k.strip_prefix("echo.") {
                    Some(k) => echo.insert(k.to_owned(), v.to_owned()),
                    None => fields.insert(k.to_owned(), v.to_owned()),
                };
            } else if !line.is_empty() {
                return Err(bad(format!("unexpected line `{line}`")));
            }
        }
        let field = |k: &str| -> Result<&String> {
            fields.get(k).ok_or_else(|| bad(format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            field(k)?.parse().map_err(|e| bad(format!("{k}: {e}")))
        };
        let config = ModelConfig {
            kind: field("kind")?.parse().map_err(bad)?,
            vocab_size: num("vocab_size")?,
            dim: num("dim")?,
            ff_dim: num("ff_dim")?,
            num_classes: num("num_classes")?,
            max_positions: num("max_positions")?,
        };
        let mut params = Params::zeros(&config);
        let mut slots = params.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(bad(format!(
                "expected {} tensors, found {}",
                slots.len(),
                tensors.len()
            )));
        }
        for ((want_name, slot), (name, t)) in slots.iter_mut().zip(tensors) {
            if *want_name != name {
                return Err(bad(format!("expected tensor {want_name}, found {name}")));
            }
            if slot.shape() != t.shape() {
                return Err(bad(format!(
                    "shape mismatch for {name}: config implies {:?}, file has {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            **slot = t;
        }
        Ok((Self::from_params(config, params)?, echo))
    }
}

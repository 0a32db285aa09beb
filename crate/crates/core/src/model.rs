//! Residual feed-forward point classifier and its `ORGC` weight format.
//!
//! Forward pass:
//!
//! ```text
//! h = swish(P·x + p)
//! for each block:
//!     t = swish(norm1(W1·h + b1))
//!     h = h + norm2(W2·t + b2)
//! logits = H·h + c
//! ```
//!
//! `norm` standardizes the hidden vector (population variance, ε = 1e-5)
//! and applies a per-feature scale and shift. All arithmetic is `f32`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{put_f32s, put_u32, Reader};
use crate::error::{Error, Result};
use crate::sampler::DESCRIPTOR_DIM;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ORGC";
const VERSION: u32 = 1;
pub const NORM_EPS: f32 = 1e-5;

/// Shape of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    /// 4 residual blocks (8 hidden linear layers) of width 128, 13 organs plus background.
    fn default() -> Self {
        Self { input_dim: DESCRIPTOR_DIM, hidden_dim: 128, num_blocks: 4, num_classes: 14 }
    }
}

/// Row-major `out_dim × in_dim` weight plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.weight.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}×{} layer has {} weights and {} biases",
                self.out_dim,
                self.in_dim,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    #[inline]
    fn apply(&self, input: &[f32], out: &mut [f32]) {
        for ((o, row), b) in out.iter_mut().zip(self.weight.chunks_exact(self.in_dim)).zip(&self.bias) {
            *o = b + dot(row, input);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

impl Norm {
    pub fn identity(dim: usize) -> Self {
        Self { scale: vec![1.0; dim], shift: vec![0.0; dim] }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { scale: vec![0.0; dim], shift: vec![0.0; dim] }
    }

    #[inline]
    fn apply_in_place(&self, x: &mut [f32]) {
        let n = x.len() as f32;
        let mean = x.iter().sum::<f32>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        for ((v, g), b) in x.iter_mut().zip(&self.scale).zip(&self.shift) {
            *v = (*v - mean) * inv * g + b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub linear1: Dense,
    pub norm1: Norm,
    pub linear2: Dense,
    pub norm2: Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub projection: Dense,
    pub blocks: Vec<ResidualBlock>,
    pub head: Dense,
    pub label_names: Vec<String>,
}

#[inline]
pub fn swish(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Eight independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

/// `"background"`, `"label_1"`, …
pub fn default_label_names(num_classes: usize) -> Vec<String> {
    (0..num_classes).map(|i| if i == 0 { "background".to_string() } else { format!("label_{i}") }).collect()
}

impl ModelWeights {
    pub fn new(projection: Dense, blocks: Vec<ResidualBlock>, head: Dense, label_names: Vec<String>) -> Result<Self> {
        let w = Self { projection, blocks, head, label_names };
        w.validate()?;
        Ok(w)
    }

    /// Every tensor zero, including the norm scales.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let h = config.hidden_dim;
        let blocks = (0..config.num_blocks)
            .map(|_| ResidualBlock {
                linear1: Dense::zeros(h, h),
                norm1: Norm::zeros(h),
                linear2: Dense::zeros(h, h),
                norm2: Norm::zeros(h),
            })
            .collect();
        Self::new(
            Dense::zeros(config.input_dim, h),
            blocks,
            Dense::zeros(h, config.num_classes),
            default_label_names(config.num_classes),
        )
    }

    /// Uniform `±1/√fan_in` initialization from a seeded ChaCha8 stream;
    /// norms start as identity.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = |in_dim: usize, out_dim: usize| {
            let bound = 1.0 / (in_dim as f32).sqrt();
            let mut d = Dense::zeros(in_dim, out_dim);
            d.weight.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
            d.bias.iter_mut().for_each(|b| *b = rng.gen_range(-bound..bound));
            d
        };
        let h = config.hidden_dim;
        let projection = dense(config.input_dim, h);
        let blocks = (0..config.num_blocks)
            .map(|_| ResidualBlock {
                linear1: dense(h, h),
                norm1: Norm::identity(h),
                linear2: dense(h, h),
                norm2: Norm::identity(h),
            })
            .collect();
        let head = dense(h, config.num_classes);
        Self::new(projection, blocks, head, default_label_names(config.num_classes))
    }

    pub fn input_dim(&self) -> usize {
        self.projection.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.projection.out_dim
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_dim
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
            num_blocks: self.blocks.len(),
            num_classes: self.num_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        let mismatch = |m: String| Err(Error::DimensionMismatch(m));
        if self.input_dim() == 0 || h == 0 {
            return mismatch("input and hidden dims must be positive".into());
        }
        if self.blocks.is_empty() {
            return mismatch("at least one residual block is required".into());
        }
        if self.num_classes() < 2 {
            return mismatch(format!("need at least 2 classes, got {}", self.num_classes()));
        }
        self.projection.check("projection")?;
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, d) in [("linear1", &b.linear1), ("linear2", &b.linear2)] {
                d.check(name)?;
                if d.in_dim != h || d.out_dim != h {
                    return mismatch(format!("block {i} {name} is {}×{}, hidden is {h}", d.out_dim, d.in_dim));
                }
            }
            for n in [&b.norm1, &b.norm2] {
                if n.scale.len() != h || n.shift.len() != h {
                    return mismatch(format!("block {i} norm width differs from hidden {h}"));
                }
            }
        }
        self.head.check("head")?;
        if self.head.in_dim != h {
            return mismatch(format!("head input {} differs from hidden {h}", self.head.in_dim));
        }
        if self.label_names.len() != self.num_classes() {
            return mismatch(format!("{} label names for {} classes", self.label_names.len(), self.num_classes()));
        }
        if self.label_names.iter().any(|n| n.contains('\n')) {
            return Err(Error::InvalidInput("label names may not contain newlines".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>> {
        let mut ws = Workspace::new(self);
        self.forward_with(input, &mut ws)?;
        Ok(ws.logits)
    }

    /// Forward pass reusing caller-owned buffers; returns the logits.
    pub fn forward_with<'w>(&self, input: &[f32], ws: &'w mut Workspace) -> Result<&'w [f32]> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        ws.fit(self);
        let Workspace { hidden, scratch, residual, logits } = ws;

        self.projection.apply(input, hidden);
        hidden.iter_mut().for_each(|v| *v = swish(*v));

        for block in &self.blocks {
            block.linear1.apply(hidden, scratch);
            block.norm1.apply_in_place(scratch);
            scratch.iter_mut().for_each(|v| *v = swish(*v));
            block.linear2.apply(scratch, residual);
            block.norm2.apply_in_place(residual);
            hidden.iter_mut().zip(residual.iter()).for_each(|(h, r)| *h += r);
        }

        self.head.apply(hidden, logits);
        Ok(logits)
    }

    pub fn predict(&self, input: &[f32]) -> Result<ClassProbabilities> {
        Ok(ClassProbabilities::from_logits(&self.forward(input)?))
    }

    pub fn predict_with(&self, input: &[f32], ws: &mut Workspace) -> Result<ClassProbabilities> {
        Ok(ClassProbabilities::from_logits(self.forward_with(input, ws)?))
    }
}

/// Scratch buffers for [`ModelWeights::forward_with`].
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    hidden: Vec<f32>,
    scratch: Vec<f32>,
    residual: Vec<f32>,
    logits: Vec<f32>,
}

impl Workspace {
    pub fn new(model: &ModelWeights) -> Self {
        let mut ws = Self::default();
        ws.fit(model);
        ws
    }

    fn fit(&mut self, model: &ModelWeights) {
        let h = model.hidden_dim();
        self.hidden.resize(h, 0.0);
        self.scratch.resize(h, 0.0);
        self.residual.resize(h, 0.0);
        self.logits.resize(model.num_classes(), 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    pub probs: Vec<f32>,
    /// Most probable class; the lowest index wins ties.
    pub label: usize,
}

impl ClassProbabilities {
    pub fn from_logits(logits: &[f32]) -> Self {
        let probs = softmax(logits);
        let label = argmax(&probs);
        Self { probs, label }
    }
}

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn load_weights(bytes: &[u8]) -> Result<ModelWeights> {
    let mut r = Reader::new(bytes);
    r.magic(WEIGHTS_MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let input_dim = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let num_blocks = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    let name_bytes = r.u32()? as usize;

    if input_dim == 0 || hidden == 0 || num_blocks == 0 || num_classes < 2 {
        return Err(Error::DimensionMismatch(format!(
            "input {input_dim}, hidden {hidden}, blocks {num_blocks}, classes {num_classes}"
        )));
    }

    let names = std::str::from_utf8(r.take(name_bytes)?)
        .map_err(|e| Error::MalformedHeader(format!("label names are not UTF-8: {e}")))?;
    let label_names: Vec<String> = names.split('\n').map(str::to_owned).collect();
    if label_names.len() != num_classes {
        return Err(Error::DimensionMismatch(format!("{} label names for {num_classes} classes", label_names.len())));
    }

    // Reject sizes that cannot possibly fit before allocating for them.
    let tensor_floats = hidden
        .checked_mul(input_dim)
        .and_then(|p| p.checked_add(hidden))
        .and_then(|p| p.checked_add(num_blocks.checked_mul(2 * hidden * hidden + 6 * hidden)?))
        .and_then(|p| p.checked_add(num_classes * hidden + num_classes))
        .ok_or_else(|| Error::MalformedHeader("tensor sizes overflow".into()))?;
    let remaining = bytes.len() - (4 + 4 * 6 + name_bytes);
    if tensor_floats.saturating_mul(4) > remaining {
        return Err(Error::TruncatedData { expected: bytes.len() - remaining + tensor_floats * 4, found: bytes.len() });
    }

    let dense = |r: &mut Reader<'_>, in_dim: usize, out_dim: usize| -> Result<Dense> {
        Ok(Dense { in_dim, out_dim, weight: r.f32_vec(in_dim * out_dim)?, bias: r.f32_vec(out_dim)? })
    };
    let projection = dense(&mut r, input_dim, hidden)?;
    let mut blocks = Vec::with_capacity(num_blocks);
    for _ in 0..num_blocks {
        let linear1 = dense(&mut r, hidden, hidden)?;
        let norm1 = Norm { scale: r.f32_vec(hidden)?, shift: r.f32_vec(hidden)? };
        let linear2 = dense(&mut r, hidden, hidden)?;
        let norm2 = Norm { scale: r.f32_vec(hidden)?, shift: r.f32_vec(hidden)? };
        blocks.push(ResidualBlock { linear1, norm1, linear2, norm2 });
    }
    let head = dense(&mut r, hidden, num_classes)?;
    r.finish()?;
    ModelWeights::new(projection, blocks, head, label_names)
}

pub fn save_weights(w: &ModelWeights) -> Vec<u8> {
    let names = w.label_names.join("\n");
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    for v in [
        VERSION,
        w.input_dim() as u32,
        w.hidden_dim() as u32,
        w.blocks.len() as u32,
        w.num_classes() as u32,
        names.len() as u32,
    ] {
        put_u32(&mut out, v);
    }
    out.extend_from_slice(names.as_bytes());
    let dense = |out: &mut Vec<u8>, d: &Dense| {
        put_f32s(out, &d.weight);
        put_f32s(out, &d.bias);
    };
    dense(&mut out, &w.projection);
    for b in &w.blocks {
        dense(&mut out, &b.linear1);
        put_f32s(&mut out, &b.norm1.scale);
        put_f32s(&mut out, &b.norm1.shift);
        dense(&mut out, &b.linear2);
        put_f32s(&mut out, &b.norm2.scale);
        put_f32s(&mut out, &b.norm2.shift);
    }
    dense(&mut out, &w.head);
    out
}

//! Convolutional text encoder with hand-written backpropagation.
//!
//! The same network is used twice: as the item-document model whose output
//! regularises item factors (output dimension `d`) and as the scalar head
//! that produces SAM weights (output dimension 1).
//!
//! Conv variant: embedding lookup, one 1-D convolution per window size,
//! `tanh`, max-over-time pooling, concatenation and a dense layer.
//! Average variant: the mean embedding of the non-padding tokens feeds the
//! dense layer directly.
//!
//! All parameters live in one flat vector so that optimisers, finite
//! differences and serialisation all see the same layout.

mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{Corpus, PAD_ID};

pub use io::{load_params, read_params, save_params, write_params};

/// Items per chunk when summing gradients; fixed so that the reduction
/// order does not depend on the thread count.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Conv,
    Average,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(EncoderKind::Conv),
            "average" => Ok(EncoderKind::Average),
            other => Err(Error::InvalidArgument(format!("unknown encoder kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Filters per window size (conv only).
    pub num_filters: usize,
    /// Convolution window sizes (conv only).
    pub windows: Vec<usize>,
    pub output_dim: usize,
}

impl EncoderConfig {
    /// Defaults: 50-dimensional embeddings, 50 filters for each of the
    /// windows 3, 4 and 5.
    pub fn conv(vocab_size: usize, output_dim: usize) -> Self {
        EncoderConfig {
            kind: EncoderKind::Conv,
            vocab_size,
            embed_dim: 50,
            num_filters: 50,
            windows: vec![3, 4, 5],
            output_dim,
        }
    }

    pub fn average(vocab_size: usize, output_dim: usize) -> Self {
        EncoderConfig {
            kind: EncoderKind::Average,
            ..Self::conv(vocab_size, output_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "vocab_size, embed_dim and output_dim must be positive".into(),
            ));
        }
        if self.kind == EncoderKind::Conv
            && (self.num_filters == 0 || self.windows.is_empty() || self.windows.contains(&0))
        {
            return Err(Error::InvalidArgument(
                "conv encoder needs filters and positive window sizes".into(),
            ));
        }
        Ok(())
    }

    /// Width of the pooled feature vector fed to the dense layer.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            EncoderKind::Conv => self.num_filters * self.windows.len(),
            EncoderKind::Average => self.embed_dim,
        }
    }

    /// Shortest sequence the encoder accepts.
    pub fn min_length(&self) -> usize {
        match self.kind {
            EncoderKind::Conv => self.windows.iter().copied().max().unwrap_or(1),
            EncoderKind::Average => 1,
        }
    }

    fn layout(&self) -> Layout {
        let e = self.embed_dim;
        let mut offset = self.vocab_size * e;
        let mut conv = Vec::new();
        if self.kind == EncoderKind::Conv {
            for &h in &self.windows {
                let weight = offset;
                offset += self.num_filters * h * e;
                let bias = offset;
                offset += self.num_filters;
                conv.push(ConvBlock { window: h, weight, bias });
            }
        }
        let dense_weight = offset;
        offset += self.output_dim * self.feature_dim();
        let dense_bias = offset;
        offset += self.output_dim;
        Layout {
            conv,
            dense_weight,
            dense_bias,
            total: offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBlock {
    window: usize,
    /// `num_filters × (window·embed_dim)`, row-major.
    weight: usize,
    bias: usize,
}

/// Offsets of each tensor in the flat parameter vector. The embedding
/// table (`vocab_size × embed_dim`, row-major) starts at 0.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    conv: Vec<ConvBlock>,
    /// `output_dim × feature_dim`, row-major.
    dense_weight: usize,
    dense_bias: usize,
    total: usize,
}

/// Encoder parameters. Gradients use the same type and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    config: EncoderConfig,
    layout: Layout,
    values: Vec<f64>,
}

/// Result of a forward pass together with what backward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub value: Vec<f64>,
    tokens: Vec<usize>,
    features: Vec<f64>,
    /// Conv: position of the maximum for every (window, filter), in
    /// concatenation order.
    argmax: Vec<usize>,
    /// Average: number of non-padding tokens.
    token_count: usize,
}

impl EncoderOutput {
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

impl EncoderParams {
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        Ok(EncoderParams {
            values: vec![0.0; layout.total],
            layout,
            config,
        })
    }

    /// Uniform in [−0.05, 0.05]; the padding embedding row starts at zero.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in params.values.iter_mut() {
            *v = rng.random_range(-0.05..=0.05);
        }
        let e = params.config.embed_dim;
        params.values[PAD_ID * e..(PAD_ID + 1) * e].fill(0.0);
        Ok(params)
    }

    pub fn from_values(config: EncoderConfig, values: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if values.len() != params.values.len() {
            return Err(Error::Shape {
                expected: format!("{} parameters", params.values.len()),
                actual: values.len().to_string(),
            });
        }
        params.values = values;
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn embedding(&self, token: usize) -> &[f64] {
        let e = self.config.embed_dim;
        &self.values[token * e..(token + 1) * e]
    }

    pub fn embedding_mut(&mut self, token: usize) -> &mut [f64] {
        let e = self.config.embed_dim;
        &mut self.values[token * e..(token + 1) * e]
    }

    /// Filter `filter` of window block `block`, length `window·embed_dim`.
    pub fn conv_filter_mut(&mut self, block: usize, filter: usize) -> &mut [f64] {
        let b = &self.layout.conv[block];
        let width = b.window * self.config.embed_dim;
        let start = b.weight + filter * width;
        &mut self.values[start..start + width]
    }

    pub fn conv_bias_mut(&mut self, block: usize) -> &mut [f64] {
        let b = self.layout.conv[block].bias;
        &mut self.values[b..b + self.config.num_filters]
    }

    /// Dense weights, `output_dim × feature_dim` row-major.
    pub fn dense_weight(&self) -> &[f64] {
        &self.values[self.layout.dense_weight..self.layout.dense_bias]
    }

    pub fn dense_bias(&self) -> &[f64] {
        let start = self.layout.dense_bias;
        &self.values[start..start + self.config.output_dim]
    }

    pub fn dense_weight_mut(&mut self) -> &mut [f64] {
        let start = self.layout.dense_weight;
        &mut self.values[start..self.layout.dense_bias]
    }

    pub fn dense_bias_mut(&mut self) -> &mut [f64] {
        let start = self.layout.dense_bias;
        &mut self.values[start..start + self.config.output_dim]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<EncoderOutput> {
        if tokens.len() < self.config.min_length() {
            return Err(Error::InvalidArgument(format!(
                "sequence of length {} shorter than the widest window {}",
                tokens.len(),
                self.config.min_length()
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::InvalidData(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let (features, argmax, token_count) = match self.config.kind {
            EncoderKind::Conv => {
                let (f, a) = self.conv_features(tokens);
                (f, a, 0)
            }
            EncoderKind::Average => {
                let (f, c) = self.average_features(tokens);
                (f, Vec::new(), c)
            }
        };
        let value = self.dense(&features);
        Ok(EncoderOutput {
            value,
            tokens: tokens.to_vec(),
            features,
            argmax,
            token_count,
        })
    }

    fn conv_features(&self, tokens: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let e = self.config.embed_dim;
        let f = self.config.num_filters;
        let mut embedded = Vec::with_capacity(tokens.len() * e);
        for &t in tokens {
            embedded.extend_from_slice(self.embedding(t));
        }
        let mut features = Vec::with_capacity(self.config.feature_dim());
        let mut argmax = Vec::with_capacity(self.config.feature_dim());
        for block in &self.layout.conv {
            let width = block.window * e;
            let positions = tokens.len() - block.window + 1;
            for c in 0..f {
                let w = &self.values[block.weight + c * width..block.weight + (c + 1) * width];
                let bias = self.values[block.bias + c];
                let mut best = f64::NEG_INFINITY;
                let mut best_pos = 0;
                for t in 0..positions {
                    let window = &embedded[t * e..t * e + width];
                    let a = bias + dot(w, window);
                    if a > best {
                        best = a;
                        best_pos = t;
                    }
                }
                // tanh is monotone, so pooling before it picks the same position.
                features.push(best.tanh());
                argmax.push(best_pos);
            }
        }
        (features, argmax)
    }

    fn average_features(&self, tokens: &[usize]) -> (Vec<f64>, usize) {
        let e = self.config.embed_dim;
        let mut features = vec![0.0; e];
        let mut count = 0;
        for &t in tokens.iter().filter(|&&t| t != PAD_ID) {
            for (acc, x) in features.iter_mut().zip(self.embedding(t)) {
                *acc += x;
            }
            count += 1;
        }
        if count > 0 {
            for x in features.iter_mut() {
                *x /= count as f64;
            }
        }
        (features, count)
    }

    fn dense(&self, features: &[f64]) -> Vec<f64> {
        let k = self.config.output_dim;
        let fd = features.len();
        (0..k)
            .map(|o| {
                let row = &self.values[self.layout.dense_weight + o * fd..][..fd];
                self.values[self.layout.dense_bias + o] + dot(row, features)
            })
            .collect()
    }

    /// Gradient of `upstream · forward(tokens)` with respect to every
    /// parameter.
    pub fn backward(&self, output: &EncoderOutput, upstream: &[f64]) -> Result<EncoderParams> {
        let mut grad = self.zeros_like();
        self.accumulate_backward(output, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient of `upstream · output.value` into `grad`.
    pub fn accumulate_backward(
        &self,
        output: &EncoderOutput,
        upstream: &[f64],
        grad: &mut EncoderParams,
    ) -> Result<()> {
        let k = self.config.output_dim;
        if upstream.len() != k {
            return Err(Error::Shape {
                expected: format!("upstream gradient of length {k}"),
                actual: upstream.len().to_string(),
            });
        }
        if output.features.len() != self.config.feature_dim()
            || grad.values.len() != self.values.len()
        {
            return Err(Error::Shape {
                expected: "output and gradient produced for these parameters".into(),
                actual: "mismatched encoder".into(),
            });
        }
        if upstream.iter().all(|&g| g == 0.0) {
            return Ok(());
        }

        let fd = output.features.len();
        let mut feature_grad = vec![0.0; fd];
        for (o, &g) in upstream.iter().enumerate() {
            grad.values[self.layout.dense_bias + o] += g;
            let w_off = self.layout.dense_weight + o * fd;
            for q in 0..fd {
                grad.values[w_off + q] += g * output.features[q];
                feature_grad[q] += g * self.values[w_off + q];
            }
        }

        let e = self.config.embed_dim;
        match self.config.kind {
            EncoderKind::Conv => {
                let f = self.config.num_filters;
                for (b, block) in self.layout.conv.iter().enumerate() {
                    let width = block.window * e;
                    for c in 0..f {
                        let q = b * f + c;
                        let z = output.features[q];
                        let g = feature_grad[q] * (1.0 - z * z);
                        if g == 0.0 {
                            continue;
                        }
                        let t = output.argmax[q];
                        grad.values[block.bias + c] += g;
                        let w_off = block.weight + c * width;
                        for o in 0..block.window {
                            let token = output.tokens[t + o];
                            for d in 0..e {
                                let wi = w_off + o * e + d;
                                grad.values[wi] += g * self.values[token * e + d];
                                grad.values[token * e + d] += g * self.values[wi];
                            }
                        }
                    }
                }
            }
            EncoderKind::Average => {
                if output.token_count > 0 {
                    let scale = 1.0 / output.token_count as f64;
                    for &token in output.tokens.iter().filter(|&&t| t != PAD_ID) {
                        for d in 0..e {
                            grad.values[token * e + d] += scale * feature_grad[d];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Forward pass over every row of `corpus`, in parallel.
    pub fn forward_corpus(&self, corpus: &Corpus) -> Result<Vec<EncoderOutput>> {
        corpus
            .sequences()
            .par_iter()
            .map(|s| self.forward(s))
            .collect()
    }

    /// Sum of per-item backward passes. Items are reduced in fixed-size
    /// chunks, and chunk sums are then added in item order, so the result is
    /// bit-identical for any thread count.
    pub fn backward_corpus(
        &self,
        outputs: &[EncoderOutput],
        upstream: &[Vec<f64>],
    ) -> Result<EncoderParams> {
        if outputs.len() != upstream.len() {
            return Err(Error::Shape {
                expected: format!("{} upstream gradients", outputs.len()),
                actual: upstream.len().to_string(),
            });
        }
        let partials: Vec<EncoderParams> = outputs
            .par_chunks(GRAD_CHUNK)
            .zip(upstream.par_chunks(GRAD_CHUNK))
            .map(|(outs, ups)| {
                let mut g = self.zeros_like();
                for (o, u) in outs.iter().zip(ups) {
                    self.accumulate_backward(o, u, &mut g)?;
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        let mut total = self.zeros_like();
        for p in &partials {
            total.add_scaled(p, 1.0);
        }
        Ok(total)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests;

//! The mixture density network.
//!
//! A device id selects a row of the [`EmbeddingTable`]; that row is
//! concatenated with the (standardized) gate voltage and pushed through fully
//! connected Mish layers into a linear head of width `3K`. The head is split
//! into mixing logits, means and raw scales, giving a [`MixtureParams`].
//!
//! Every stage is C∞, so the map `(v_gate, embedding) ↦ MixtureParams` is too.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, SimplexVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_components: usize,
    pub hidden_sizes: Vec<usize>,
    pub embedding_dim: usize,
    pub embedding_enabled: bool,
    pub sigma_floor: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_components: 3,
            hidden_sizes: vec![64, 64],
            embedding_dim: 4,
            embedding_enabled: true,
            sigma_floor: 1e-6,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::Config("n_components must be >= 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be >= 1".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes must be nonempty and positive".into()));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Config("sigma_floor must be positive".into()));
        }
        Ok(())
    }

    /// Width of the network input: the voltage plus the embedding, if any.
    pub fn input_width(&self) -> usize {
        if self.embedding_enabled {
            1 + self.embedding_dim
        } else {
            1
        }
    }

    /// Width of the output head, three values per component.
    pub fn head_width(&self) -> usize {
        3 * self.n_components
    }

    /// `(inputs, outputs)` of each dense layer, head last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 1);
        let mut prev = self.input_width();
        for &h in &self.hidden_sizes {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.head_width()));
        dims
    }

    /// Effective embedding width (zero when embeddings are disabled).
    pub fn active_embedding_dim(&self) -> usize {
        if self.embedding_enabled {
            self.embedding_dim
        } else {
            0
        }
    }
}

/// Location of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    /// Offset of the row-major `outputs × inputs` weight block.
    pub weights: usize,
    /// Offset of the `outputs` biases, directly after the weights.
    pub biases: usize,
}

fn layer_shapes(cfg: &NetworkConfig) -> (Vec<LayerShape>, usize) {
    let mut offset = 0;
    let shapes = cfg
        .layer_dims()
        .into_iter()
        .map(|(inputs, outputs)| {
            let s = LayerShape { inputs, outputs, weights: offset, biases: offset + inputs * outputs };
            offset += inputs * outputs + outputs;
            s
        })
        .collect();
    (shapes, offset)
}

/// Network weights and biases in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    shapes: Vec<LayerShape>,
    values: Vec<f64>,
}

impl NetworkParams {
    /// All-zero parameters for `config`.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (shapes, len) = layer_shapes(config);
        Ok(Self { config: config.clone(), shapes, values: vec![0.0; len] })
    }

    /// Rebuilds parameters from a flat vector laid out as by [`Self::values`].
    pub fn from_flat(config: &NetworkConfig, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.values.len() {
            return Err(Error::Shape { expected: p.values.len(), got: values.len() });
        }
        p.values = values;
        Ok(p)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-device latent vectors, one row per dense device id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, values: vec![0.0; rows * dim] }
    }

    pub fn from_flat(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(Error::Shape { expected: rows * dim, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("embedding entries must be finite".into()));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape { expected: dim, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(rows.len(), dim, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }
}

/// One predicted Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub alphas: SimplexVector,
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Constant added after the softplus in the scale head. Needed to chain
    /// scale gradients back to the raw head output.
    pub sigma_floor: f64,
}

impl MixtureParams {
    /// Builds a mixture from explicit component parameters, with a zero floor.
    pub fn new(alphas: Vec<f64>, mus: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        Self::with_floor(alphas, mus, sigmas, 0.0)
    }

    pub fn with_floor(alphas: Vec<f64>, mus: Vec<f64>, sigmas: Vec<f64>, sigma_floor: f64) -> Result<Self> {
        let k = alphas.len();
        if mus.len() != k {
            return Err(Error::Shape { expected: k, got: mus.len() });
        }
        if sigmas.len() != k {
            return Err(Error::Shape { expected: k, got: sigmas.len() });
        }
        if mus.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("mixture means must be finite".into()));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0 && *s >= sigma_floor)) {
            return Err(Error::Domain(format!("mixture scales must be positive and >= floor: {sigmas:?}")));
        }
        Ok(Self { alphas: SimplexVector::new(alphas)?, mus, sigmas, sigma_floor })
    }

    /// Maps a raw head output `[logits | means | raw scales]` to mixture parameters.
    pub fn from_head(raw: &[f64], sigma_floor: f64) -> Self {
        let k = raw.len() / 3;
        Self {
            alphas: SimplexVector::from_softmax(math::softmax_unchecked(&raw[..k])),
            mus: raw[k..2 * k].to_vec(),
            sigmas: raw[2 * k..].iter().map(|&r| math::softplus(r) + sigma_floor).collect(),
            sigma_floor,
        }
    }

    pub fn n_components(&self) -> usize {
        self.mus.len()
    }

    /// Returns a copy with every mean and scale multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alphas: self.alphas.clone(),
            mus: self.mus.iter().map(|m| m * factor).collect(),
            sigmas: self.sigmas.iter().map(|s| s * factor).collect(),
            sigma_floor: self.sigma_floor * factor,
        }
    }
}

/// Gaussian mixture density at `x`.
pub fn mixture_pdf(mix: &MixtureParams, x: f64) -> f64 {
    mix.alphas
        .as_slice()
        .iter()
        .zip(&mix.mus)
        .zip(&mix.sigmas)
        .map(|((a, m), s)| a * math::std_normal_pdf((x - m) / s) / s)
        .sum()
}

/// Draws initial parameters: weights `N(0, 1/fan_in)`, zero biases,
/// embeddings `N(0, 0.1²)`. Deterministic in `config.seed`.
pub fn init_params(config: &NetworkConfig, device_count: usize) -> Result<(NetworkParams, EmbeddingTable)> {
    let mut params = NetworkParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for shape in params.shapes.clone() {
        let std = (1.0 / shape.inputs as f64).sqrt();
        for w in &mut params.values[shape.weights..shape.biases] {
            let z: f64 = rng.sample(StandardNormal);
            *w = std * z;
        }
    }
    let dim = config.active_embedding_dim();
    let mut table = EmbeddingTable::zeros(device_count, dim);
    for v in &mut table.values {
        let z: f64 = rng.sample(StandardNormal);
        *v = 0.1 * z;
    }
    Ok((params, table))
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// `acts[l]` is the input to layer `l`; the last entry is the raw head.
    acts: Vec<Vec<f64>>,
    /// Mish derivative at each hidden pre-activation.
    dacts: Vec<Vec<f64>>,
    grad_buf: Vec<f64>,
    grad_next: Vec<f64>,
}

impl Workspace {
    pub fn new(params: &NetworkParams) -> Self {
        let mut acts = vec![vec![0.0; params.config.input_width()]];
        let mut dacts = Vec::new();
        for s in &params.shapes {
            acts.push(vec![0.0; s.outputs]);
        }
        for s in &params.shapes[..params.shapes.len() - 1] {
            dacts.push(vec![0.0; s.outputs]);
        }
        let widest = params.shapes.iter().map(|s| s.inputs.max(s.outputs)).max().unwrap_or(1);
        Self { acts, dacts, grad_buf: vec![0.0; widest], grad_next: vec![0.0; widest] }
    }

    /// Raw head output from the last forward pass.
    pub fn head(&self) -> &[f64] {
        self.acts.last().expect("workspace has a head")
    }

    /// Gradient with respect to the network input from the last backward pass.
    pub fn input_grad(&self) -> &[f64] {
        &self.grad_buf[..self.acts[0].len()]
    }
}

fn dense(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

impl NetworkParams {
    fn check_input(&self, embedding: &[f64]) -> Result<()> {
        let dim = self.config.active_embedding_dim();
        if embedding.len() != dim {
            return Err(Error::Shape { expected: dim, got: embedding.len() });
        }
        Ok(())
    }

    /// Forward pass filling `ws`; returns the raw head output.
    pub fn forward_raw<'w>(&self, embedding: &[f64], v_gate: f64, ws: &'w mut Workspace) -> &'w [f64] {
        ws.acts[0][0] = v_gate;
        ws.acts[0][1..].copy_from_slice(&embedding[..self.config.active_embedding_dim()]);
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let x = &before[l];
            let out = &mut after[0];
            dense(&self.values[s.weights..s.biases], &self.values[s.biases..s.biases + s.outputs], x, out);
            if l < last {
                for (z, d) in out.iter_mut().zip(ws.dacts[l].iter_mut()) {
                    let (m, dm) = math::mish_with_prime(*z);
                    *z = m;
                    *d = dm;
                }
            }
        }
        ws.head()
    }

    /// Backpropagates `d_head` (gradient of a scalar loss with respect to the
    /// raw head) through the network, accumulating parameter gradients into
    /// `grad` (same layout as [`Self::values`]). The input gradient is left in
    /// [`Workspace::input_grad`]. Must follow a [`Self::forward_raw`] on `ws`.
    pub fn backward(&self, ws: &mut Workspace, d_head: &[f64], grad: &mut [f64]) {
        let last = self.shapes.len() - 1;
        ws.grad_buf[..d_head.len()].copy_from_slice(d_head);
        for l in (0..=last).rev() {
            let s = self.shapes[l];
            let x = &ws.acts[l];
            let dz = &mut ws.grad_buf[..s.outputs];
            if l < last {
                for (g, d) in dz.iter_mut().zip(&ws.dacts[l]) {
                    *g *= d;
                }
            }
            let dz = &ws.grad_buf[..s.outputs];
            let w = &self.values[s.weights..s.biases];
            let (gw, gb) = grad[s.weights..s.biases + s.outputs].split_at_mut(s.inputs * s.outputs);
            let dx = &mut ws.grad_next[..s.inputs];
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (o, &g) in dz.iter().enumerate() {
                gb[o] += g;
                if g == 0.0 {
                    continue;
                }
                let row = &w[o * s.inputs..(o + 1) * s.inputs];
                let grow = &mut gw[o * s.inputs..(o + 1) * s.inputs];
                for i in 0..s.inputs {
                    grow[i] += g * x[i];
                    dx[i] += g * row[i];
                }
            }
            std::mem::swap(&mut ws.grad_buf, &mut ws.grad_next);
        }
    }

    /// Mixture prediction for an explicit embedding vector.
    pub fn forward_with_embedding(&self, embedding: &[f64], v_gate: f64) -> Result<MixtureParams> {
        self.check_input(embedding)?;
        if !v_gate.is_finite() {
            return Err(Error::Domain(format!("gate voltage must be finite, got {v_gate}")));
        }
        let mut ws = Workspace::new(self);
        let head = self.forward_raw(embedding, v_gate, &mut ws);
        Ok(MixtureParams::from_head(head, self.config.sigma_floor))
    }

    /// Mixture prediction for a known device.
    pub fn forward(&self, table: &EmbeddingTable, device_id: usize, v_gate: f64) -> Result<MixtureParams> {
        if !self.config.embedding_enabled {
            return self.forward_with_embedding(&[], v_gate);
        }
        if device_id >= table.rows() {
            return Err(Error::UnknownDevice { id: device_id, count: table.rows() });
        }
        self.forward_with_embedding(table.row(device_id), v_gate)
    }
}

//! Datasets, training, gradient verification and evaluation metrics.
//!
//! The network is trained with minibatch Adam on the closed-form CRPS (or the
//! GNLL baseline). Embedding rows use a lazy Adam update: a row's optimizer
//! state and value change only in batches that contain one of that device's
//! samples.
//!
//! Voltages enter the network standardized, `(v − v_mean)/v_std`; currents are
//! divided by `i_scale` only, so `I ≥ 0` maps to `x ≥ 0` and the truncation
//! point stays at zero.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crps::{crps_mixture, Loss};
use crate::embedding_space::EmbeddingGaussian;
use crate::error::{Error, Result};
use crate::mdn::{init_params, EmbeddingTable, MixtureParams, NetworkConfig, NetworkParams, Workspace};
use crate::truncated::TruncatedMixture;

/// One measurement: raw volts and amperes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub device_id: usize,
    pub v_gate: f64,
    pub i_drain: f64,
}

/// Affine maps between physical and model units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub v_mean: f64,
    pub v_std: f64,
    pub i_scale: f64,
}

impl Default for Scaling {
    fn default() -> Self {
        Self { v_mean: 0.0, v_std: 1.0, i_scale: 1.0 }
    }
}

impl Scaling {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_std > 0.0 && self.v_std.is_finite()) {
            return Err(Error::Config(format!("v_std must be positive, got {}", self.v_std)));
        }
        if !(self.i_scale > 0.0 && self.i_scale.is_finite()) {
            return Err(Error::Config(format!("i_scale must be positive, got {}", self.i_scale)));
        }
        if !self.v_mean.is_finite() {
            return Err(Error::Config("v_mean must be finite".into()));
        }
        Ok(())
    }

    /// Standardization of `points`' voltages and the max-current scale.
    pub fn fit(points: &[DataPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("cannot fit scaling to an empty dataset".into()));
        }
        let n = points.len() as f64;
        let v_mean = points.iter().map(|p| p.v_gate).sum::<f64>() / n;
        let var = points.iter().map(|p| (p.v_gate - v_mean).powi(2)).sum::<f64>() / n;
        let v_std = if var > 0.0 { var.sqrt() } else { 1.0 };
        let max_i = points.iter().map(|p| p.i_drain).fold(0.0, f64::max);
        let i_scale = if max_i > 0.0 { max_i } else { 1.0 };
        Ok(Self { v_mean, v_std, i_scale })
    }

    #[inline]
    pub fn scale_v(&self, v: f64) -> f64 {
        (v - self.v_mean) / self.v_std
    }

    #[inline]
    pub fn unscale_v(&self, x: f64) -> f64 {
        x * self.v_std + self.v_mean
    }

    #[inline]
    pub fn scale_i(&self, i: f64) -> f64 {
        i / self.i_scale
    }

    #[inline]
    pub fn unscale_i(&self, y: f64) -> f64 {
        y * self.i_scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
    pub device_count: usize,
    pub scaling: Scaling,
    /// Original device label of each dense id.
    pub device_labels: Vec<i64>,
}

impl Dataset {
    /// Builds a dataset over dense ids `0..device_count`, fitting the scaling.
    pub fn new(points: Vec<DataPoint>, device_count: usize) -> Result<Self> {
        let scaling = Scaling::fit(&points)?;
        Self::with_scaling(points, device_count, scaling)
    }

    pub fn with_scaling(points: Vec<DataPoint>, device_count: usize, scaling: Scaling) -> Result<Self> {
        scaling.validate()?;
        for (i, p) in points.iter().enumerate() {
            if p.device_id >= device_count {
                return Err(Error::UnknownDevice { id: p.device_id, count: device_count });
            }
            if !(p.v_gate.is_finite() && p.i_drain.is_finite() && p.i_drain >= 0.0) {
                return Err(Error::Domain(format!("invalid data point {i}: {p:?}")));
            }
        }
        Ok(Self { points, device_count, scaling, device_labels: (0..device_count as i64).collect() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same devices and scaling, different points.
    pub fn subset(&self, points: Vec<DataPoint>) -> Self {
        Self { points, device_count: self.device_count, scaling: self.scaling, device_labels: self.device_labels.clone() }
    }
}

/// Splits into `(train, holdout)` so every device appears in both splits.
///
/// A device's points, in dataset order, are cut into sweeps wherever the gate
/// voltage fails to increase; whole sweeps are held out. A device with a
/// single sweep falls back to holding out individual points.
pub fn split_holdout(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("holdout fraction must be in [0, 1), got {fraction}")));
    }
    let mut per_device: Vec<Vec<usize>> = vec![Vec::new(); dataset.device_count];
    for (i, p) in dataset.points.iter().enumerate() {
        per_device[p.device_id].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005E_ED0F_401D);
    let mut held = vec![false; dataset.len()];
    if fraction > 0.0 {
        for idx in &per_device {
            let mut sweeps: Vec<Vec<usize>> = Vec::new();
            for &i in idx {
                let v = dataset.points[i].v_gate;
                match sweeps.last_mut() {
                    Some(s) if dataset.points[*s.last().expect("nonempty sweep")].v_gate < v => s.push(i),
                    _ => sweeps.push(vec![i]),
                }
            }
            let groups: Vec<Vec<usize>> =
                if sweeps.len() >= 2 { sweeps } else { idx.iter().map(|&i| vec![i]).collect() };
            if groups.len() < 2 {
                continue;
            }
            let n_hold = ((fraction * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1);
            let mut order: Vec<usize> = (0..groups.len()).collect();
            order.shuffle(&mut rng);
            for &g in &order[..n_hold] {
                for &i in &groups[g] {
                    held[i] = true;
                }
            }
        }
    }
    let (mut train, mut hold) = (Vec::new(), Vec::new());
    for (p, h) in dataset.points.iter().zip(held) {
        if h {
            hold.push(*p);
        } else {
            train.push(*p);
        }
    }
    Ok((dataset.subset(train), dataset.subset(hold)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: Loss,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: Loss::Crps,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("learning_rate and epsilon must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Mean losses after an epoch; epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: NetworkParams,
    pub embeddings: EmbeddingTable,
    pub scaling: Scaling,
    pub device_labels: Vec<i64>,
    pub log: Vec<EpochLog>,
    pub embedding_gaussian: Option<EmbeddingGaussian>,
}

impl TrainedModel {
    /// Freshly initialized, untrained model for `dataset`.
    pub fn initial(dataset: &Dataset, config: &NetworkConfig) -> Result<Self> {
        let (params, embeddings) = init_params(config, dataset.device_count)?;
        Ok(Self {
            params,
            embeddings,
            scaling: dataset.scaling,
            device_labels: dataset.device_labels.clone(),
            log: Vec::new(),
            embedding_gaussian: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        self.params.config()
    }

    pub fn device_count(&self) -> usize {
        self.device_labels.len()
    }

    fn device_embedding(&self, device_id: usize) -> Result<&[f64]> {
        if !self.config().embedding_enabled {
            return Ok(&[]);
        }
        if device_id >= self.embeddings.rows() {
            return Err(Error::UnknownDevice { id: device_id, count: self.embeddings.rows() });
        }
        Ok(self.embeddings.row(device_id))
    }

    /// Scaled-unit mixture for a known device at a raw gate voltage.
    pub fn predict(&self, device_id: usize, v_gate: f64) -> Result<MixtureParams> {
        self.params.forward(&self.embeddings, device_id, self.scaling.scale_v(v_gate))
    }

    /// Scaled-unit mixture for an arbitrary embedding at a raw gate voltage.
    pub fn predict_with_embedding(&self, embedding: &[f64], v_gate: f64) -> Result<MixtureParams> {
        self.params.forward_with_embedding(embedding, self.scaling.scale_v(v_gate))
    }

    /// Predictive distribution of the scaled current, truncated at zero.
    ///
    /// A trained mixture routinely parks a component it does not use at some
    /// voltage far below zero with a vanishing weight, so this accepts
    /// components of any normalizer.
    pub fn predict_truncated(&self, device_id: usize, v_gate: f64) -> Result<TruncatedMixture> {
        Ok(TruncatedMixture::unrestricted(self.predict(device_id, v_gate)?))
    }

    pub fn predict_truncated_with_embedding(&self, embedding: &[f64], v_gate: f64) -> Result<TruncatedMixture> {
        Ok(TruncatedMixture::unrestricted(self.predict_with_embedding(embedding, v_gate)?))
    }

    /// Truncated-mixture mean in amperes.
    pub fn predict_mean(&self, device_id: usize, v_gate: f64) -> Result<f64> {
        Ok(self.scaling.unscale_i(self.predict_truncated(device_id, v_gate)?.mean()))
    }

    /// Embedding used for "a typical device": the fitted Gaussian mean, else
    /// the average table row, else empty when embeddings are disabled.
    pub fn mean_embedding(&self) -> Vec<f64> {
        if !self.config().embedding_enabled {
            return Vec::new();
        }
        if let Some(g) = &self.embedding_gaussian {
            return g.mean().to_vec();
        }
        let mut m = vec![0.0; self.embeddings.dim()];
        for row in self.embeddings.iter_rows() {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        let n = self.embeddings.rows().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Loss gradient for a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGradient {
    pub loss: f64,
    pub network: Vec<f64>,
    pub embeddings: EmbeddingTable,
}

/// Loss of `model` at one raw data point.
pub fn point_loss(model: &TrainedModel, point: &DataPoint, loss: Loss) -> Result<f64> {
    let mix = model.predict(point.device_id, point.v_gate)?;
    Ok(loss.value(&mix, model.scaling.scale_i(point.i_drain)))
}

/// Full analytic gradient of the loss at one raw data point.
pub fn point_gradient(model: &TrainedModel, point: &DataPoint, loss: Loss) -> Result<PointGradient> {
    let emb = model.device_embedding(point.device_id)?.to_vec();
    let mut ws = Workspace::new(&model.params);
    let head = model.params.forward_raw(&emb, model.scaling.scale_v(point.v_gate), &mut ws);
    let mix = MixtureParams::from_head(head, model.config().sigma_floor);
    let (value, hg) = loss.with_gradient(&mix, model.scaling.scale_i(point.i_drain));
    let mut network = vec![0.0; model.params.len()];
    model.params.backward(&mut ws, &hg.to_head(), &mut network);
    let mut embeddings = EmbeddingTable::zeros(model.embeddings.rows(), model.embeddings.dim());
    if model.config().embedding_enabled {
        embeddings.row_mut(point.device_id).copy_from_slice(&ws.input_grad()[1..]);
    }
    Ok(PointGradient { loss: value, network, embeddings })
}

/// Largest relative discrepancy between the analytic gradient and
/// [`numeric_gradient`] with step `step`, over every weight, bias and the
/// point's embedding row. Entries where both magnitudes are at most `1e-8`
/// are skipped.
pub fn gradient_check(model: &TrainedModel, point: &DataPoint, step: f64) -> Result<f64> {
    gradient_check_with_loss(model, point, step, Loss::Crps)
}

pub fn gradient_check_with_loss(model: &TrainedModel, point: &DataPoint, step: f64, loss: Loss) -> Result<f64> {
    let analytic = point_gradient(model, point, loss)?;
    let numeric = numeric_gradient(model, point, step, loss)?;
    let mut worst: f64 = 0.0;
    let pairs = analytic
        .network
        .iter()
        .zip(&numeric.network)
        .chain(analytic.embeddings.values().iter().zip(numeric.embeddings.values()));
    for (a, n) in pairs {
        let scale = a.abs().max(n.abs());
        if scale > 1e-8 {
            worst = worst.max((a - n).abs() / scale);
        }
    }
    Ok(worst)
}

/// Central differences at `step` and `step / 2`, Richardson-extrapolated to
/// fourth order. The larger steps this allows keep round-off well below the
/// smallest gradients a check compares. Only the point's own embedding row is
/// differentiated; other rows cannot affect the loss.
pub fn numeric_gradient(model: &TrainedModel, point: &DataPoint, step: f64, loss: Loss) -> Result<PointGradient> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = model.clone();
    let derivative = |probe: &mut TrainedModel, slot: &dyn Fn(&mut TrainedModel) -> &mut f64| -> Result<f64> {
        let orig = *slot(probe);
        let mut central = |h: f64| -> Result<f64> {
            *slot(probe) = orig + h;
            let up = point_loss(probe, point, loss)?;
            *slot(probe) = orig - h;
            let down = point_loss(probe, point, loss)?;
            *slot(probe) = orig;
            Ok((up - down) / (2.0 * h))
        };
        let coarse = central(step)?;
        let fine = central(0.5 * step)?;
        Ok((4.0 * fine - coarse) / 3.0)
    };
    let mut network = vec![0.0; model.params.len()];
    for (i, g) in network.iter_mut().enumerate() {
        *g = derivative(&mut probe, &|m| &mut m.params.values_mut()[i])?;
    }
    let mut embeddings = EmbeddingTable::zeros(model.embeddings.rows(), model.embeddings.dim());
    if model.config().embedding_enabled {
        let row = point.device_id;
        for j in 0..model.embeddings.dim() {
            embeddings.row_mut(row)[j] = derivative(&mut probe, &|m| &mut m.embeddings.row_mut(row)[j])?;
        }
    }
    Ok(PointGradient { loss: point_loss(model, point, loss)?, network, embeddings })
}

/// Mean CRPS over `dataset`, in scaled current units.
pub fn evaluate_crps(model: &TrainedModel, dataset: &Dataset) -> Result<f64> {
    mean_loss(model, dataset, Loss::Crps)
}

pub fn mean_loss(model: &TrainedModel, dataset: &Dataset, loss: Loss) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate on an empty dataset".into()));
    }
    let mut ws = Workspace::new(&model.params);
    let mut total = 0.0;
    for p in &dataset.points {
        let emb = model.device_embedding(p.device_id)?;
        let head = model.params.forward_raw(emb, model.scaling.scale_v(p.v_gate), &mut ws);
        let mix = MixtureParams::from_head(head, model.config().sigma_floor);
        let y = model.scaling.scale_i(p.i_drain);
        total += match loss {
            Loss::Crps => crps_mixture(&mix, y),
            Loss::Gnll => loss.value(&mix, y),
        };
    }
    Ok(total / dataset.len() as f64)
}

/// `1 − SS_res/SS_tot` of raw currents, from any point predictor.
pub fn r_squared_of(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    if targets.is_empty() || targets.len() != predictions.len() {
        return Err(Error::UndefinedMetric("R² needs equally many targets and predictions".into()));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("targets have zero variance".into()));
    }
    let ss_res: f64 = targets.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² in raw amperes with the truncated-mixture mean as point prediction.
pub fn r_squared(model: &TrainedModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::UndefinedMetric("empty dataset".into()));
    }
    let targets: Vec<f64> = dataset.points.iter().map(|p| p.i_drain).collect();
    let preds = dataset
        .points
        .iter()
        .map(|p| model.predict_mean(p.device_id, p.v_gate))
        .collect::<Result<Vec<f64>>>()?;
    r_squared_of(&targets, &preds)
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: &TrainConfig, len: usize) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            lr: cfg.learning_rate,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        self.update_range(params, grad, 0, self.t);
    }

    /// Updates `params[..]` stored at `offset` in the state vectors, with an
    /// explicit step count for bias correction.
    fn update_range(&mut self, params: &mut [f64], grad: &[f64], offset: usize, t: i32) {
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
            let m = &mut self.m[offset + i];
            let v = &mut self.v[offset + i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Splits off a holdout set and trains. See [`split_holdout`].
pub fn train(dataset: &Dataset, net_cfg: &NetworkConfig, train_cfg: &TrainConfig) -> Result<TrainedModel> {
    train_cfg.validate()?;
    let (train_set, holdout) = split_holdout(dataset, train_cfg.holdout_fraction, train_cfg.seed)?;
    let holdout = (!holdout.is_empty()).then_some(holdout);
    train_with_holdout(&train_set, holdout.as_ref(), net_cfg, train_cfg)
}

/// Trains on `train_set`; `holdout` is only evaluated, once per epoch.
pub fn train_with_holdout(
    train_set: &Dataset,
    holdout: Option<&Dataset>,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedModel> {
    train_cfg.validate()?;
    if train_set.is_empty() || train_set.device_count == 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut model = TrainedModel::initial(train_set, net_cfg)?;
    let loss = train_cfg.loss;
    let embedding_enabled = net_cfg.embedding_enabled;
    let dim = model.embeddings.dim();

    let scaled: Vec<(usize, f64, f64)> = train_set
        .points
        .iter()
        .map(|p| (p.device_id, model.scaling.scale_v(p.v_gate), model.scaling.scale_i(p.i_drain)))
        .collect();

    let holdout_loss = |m: &TrainedModel| holdout.map(|h| mean_loss(m, h, loss)).transpose();
    model.log.push(EpochLog { epoch: 0, train_loss: mean_loss(&model, train_set, loss)?, holdout_loss: holdout_loss(&model)? });

    let mut net_adam = Adam::new(train_cfg, model.params.len());
    let mut emb_adam = Adam::new(train_cfg, model.embeddings.values().len());
    let mut emb_steps = vec![0i32; model.embeddings.rows()];

    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    let mut ws = Workspace::new(&model.params);
    let mut net_grad = vec![0.0; model.params.len()];
    let mut emb_grad = vec![0.0; model.embeddings.values().len()];
    let mut touched = vec![false; model.embeddings.rows()];
    let mut touched_rows: Vec<usize> = Vec::new();
    let mut d_head = Vec::with_capacity(net_cfg.head_width());

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (batch_idx, batch) in order.chunks(train_cfg.batch_size).enumerate() {
            net_grad.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let (dev, x, y) = scaled[i];
                let emb = if embedding_enabled { model.embeddings.row(dev) } else { &[][..] };
                let head = model.params.forward_raw(emb, x, &mut ws);
                let mix = MixtureParams::from_head(head, net_cfg.sigma_floor);
                let (value, hg) = loss.with_gradient(&mix, y);
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
                }
                epoch_total += value;
                hg.write_head(&mut d_head);
                d_head.iter_mut().for_each(|g| *g *= inv);
                model.params.backward(&mut ws, &d_head, &mut net_grad);
                if embedding_enabled {
                    if !touched[dev] {
                        touched[dev] = true;
                        touched_rows.push(dev);
                    }
                    for (g, d) in emb_grad[dev * dim..(dev + 1) * dim].iter_mut().zip(&ws.input_grad()[1..]) {
                        *g += d;
                    }
                }
            }
            if net_grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            net_adam.step(model.params.values_mut(), &net_grad);
            // Rows are visited in sorted order so updates are reproducible.
            touched_rows.sort_unstable();
            for &dev in &touched_rows {
                emb_steps[dev] += 1;
                let range = dev * dim..(dev + 1) * dim;
                emb_adam.update_range(
                    model.embeddings.row_mut(dev),
                    &emb_grad[range.clone()],
                    range.start,
                    emb_steps[dev],
                );
                emb_grad[range].iter_mut().for_each(|g| *g = 0.0);
                touched[dev] = false;
            }
            touched_rows.clear();
        }
        model.log.push(EpochLog {
            epoch,
            train_loss: epoch_total / scaled.len() as f64,
            holdout_loss: holdout_loss(&model)?,
        });
    }
    Ok(model)
}

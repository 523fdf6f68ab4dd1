//! Quantile-coherent I–V simulation.
//!
//! A sweep holds one quantile `q` across each monotone stretch of the drive
//! waveform and draws a fresh `q` only where the voltage derivative changes
//! sign. Every current is the inverse CDF of the truncated mixture at that
//! `q`, so traces are smooth within a segment and never negative.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::TrainedModel;
use crate::truncated::QuantileClip;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSample {
    pub time: f64,
    pub v_gate: f64,
}

/// Drive signal: gate voltage sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<WaveformSample>,
}

impl Waveform {
    pub fn new(samples: Vec<WaveformSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain(format!("waveform needs at least 2 samples, got {}", samples.len())));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.time.is_finite() && s.v_gate.is_finite()) {
                return Err(Error::Domain(format!("non-finite waveform sample at index {i}")));
            }
            if i > 0 && s.time <= samples[i - 1].time {
                return Err(Error::Domain(format!("waveform time not strictly increasing at index {i}")));
            }
        }
        Ok(Self { samples })
    }

    /// Voltages at unit time steps.
    pub fn from_voltages(voltages: &[f64]) -> Result<Self> {
        Self::new(
            voltages
                .iter()
                .enumerate()
                .map(|(i, &v)| WaveformSample { time: i as f64, v_gate: v })
                .collect(),
        )
    }

    /// `n` evenly spaced samples from `v_start` to `v_end`, one per `dt`.
    pub fn ramp(v_start: f64, v_end: f64, n: usize, dt: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain("ramp needs at least 2 samples".into()));
        }
        let step = (v_end - v_start) / (n - 1) as f64;
        Self::new(
            (0..n)
                .map(|i| WaveformSample { time: i as f64 * dt, v_gate: v_start + step * i as f64 })
                .collect(),
        )
    }

    /// Up from `v_lo` to `v_hi` in `n_half` steps and back down; the apex is
    /// at index `n_half`.
    pub fn triangle(v_lo: f64, v_hi: f64, n_half: usize, dt: f64) -> Result<Self> {
        if n_half == 0 {
            return Err(Error::Domain("triangle needs at least one step per side".into()));
        }
        let step = (v_hi - v_lo) / n_half as f64;
        let samples = (0..=2 * n_half)
            .map(|i| {
                let k = if i <= n_half { i } else { 2 * n_half - i };
                WaveformSample { time: i as f64 * dt, v_gate: v_lo + step * k as f64 }
            })
            .collect();
        Self::new(samples)
    }

    pub fn samples(&self) -> &[WaveformSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn voltages(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.v_gate).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time: f64,
    pub v_gate: f64,
    pub i_drain: f64,
    pub q_used: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTrace {
    pub points: Vec<TracePoint>,
}

impl SweepTrace {
    pub fn currents(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.i_drain).collect()
    }

    pub fn quantiles(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.q_used).collect()
    }
}

/// Indices at which a new quantile is drawn.
///
/// Index 0 always starts a segment. Index `i > 0` is an event when the sign
/// of `v[i+1] − v[i]` differs from the sign of the preceding difference;
/// zero differences carry the previous sign, and leading zeros have none.
pub fn detect_q_events(w: &Waveform) -> Vec<usize> {
    let v = w.voltages();
    let mut events = vec![0];
    let mut prev_sign = 0.0;
    for i in 0..v.len() - 1 {
        let d = v[i + 1] - v[i];
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            prev_sign
        };
        if i > 0 && prev_sign != 0.0 && sign != prev_sign {
            events.push(i);
        }
        prev_sign = sign;
    }
    events
}

fn current_at(model: &TrainedModel, embedding: &[f64], v_gate: f64, q: f64) -> Result<f64> {
    let tm = model.predict_truncated_with_embedding(embedding, v_gate)?;
    Ok(model.scaling.unscale_i(tm.inverse_cdf(q)?))
}

/// Currents in amperes at fixed quantile `q` for raw gate voltages.
pub fn quantile_trace(model: &TrainedModel, embedding: &[f64], voltages: &[f64], q: f64) -> Result<Vec<f64>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile must lie in (0, 1), got {q}")));
    }
    voltages
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            current_at(model, embedding, v, q).map_err(|e| Error::AtSample { index, source: Box::new(e) })
        })
        .collect()
}

/// Samples a sweep, drawing `q ~ U(0, 1)` at each event and clipping it to
/// the default range.
pub fn simulate_sweep<R: Rng + ?Sized>(
    model: &TrainedModel,
    embedding: &[f64],
    w: &Waveform,
    rng: &mut R,
) -> Result<SweepTrace> {
    simulate_sweep_with(model, embedding, w, &QuantileClip::default(), || rng.random::<f64>())
}

/// Sweep with a caller-supplied quantile source, clipped by `clip`.
pub fn simulate_sweep_with<F: FnMut() -> f64>(
    model: &TrainedModel,
    embedding: &[f64],
    w: &Waveform,
    clip: &QuantileClip,
    mut draw_q: F,
) -> Result<SweepTrace> {
    let events = detect_q_events(w);
    let mut next_event = events.iter().peekable();
    let mut q = f64::NAN;
    let mut points = Vec::with_capacity(w.len());
    for (index, s) in w.samples().iter().enumerate() {
        let at_sample = |e: Error| Error::AtSample { index, source: Box::new(e) };
        if next_event.peek() == Some(&&index) {
            next_event.next();
            q = clip.apply(draw_q()).map_err(at_sample)?;
        }
        let i_drain = current_at(model, embedding, s.v_gate, q).map_err(at_sample)?;
        points.push(TracePoint { time: s.time, v_gate: s.v_gate, i_drain, q_used: q });
    }
    Ok(SweepTrace { points })
}

/// Mean over `embeddings` of the truncated-mixture density at `v_gate`,
/// evaluated on `x_grid` in amperes (density per ampere).
pub fn predicted_pdf_average(
    model: &TrainedModel,
    embeddings: &[Vec<f64>],
    v_gate: f64,
    x_grid: &[f64],
) -> Result<Vec<f64>> {
    if embeddings.is_empty() || x_grid.is_empty() {
        return Err(Error::InsufficientData("need at least one embedding and one grid point".into()));
    }
    let scale = model.scaling.i_scale;
    let mut acc = vec![0.0; x_grid.len()];
    for e in embeddings {
        let tm = model.predict_truncated_with_embedding(e, v_gate)?;
        for (a, &x) in acc.iter_mut().zip(x_grid) {
            *a += tm.pdf(model.scaling.scale_i(x)) / scale;
        }
    }
    let n = embeddings.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// `n` evenly spaced currents from 0 up to a bit beyond the largest 0.999
/// quantile among `embeddings` at `v_gate`.
pub fn support_grid(model: &TrainedModel, embeddings: &[Vec<f64>], v_gate: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Domain("grid needs at least 2 points".into()));
    }
    let mut hi: f64 = 0.0;
    for e in embeddings {
        hi = hi.max(current_at(model, e, v_gate, 0.999)?);
    }
    let hi = if hi > 0.0 { 1.25 * hi } else { model.scaling.i_scale };
    Ok((0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::{EmbeddingTable, NetworkConfig, NetworkParams};
    use crate::trainer::Scaling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mu_of(v: f64) -> f64 {
        2.0 - crate::math::mish(v)
    }

    /// K=1 model with μ(v) = 2 − mish(v), σ = softplus(−5) + floor, no embeddings.
    fn linear_model() -> TrainedModel {
        let cfg = NetworkConfig {
            n_components: 1,
            hidden_sizes: vec![1],
            embedding_enabled: false,
            ..Default::default()
        };
        let mut params = NetworkParams::zeros(&cfg).unwrap();
        // [w_hidden, b_hidden, head weights (logit, mu, sigma), head biases]
        let vals = params.values_mut();
        vals[0] = 1.0;
        vals[3] = -1.0;
        vals[6] = 2.0;
        vals[7] = -5.0;
        TrainedModel {
            params,
            embeddings: EmbeddingTable::zeros(1, 0),
            scaling: Scaling { v_mean: 0.0, v_std: 1.0, i_scale: 1e-6 },
            device_labels: vec![0],
            log: Vec::new(),
            embedding_gaussian: None,
        }
    }

    #[test]
    fn event_examples() {
        let ramp = Waveform::ramp(0.0, 1.8, 61, 1e-3).unwrap();
        assert_eq!(detect_q_events(&ramp), vec![0]);
        let tri = Waveform::triangle(0.0, 1.8, 30, 1e-3).unwrap();
        assert_eq!(detect_q_events(&tri), vec![0, 30]);
        let flat = Waveform::from_voltages(&[0.7; 12]).unwrap();
        assert_eq!(detect_q_events(&flat), vec![0]);
        // plateaus inherit the previous sign
        let plateau = Waveform::from_voltages(&[0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 0.0, 0.5]).unwrap();
        assert_eq!(detect_q_events(&plateau), vec![0, 4, 7]);
    }

    #[test]
    fn waveform_validation() {
        assert!(Waveform::from_voltages(&[1.0]).is_err());
        let bad = vec![WaveformSample { time: 0.0, v_gate: 0.0 }, WaveformSample { time: 0.0, v_gate: 1.0 }];
        assert!(Waveform::new(bad).is_err());
        assert!(Waveform::from_voltages(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn median_trace_follows_mu() {
        let m = linear_model();
        let vs = [-2.0, 0.0, 0.5, 1.0, 1.3];
        let t = quantile_trace(&m, &[], &vs, 0.5).unwrap();
        for (v, i) in vs.iter().zip(t) {
            // σ ≈ 0.0067 against μ ≥ 0.6: truncation is negligible
            assert!((i / 1e-6 - mu_of(*v)).abs() < 1e-6);
        }
        assert!(quantile_trace(&m, &[], &vs, 1.0).is_err());
    }

    #[test]
    fn forced_q_matches_quantile_trace() {
        let m = linear_model();
        let w = Waveform::triangle(0.0, 1.8, 10, 1.0).unwrap();
        let forced = simulate_sweep_with(&m, &[], &w, &QuantileClip::default(), || 0.5).unwrap();
        let fixed = quantile_trace(&m, &[], &w.voltages(), 0.5).unwrap();
        assert_eq!(forced.currents(), fixed);
    }

    #[test]
    fn sweep_is_seeded_and_segmented() {
        let m = linear_model();
        let w = Waveform::triangle(0.0, 1.8, 10, 1.0).unwrap();
        let a = simulate_sweep(&m, &[], &w, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = simulate_sweep(&m, &[], &w, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c = simulate_sweep(&m, &[], &w, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.quantiles(), c.quantiles());
        let q = a.quantiles();
        assert!(q[..10].iter().all(|&x| x == q[0]));
        assert_ne!(q[9], q[10]);
        assert!(q[10..].iter().all(|&x| x == q[10]));
        assert!(a.points.iter().all(|p| p.i_drain >= 0.0 && (0.05..=0.95).contains(&p.q_used)));
    }

    #[test]
    fn errors_carry_sample_index() {
        let m = linear_model();
        let w = Waveform::from_voltages(&[0.0, 1.0, 2.0]).unwrap();
        let err = simulate_sweep_with(&m, &[], &w, &QuantileClip::default(), || 2.0).unwrap_err();
        assert!(matches!(err, Error::AtSample { index: 0, .. }));
        let err = quantile_trace(&m, &[0.5], &[0.0, 1.0], 0.5).unwrap_err();
        match err {
            Error::AtSample { index: 0, source } => assert!(matches!(*source, Error::Shape { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn component_far_below_cut_gives_near_zero_current() {
        // μ(3) < 0 sits hundreds of σ below the cut
        let m = linear_model();
        let t = quantile_trace(&m, &[], &[3.0], 0.95).unwrap();
        // the sliver above zero has scale σ²/|μ| ≈ 5e-5 in model units
        assert!(t[0] >= 0.0 && t[0] < 1e-3 * m.scaling.i_scale, "{}", t[0]);
    }

    #[test]
    fn pdf_average_properties() {
        let m = linear_model();
        let grid: Vec<f64> = (0..=4000).map(|i| i as f64 * 5e-10).collect();
        let one = predicted_pdf_average(&m, &[vec![]], 1.0, &grid).unwrap();
        let tm = m.predict_truncated_with_embedding(&[], 1.0).unwrap();
        assert_eq!(one[1500], tm.pdf(grid[1500] / 1e-6) / 1e-6);
        let two = predicted_pdf_average(&m, &[vec![], vec![]], 1.0, &grid).unwrap();
        assert_eq!(one, two);
        let h = grid[1];
        let integral: f64 = one.windows(2).map(|p| 0.5 * h * (p[0] + p[1])).sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        assert!(predicted_pdf_average(&m, &[], 1.0, &grid).is_err());
    }
}

//! Synthetic stochastic-transistor data with known ground truth.
//!
//! Each device gets a latent threshold shift and a relative on-current gain.
//! Its mean current is a logistic turn-on in gate voltage; cycle-to-cycle
//! noise grows with the current, and above `bimodal_center` a second,
//! weaker-current mode switches on. Samples are drawn from the two-component
//! mixture truncated at zero.
//!
//! The generator deliberately lives inside the model family so a trained
//! network can approach the noise ceiling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::trainer::{DataPoint, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub device_count: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub n_voltages: usize,
    pub cycles: usize,
    /// Mean threshold voltage, volts.
    pub vth: f64,
    /// Standard deviation of the per-device threshold shift, volts.
    pub vth_spread: f64,
    /// Logistic turn-on width, volts.
    pub turn_on_width: f64,
    /// Nominal saturated current, amperes.
    pub on_current: f64,
    /// Standard deviation of the per-device relative gain.
    pub on_current_spread: f64,
    /// Noise standard deviation relative to the mean current.
    pub noise_scale: f64,
    /// Noise at zero current, as a fraction of `on_current`, before
    /// multiplying by `noise_scale`.
    pub noise_floor: f64,
    /// Saturated weight of the low-current mode.
    pub bimodality: f64,
    pub bimodal_center: f64,
    pub bimodal_width: f64,
    /// Relative current drop of the low-current mode.
    pub bimodal_shift: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            device_count: 63,
            v_min: 0.0,
            v_max: 1.8,
            n_voltages: 61,
            cycles: 20,
            vth: 0.9,
            vth_spread: 0.06,
            turn_on_width: 0.12,
            on_current: 1e-5,
            on_current_spread: 0.12,
            noise_scale: 0.1,
            noise_floor: 0.03,
            bimodality: 0.3,
            bimodal_center: 1.4,
            bimodal_width: 0.08,
            bimodal_shift: 0.3,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.device_count == 0 || self.n_voltages < 2 || self.cycles == 0 {
            return Err(Error::Config("device_count, cycles must be positive and n_voltages >= 2".into()));
        }
        if !(self.v_max > self.v_min) {
            return Err(Error::Config("voltage grid must be increasing".into()));
        }
        let positive = [self.turn_on_width, self.on_current, self.bimodal_width];
        let nonneg = [self.vth_spread, self.on_current_spread, self.noise_scale, self.noise_floor, self.bimodal_shift];
        if positive.iter().any(|x| !(*x > 0.0)) || nonneg.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("oracle spreads and scales must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bimodality) || self.bimodal_shift >= 1.0 {
            return Err(Error::Config("bimodality must lie in [0, 1] and bimodal_shift below 1".into()));
        }
        Ok(())
    }

    pub fn voltages(&self) -> Vec<f64> {
        let step = (self.v_max - self.v_min) / (self.n_voltages - 1) as f64;
        (0..self.n_voltages).map(|i| self.v_min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceLatent {
    pub vth_shift: f64,
    pub gain: f64,
}

/// Untruncated mixture component in amperes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub config: OracleConfig,
    pub latents: Vec<DeviceLatent>,
}

impl Oracle {
    pub fn new(config: OracleConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let latents = (0..config.device_count)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                DeviceLatent {
                    vth_shift: config.vth_spread * a,
                    gain: (1.0 + config.on_current_spread * b).max(0.05),
                }
            })
            .collect();
        Ok(Self { config, latents })
    }

    /// Mean current of the main mode.
    pub fn mean_curve(&self, device: usize, v: f64) -> f64 {
        let c = &self.config;
        let l = self.latents[device];
        c.on_current * l.gain * sigmoid((v - c.vth - l.vth_shift) / c.turn_on_width)
    }

    /// The (one or two) components at `(device, v)` before truncation.
    pub fn components(&self, device: usize, v: f64) -> Vec<TruthComponent> {
        let c = &self.config;
        let mu = self.mean_curve(device, v);
        let std_of = |m: f64| c.noise_scale * (m + c.noise_floor * c.on_current);
        let w2 = c.bimodality * sigmoid((v - c.bimodal_center) / c.bimodal_width);
        let mut out = vec![TruthComponent { weight: 1.0 - w2, mean: mu, std: std_of(mu) }];
        if w2 > 0.0 {
            let mu2 = mu * (1.0 - c.bimodal_shift);
            out.push(TruthComponent { weight: w2, mean: mu2, std: std_of(mu2) });
        }
        out
    }

    /// Mean of the truncated truth, by the truncated-normal mean identity.
    pub fn truncated_mean(&self, device: usize, v: f64) -> f64 {
        use crate::math::{std_normal_cdf, std_normal_pdf};
        self.components(device, v)
            .iter()
            .map(|k| {
                if k.std == 0.0 {
                    return k.weight * k.mean.max(0.0);
                }
                let z = std_normal_cdf(k.mean / k.std);
                k.weight * (k.mean + k.std * std_normal_pdf(k.mean / k.std) / z)
            })
            .sum()
    }

    /// One current draw, by rejection from the selected component.
    pub fn sample<R: Rng + ?Sized>(&self, device: usize, v: f64, rng: &mut R) -> f64 {
        let comps = self.components(device, v);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = comps[comps.len() - 1];
        for k in &comps {
            acc += k.weight;
            if u < acc {
                chosen = *k;
                break;
            }
        }
        if chosen.std == 0.0 {
            return chosen.mean.max(0.0);
        }
        // means are never negative, so each proposal is accepted with p ≥ 1/2
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = chosen.mean + chosen.std * z;
            if x >= 0.0 {
                return x;
            }
        }
    }
}

/// Points ordered device, cycle, voltage; each cycle is one upward sweep.
pub fn generate_synthetic_dataset(config: &OracleConfig) -> Result<(Dataset, Oracle)> {
    let oracle = Oracle::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let voltages = config.voltages();
    let mut points = Vec::with_capacity(config.device_count * config.cycles * voltages.len());
    for device in 0..config.device_count {
        for _ in 0..config.cycles {
            for &v in &voltages {
                points.push(DataPoint { device_id: device, v_gate: v, i_drain: oracle.sample(device, v, &mut rng) });
            }
        }
    }
    Ok((Dataset::new(points, config.device_count)?, oracle))
}

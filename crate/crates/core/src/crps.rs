//! Closed-form CRPS for Gaussian mixtures, its gradient with respect to the
//! raw network head, and the Gaussian negative log-likelihood baseline.
//!
//! All losses act on the untruncated mixture; truncation only enters at
//! sampling time.

use crate::math::{self, std_normal_pdf};
use crate::mdn::MixtureParams;

/// Gradient of a scalar loss with respect to the raw head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub d_alpha_logits: Vec<f64>,
    pub d_mu: Vec<f64>,
    pub d_sigma_raw: Vec<f64>,
}

impl HeadGradient {
    /// Flattens to the head layout `[logits | means | raw scales]`.
    pub fn to_head(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.d_mu.len());
        self.write_head(&mut v);
        v
    }

    pub fn write_head(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.d_alpha_logits);
        out.extend_from_slice(&self.d_mu);
        out.extend_from_slice(&self.d_sigma_raw);
    }

    /// Chains gradients with respect to `(α, μ, σ)` through softmax and
    /// `softplus + floor`.
    fn from_natural(mix: &MixtureParams, d_alpha: &[f64], d_mu: Vec<f64>, d_sigma: &[f64]) -> Self {
        let alphas = mix.alphas.as_slice();
        let mean: f64 = alphas.iter().zip(d_alpha).map(|(a, g)| a * g).sum();
        let d_alpha_logits = alphas.iter().zip(d_alpha).map(|(a, g)| a * (g - mean)).collect();
        let d_sigma_raw = mix
            .sigmas
            .iter()
            .zip(d_sigma)
            .map(|(s, g)| g * softplus_slope(s - mix.sigma_floor))
            .collect();
        Self { d_alpha_logits, d_mu, d_sigma_raw }
    }
}

/// `sigmoid(r)` recovered from `s = softplus(r)`: `1 − e^{−s}`.
#[inline]
fn softplus_slope(s: f64) -> f64 {
    -(-s).exp_m1()
}

/// `E|X − y|` for `X ~ N(mu, sigma²)`.
///
/// With `z = (y − mu)/sigma` this is `sigma·[z(2Φ(z) − 1) + 2φ(z)]`. A zero
/// `sigma` is treated as the point-mass limit `|mu − y|`.
#[inline]
pub fn gaussian_abs_moment(mu: f64, sigma: f64, y: f64) -> f64 {
    let d = y - mu;
    if sigma <= 0.0 {
        return d.abs();
    }
    let z = d / sigma;
    d * two_phi_minus_one(z) + 2.0 * sigma * std_normal_pdf(z)
}

/// `2Φ(z) − 1 = erf(z/√2)`.
#[inline]
fn two_phi_minus_one(z: f64) -> f64 {
    let x = z * std::f64::consts::FRAC_1_SQRT_2;
    if x.is_finite() {
        math::erf(x).expect("finite input")
    } else {
        z.signum()
    }
}

/// Standard deviation of `X_k − X_l` for independent components.
#[inline]
fn pair_scale(sk: f64, sl: f64) -> f64 {
    sk.hypot(sl)
}

/// CRPS of a Gaussian mixture at observation `y`:
/// `Σ α_k E|X_k − y| − ½ ΣΣ α_k α_l E|X_k − X_l|`.
pub fn crps_mixture(mix: &MixtureParams, y: f64) -> f64 {
    let a = mix.alphas.as_slice();
    let k = a.len();
    let mut first = 0.0;
    let mut spread = 0.0;
    for i in 0..k {
        first += a[i] * gaussian_abs_moment(mix.mus[i], mix.sigmas[i], y);
        // diagonal once, off-diagonal twice
        spread += a[i] * a[i] * gaussian_abs_moment(0.0, pair_scale(mix.sigmas[i], mix.sigmas[i]), 0.0);
        for j in i + 1..k {
            let m = mix.mus[i] - mix.mus[j];
            spread += 2.0 * a[i] * a[j] * gaussian_abs_moment(m, pair_scale(mix.sigmas[i], mix.sigmas[j]), 0.0);
        }
    }
    (first - 0.5 * spread).max(0.0)
}

/// CRPS value and head gradient in one pass.
pub fn crps_with_gradient(mix: &MixtureParams, y: f64) -> (f64, HeadGradient) {
    let a = mix.alphas.as_slice();
    let k = a.len();
    let mut d_alpha = vec![0.0; k];
    let mut d_mu = vec![0.0; k];
    let mut d_sigma = vec![0.0; k];
    let mut first = 0.0;
    let mut spread = 0.0;

    for i in 0..k {
        let (m, s) = (mix.mus[i], mix.sigmas[i]);
        let z = (y - m) / s;
        let e = two_phi_minus_one(z);
        let pdf = std_normal_pdf(z);
        let abs_i = (y - m) * e + 2.0 * s * pdf;
        first += a[i] * abs_i;
        d_alpha[i] += abs_i;
        d_mu[i] -= a[i] * e;
        d_sigma[i] += 2.0 * a[i] * pdf;
    }

    for i in 0..k {
        for j in 0..k {
            let sp = pair_scale(mix.sigmas[i], mix.sigmas[j]);
            let m = mix.mus[i] - mix.mus[j];
            let u = m / sp;
            let e = two_phi_minus_one(u);
            let pdf = std_normal_pdf(u);
            let b = m * e + 2.0 * sp * pdf;
            spread += a[i] * a[j] * b;
            // ∂/∂α_i of −½ΣΣ α α B picks up both (i, j) and (j, i).
            d_alpha[i] -= a[j] * b;
            // ∂B_ij/∂μ_i = erf(u/√2); the (j, i) term contributes the same.
            d_mu[i] -= a[i] * a[j] * e;
            // ∂B_ij/∂σ_i = 2φ(u)·σ_i/sp, doubled by symmetry, halved by the ½.
            d_sigma[i] -= a[i] * a[j] * 2.0 * pdf * mix.sigmas[i] / sp;
        }
    }

    let value = (first - 0.5 * spread).max(0.0);
    (value, HeadGradient::from_natural(mix, &d_alpha, d_mu, &d_sigma))
}

/// Gradient of [`crps_mixture`] with respect to the raw head.
pub fn crps_gradient(mix: &MixtureParams, y: f64) -> HeadGradient {
    crps_with_gradient(mix, y).1
}

fn component_log_densities(mix: &MixtureParams, y: f64) -> Vec<f64> {
    mix.alphas
        .as_slice()
        .iter()
        .zip(&mix.mus)
        .zip(&mix.sigmas)
        .map(|((a, m), s)| {
            let z = (y - m) / s;
            a.ln() - math::LN_SQRT_2PI - s.ln() - 0.5 * z * z
        })
        .collect()
}

/// Negative log-likelihood `−ln p(y)` of the mixture, via log-sum-exp.
pub fn gnll_loss(mix: &MixtureParams, y: f64) -> f64 {
    -math::log_sum_exp(&component_log_densities(mix, y))
}

/// GNLL value and head gradient.
pub fn gnll_with_gradient(mix: &MixtureParams, y: f64) -> (f64, HeadGradient) {
    let logs = component_log_densities(mix, y);
    let lse = math::log_sum_exp(&logs);
    let k = logs.len();
    let mut d_alpha_logits = vec![0.0; k];
    let mut d_mu = vec![0.0; k];
    let mut d_sigma = vec![0.0; k];
    for i in 0..k {
        // responsibility of component i
        let g = (logs[i] - lse).exp();
        let s = mix.sigmas[i];
        let z = (y - mix.mus[i]) / s;
        d_alpha_logits[i] = mix.alphas[i] - g;
        d_mu[i] = -g * z / s;
        d_sigma[i] = g * (1.0 - z * z) / s;
    }
    let d_sigma_raw = mix
        .sigmas
        .iter()
        .zip(&d_sigma)
        .map(|(s, g)| g * softplus_slope(s - mix.sigma_floor))
        .collect();
    (-lse, HeadGradient { d_alpha_logits, d_mu, d_sigma_raw })
}

pub fn gnll_gradient(mix: &MixtureParams, y: f64) -> HeadGradient {
    gnll_with_gradient(mix, y).1
}

/// Selects the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Crps,
    Gnll,
}

impl Loss {
    pub fn value(self, mix: &MixtureParams, y: f64) -> f64 {
        match self {
            Loss::Crps => crps_mixture(mix, y),
            Loss::Gnll => gnll_loss(mix, y),
        }
    }

    pub fn with_gradient(self, mix: &MixtureParams, y: f64) -> (f64, HeadGradient) {
        match self {
            Loss::Crps => crps_with_gradient(mix, y),
            Loss::Gnll => gnll_with_gradient(mix, y),
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crps" => Ok(Loss::Crps),
            "gnll" => Ok(Loss::Gnll),
            other => Err(crate::Error::Config(format!("unknown loss '{other}' (expected crps or gnll)"))),
        }
    }
}

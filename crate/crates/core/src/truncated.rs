//! Gaussian mixtures truncated to `x ≥ 0`.
//!
//! Each component is renormalized by `Z_k = 1 − Φ(−μ_k/σ_k)` so the mixture
//! integrates to one over `[0, ∞)`. Quantiles are found with Brent's method
//! since the mixture CDF has no closed-form inverse.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_SQRT_PI};

use crate::error::{Error, Result};
use crate::math::{brent_root, erfcx_nonneg, std_normal_cdf, std_normal_pdf};
use crate::mdn::MixtureParams;

/// Components whose mass above zero falls below this are rejected.
pub const MIN_NORMALIZER: f64 = 1e-12;

/// Maximum number of times the Brent bracket is doubled.
const MAX_BRACKET_DOUBLINGS: usize = 4;

/// Absolute CDF accuracy targeted by [`TruncatedMixture::inverse_cdf`].
pub const INVERSE_CDF_TOL: f64 = 1e-10;

/// One truncated component. When the cut lies above the mean (`β > 0`) the
/// tail mass is carried as `erfcx(β/√2)` so nothing underflows.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    alpha: f64,
    mu: f64,
    sigma: f64,
    beta: f64,
    normalizer: f64,
    below: f64,
    scaled_tail: f64,
}

impl Component {
    fn new(alpha: f64, mu: f64, sigma: f64) -> Self {
        let beta = -mu / sigma;
        // 1 − Φ(β) = Φ(−β), evaluated directly to keep the tail accurate
        let normalizer = std_normal_cdf(-beta);
        let scaled_tail = if beta > 0.0 { erfcx_nonneg(beta * FRAC_1_SQRT_2) } else { f64::NAN };
        Self { alpha, mu, sigma, beta, normalizer, below: std_normal_cdf(beta), scaled_tail }
    }

    fn pdf(&self, x: f64) -> f64 {
        let t = (x - self.mu) / self.sigma;
        if self.beta <= 0.0 {
            return std_normal_pdf(t) / (self.sigma * self.normalizer);
        }
        // φ(t)/Q(β) with t² − β² = (x/σ)(t + β)
        FRAC_2_SQRT_PI * FRAC_1_SQRT_2 * (-0.5 * (x / self.sigma) * (t + self.beta)).exp()
            / (self.sigma * self.scaled_tail)
    }

    fn cdf(&self, x: f64) -> f64 {
        let t = (x - self.mu) / self.sigma;
        if self.beta <= 0.0 {
            return ((std_normal_cdf(t) - self.below) / self.normalizer).clamp(0.0, 1.0);
        }
        // 1 − Q(t)/Q(β)
        let log_ratio =
            (erfcx_nonneg(t * FRAC_1_SQRT_2) / self.scaled_tail).ln() - 0.5 * (x / self.sigma) * (t + self.beta);
        (-log_ratio.exp_m1()).clamp(0.0, 1.0)
    }

    fn mean(&self) -> f64 {
        let mills = if self.beta <= 0.0 {
            std_normal_pdf(self.beta) / self.normalizer
        } else {
            FRAC_2_SQRT_PI * FRAC_1_SQRT_2 / self.scaled_tail
        };
        self.mu + self.sigma * mills
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMixture {
    base: MixtureParams,
    components: Vec<Component>,
}

/// Restricts `mix` to `x ≥ 0`.
pub fn truncate(mix: &MixtureParams) -> Result<TruncatedMixture> {
    TruncatedMixture::new(mix.clone())
}

impl TruncatedMixture {
    /// Fails with the first component whose normalizer is below
    /// [`MIN_NORMALIZER`].
    pub fn new(base: MixtureParams) -> Result<Self> {
        let tm = Self::unrestricted(base);
        if let Some((k, c)) = tm.components.iter().enumerate().find(|(_, c)| !(c.normalizer >= MIN_NORMALIZER)) {
            return Err(Error::DegenerateComponent { component: k, normalizer: c.normalizer });
        }
        Ok(tm)
    }

    /// Accepts components of any normalizer, however small. A component
    /// lying far below zero keeps its weight as a sliver of mass just above
    /// the cut, which is the exact limit of its truncated density.
    pub fn unrestricted(base: MixtureParams) -> Self {
        let components = base
            .alphas
            .as_slice()
            .iter()
            .zip(&base.mus)
            .zip(&base.sigmas)
            .map(|((&a, &m), &s)| Component::new(a, m, s))
            .collect();
        Self { base, components }
    }

    pub fn base(&self) -> &MixtureParams {
        &self.base
    }

    pub fn normalizers(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.normalizer).collect()
    }

    /// Density of the truncated mixture; zero below the cut.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.components.iter().map(|c| c.alpha * c.pdf(x)).sum()
    }

    /// Mixture CDF: the α-weighted sum of per-component truncated CDFs
    /// `(Φ((x−μ)/σ) − Φ(−μ/σ)) / Z`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let f: f64 = self.components.iter().map(|c| c.alpha * c.cdf(x)).sum();
        f.min(1.0)
    }

    /// Solves `F(x) = q` for `q ∈ (0, 1)`.
    ///
    /// The initial bracket is `[0, max μ + 10 max σ]`, doubled up to four
    /// times if it does not reach `q`.
    pub fn inverse_cdf(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile must lie in (0, 1), got {q}")));
        }
        let max_mu = self.base.mus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let max_sigma = self.base.sigmas.iter().copied().fold(0.0, f64::max);
        let mut hi = (max_mu + 10.0 * max_sigma).max(10.0 * max_sigma);
        let mut doublings = 0;
        while self.cdf(hi) < q {
            if doublings == MAX_BRACKET_DOUBLINGS {
                return Err(Error::Bracket { lo: 0.0, hi, f_lo: -q, f_hi: self.cdf(hi) - q });
            }
            hi *= 2.0;
            doublings += 1;
        }
        // Converge to machine precision in x; the CDF residual then sits far
        // below INVERSE_CDF_TOL unless the density is extreme.
        let x = brent_root(|x| self.cdf(x) - q, 0.0, hi, 0.0)?;
        Ok(x.max(0.0))
    }

    /// `Σ α_k [μ_k + σ_k φ(β_k)/Z_k]` with `β_k = −μ_k/σ_k`.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.alpha * c.mean()).sum::<f64>().max(0.0)
    }
}

pub fn trunc_pdf(tm: &TruncatedMixture, x: f64) -> f64 {
    tm.pdf(x)
}

pub fn trunc_cdf(tm: &TruncatedMixture, x: f64) -> f64 {
    tm.cdf(x)
}

pub fn inverse_cdf(tm: &TruncatedMixture, q: f64) -> Result<f64> {
    tm.inverse_cdf(q)
}

pub fn truncated_mean(tm: &TruncatedMixture) -> f64 {
    tm.mean()
}

/// Quantile clipping range applied to sampled `q` values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantileClip {
    pub lo: f64,
    pub hi: f64,
}

impl Default for QuantileClip {
    fn default() -> Self {
        Self { lo: 0.05, hi: 0.95 }
    }
}

impl QuantileClip {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Config(format!("invalid quantile clip range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn apply(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("quantile {q} outside [0, 1]")));
        }
        Ok(q.clamp(self.lo, self.hi))
    }
}

/// Clips `q` into the default `[0.05, 0.95]` range.
pub fn clip_quantile(q: f64) -> Result<f64> {
    QuantileClip::default().apply(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(mu: f64, sigma: f64) -> TruncatedMixture {
        truncate(&MixtureParams::new(vec![1.0], vec![mu], vec![sigma]).unwrap()).unwrap()
    }

    #[test]
    fn normalizers() {
        assert!((single(5.0, 1.0).normalizers()[0] - 1.0).abs() < 3e-7);
        assert_eq!(single(0.0, 1.0).normalizers()[0], 0.5);
        let err = truncate(&MixtureParams::new(vec![0.5, 0.5], vec![1.0, -20.0], vec![1.0, 1.0]).unwrap());
        assert!(matches!(err, Err(Error::DegenerateComponent { component: 1, .. })));
    }

    #[test]
    fn pdf_examples() {
        let half = single(0.0, 1.0);
        assert_eq!(half.pdf(-0.1), 0.0);
        assert!((half.pdf(0.0) - 0.797_884_560_8).abs() < 1e-10);
        let near = single(5.0, 1.0);
        let z = std_normal_cdf(5.0);
        assert!((near.pdf(5.0) - std_normal_pdf(0.0) / z).abs() < 1e-15);
    }

    #[test]
    fn cdf_examples() {
        let half = single(0.0, 1.0);
        assert_eq!(half.cdf(0.0), 0.0);
        assert!((half.cdf(0.674_489_750_2) - 0.5).abs() < 1e-10);
        assert!((half.cdf(40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_quantile(0.99).unwrap(), 0.95);
        assert_eq!(clip_quantile(0.5).unwrap(), 0.5);
        assert_eq!(clip_quantile(0.0).unwrap(), 0.05);
        assert!(clip_quantile(1.2).is_err());
        assert!(clip_quantile(-0.01).is_err());
        let c = QuantileClip::new(0.1, 0.8).unwrap();
        assert_eq!(c.apply(0.9).unwrap(), 0.8);
        assert!(QuantileClip::new(0.6, 0.4).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert!((single(5.0, 1.0).inverse_cdf(0.5).unwrap() - 5.0).abs() < 1e-6);
        assert!((single(0.0, 2.0).inverse_cdf(0.5).unwrap() - 1.348_979_5).abs() < 1e-6);
        assert!(single(0.0, 1.0).inverse_cdf(0.0).is_err());
        assert!(single(0.0, 1.0).inverse_cdf(1.0).is_err());

        let tm = truncate(&MixtureParams::new(vec![0.3, 0.7], vec![0.2, 3.0], vec![0.5, 0.8]).unwrap()).unwrap();
        for i in 1..=19 {
            let q = 0.05 * i as f64;
            let x = tm.inverse_cdf(q).unwrap();
            assert!(x >= 0.0);
            assert!((tm.cdf(x) - q).abs() <= INVERSE_CDF_TOL, "q={q}");
        }
    }

    #[test]
    fn inverse_with_sharp_component() {
        let tm = truncate(&MixtureParams::new(vec![0.5, 0.5], vec![0.3, 0.3], vec![1e-6, 2e-6]).unwrap()).unwrap();
        for q in [0.05, 0.5, 0.95] {
            let x = tm.inverse_cdf(q).unwrap();
            assert!((tm.cdf(x) - q).abs() <= INVERSE_CDF_TOL);
        }
    }

    #[test]
    fn far_below_cut() {
        // mpmath: μ = −b, σ = 1
        for (b, mean, cdf_01) in [
            (8.0, 0.121_368_112_236_110_68, 0.558_274_102_593_890_8),
            (40.0, 0.024_968_847_207_263_723, 0.981_821_101_425_677_7),
        ] {
            let tm = TruncatedMixture::unrestricted(MixtureParams::new(vec![1.0], vec![-b], vec![1.0]).unwrap());
            assert!((tm.mean() - mean).abs() < 1e-12 * mean, "b={b}: {}", tm.mean());
            assert!((tm.cdf(0.1) - cdf_01).abs() < 1e-12, "b={b}: {}", tm.cdf(0.1));
            let x = tm.inverse_cdf(0.5).unwrap();
            assert!((tm.cdf(x) - 0.5).abs() <= INVERSE_CDF_TOL);
        }
        let base = MixtureParams::new(vec![0.5], vec![-20.0], vec![1.0]);
        assert!(base.is_err());
        let mix = MixtureParams::new(vec![0.999, 0.001], vec![3.0, -1.1], vec![0.5, 0.002]).unwrap();
        assert!(TruncatedMixture::new(mix.clone()).is_err());
        let tm = TruncatedMixture::unrestricted(mix);
        assert!(tm.pdf(0.0).is_finite() && tm.pdf(1e-6) > 0.0);
        assert!((tm.cdf(1e-3) - 0.001).abs() < 1e-6);
    }

    #[test]
    fn tail_formulas_agree_with_direct_ones() {
        // β slightly above zero, where both branches are accurate
        let tm = single(-0.3, 0.7);
        let z = std_normal_cdf(-0.3 / 0.7);
        let lo = std_normal_cdf(0.3 / 0.7);
        for x in [0.0, 0.05, 0.4, 2.0, 6.0] {
            let t = (x + 0.3) / 0.7;
            assert!((tm.pdf(x) - std_normal_pdf(t) / (0.7 * z)).abs() < 1e-14);
            assert!((tm.cdf(x.max(1e-300)) - (std_normal_cdf(t) - lo) / z).abs() < 1e-14);
        }
        let direct = -0.3 + 0.7 * std_normal_pdf(0.3 / 0.7) / z;
        assert!((tm.mean() - direct).abs() < 1e-14);
    }

    #[test]
    fn mean_examples() {
        assert!((single(0.0, 1.0).mean() - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((single(8.0, 1.0).mean() - 8.0).abs() < 1e-10);
    }
}

//! Analysis and generation over the learned embedding space.
//!
//! After training, the per-device embeddings are summarized by a multivariate
//! Gaussian `N(μ_emb, Σ_emb)`. Sampling it yields synthetic devices; its
//! principal axes give the structured "mean ± 2σ" extremes. PCA of the raw
//! table gives the 2-D device map.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::EmbeddingTable;

/// Off-diagonal tolerance for the Jacobi eigensolver, relative to ‖A‖_F.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `a` is row-major `n × n`. Returns `(eigenvalues, eigenvectors)` sorted by
/// descending eigenvalue; eigenvector `i` is `vectors[i]`, normalized and
/// signed so that its largest-magnitude entry is positive.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a.len(), n * n, "matrix must be n × n");
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|k| v[k * n + j]).collect();
            let lead = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            (m[j * n + j], col)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.into_iter().unzip()
}

fn sample_mean_and_covariance(table: &EmbeddingTable) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = table.rows();
    let d = table.dim();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 embedding rows, got {n}")));
    }
    if d == 0 {
        return Err(Error::InsufficientData("embedding table has zero width".into()));
    }
    let mut mean = vec![0.0; d];
    for row in table.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for row in table.iter_rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
    }
    Ok((mean, cov))
}

/// Lower factor `F` (row-major `n × n`) with `F Fᵀ = a` for PSD `a`, by
/// outer-product Cholesky with diagonal pivoting. Columns beyond the
/// numerical rank are zero.
fn pivoted_cholesky(a: &[f64], n: usize) -> Vec<f64> {
    let mut r = a.to_vec();
    let mut f = vec![0.0; n * n];
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    let tol = 1e-14 * scale;
    let mut used = vec![false; n];
    for k in 0..n {
        let pivot = (0..n)
            .filter(|&i| !used[i])
            .max_by(|&i, &j| r[i * n + i].total_cmp(&r[j * n + j]));
        let Some(p) = pivot else { break };
        let d = r[p * n + p];
        if !(d > tol) {
            break;
        }
        used[p] = true;
        let root = d.sqrt();
        let col: Vec<f64> = (0..n).map(|i| if used[i] && i != p { 0.0 } else { r[i * n + p] / root }).collect();
        for i in 0..n {
            f[i * n + k] = col[i];
        }
        for i in 0..n {
            for j in 0..n {
                r[i * n + j] -= col[i] * col[j];
            }
        }
    }
    f
}

/// Eigenvalues down to `−PSD_TOLERANCE` count as zero.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Multivariate Gaussian over embedding vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct EmbeddingGaussian {
    mean: Vec<f64>,
    /// Row-major `dim × dim`, symmetric PSD.
    covariance: Vec<f64>,
    factor: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

impl TryFrom<GaussianRepr> for EmbeddingGaussian {
    type Error = Error;
    fn try_from(r: GaussianRepr) -> Result<Self> {
        EmbeddingGaussian::new(r.mean, r.covariance)
    }
}

impl From<EmbeddingGaussian> for GaussianRepr {
    fn from(g: EmbeddingGaussian) -> Self {
        GaussianRepr { mean: g.mean, covariance: g.covariance }
    }
}

impl EmbeddingGaussian {
    /// Validates and stores `(mean, covariance)`. The covariance is
    /// symmetrized and negative eigenvalues are clamped to zero.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Domain("embedding Gaussian must have positive dimension".into()));
        }
        if covariance.len() != d * d {
            return Err(Error::Shape { expected: d * d, got: covariance.len() });
        }
        if mean.iter().chain(&covariance).any(|x| !x.is_finite()) {
            return Err(Error::Domain("embedding Gaussian parameters must be finite".into()));
        }
        let mut cov = covariance;
        for i in 0..d {
            for j in i + 1..d {
                let s = 0.5 * (cov[i * d + j] + cov[j * d + i]);
                cov[i * d + j] = s;
                cov[j * d + i] = s;
            }
        }
        // Eigenvalues in [−1e-10, 0) are rounding noise that the pivoted
        // factor already ignores; rebuilding only below that keeps `new`
        // idempotent, so a stored Gaussian reloads bit for bit.
        let (values, vectors) = symmetric_eigen(&cov, d);
        if values.iter().any(|&l| l < -PSD_TOLERANCE) {
            let mut rebuilt = vec![0.0; d * d];
            for (l, u) in values.iter().zip(&vectors) {
                let l = l.max(0.0);
                for i in 0..d {
                    for j in i..d {
                        rebuilt[i * d + j] += l * u[i] * u[j];
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    rebuilt[i * d + j] = rebuilt[j * d + i];
                }
            }
            cov = rebuilt;
        }
        let factor = pivoted_cholesky(&cov, d);
        Ok(Self { mean, covariance: cov, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.dim() + j]
    }

    /// Principal axes of the covariance: `(variances, unit directions)`,
    /// descending, negative rounding noise clamped to zero.
    pub fn principal_axes(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (mut values, vectors) = symmetric_eigen(&self.covariance, self.dim());
        values.iter_mut().for_each(|l| *l = l.max(0.0));
        (values, vectors)
    }
}

/// Mean and `1/(n−1)` covariance of the table rows.
pub fn fit_gaussian(table: &EmbeddingTable) -> Result<EmbeddingGaussian> {
    let (mean, cov) = sample_mean_and_covariance(table)?;
    EmbeddingGaussian::new(mean, cov)
}

/// Draws `μ + F z`, `z ~ N(0, I)`, with `F` the pivoted Cholesky factor.
pub fn sample_embedding<R: Rng + ?Sized>(g: &EmbeddingGaussian, rng: &mut R) -> Vec<f64> {
    let d = g.dim();
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    (0..d)
        .map(|i| g.mean[i] + (0..d).map(|k| g.factor[i * d + k] * z[k]).sum::<f64>())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDevice {
    pub label: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticDeviceSet {
    pub devices: Vec<SyntheticDevice>,
}

impl SyntheticDeviceSet {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.devices.iter().find(|d| d.label == label).map(|d| d.embedding.as_slice())
    }
}

/// The mean, `μ ± 2√λ_i u_i` for every principal axis `i` (1-based labels),
/// then `n_random` draws from the Gaussian.
///
/// For a Gaussian the mode coincides with the mean, so no separate mode entry
/// is emitted.
pub fn structured_embeddings<R: Rng + ?Sized>(
    g: &EmbeddingGaussian,
    n_random: usize,
    rng: &mut R,
) -> SyntheticDeviceSet {
    let mut devices = vec![SyntheticDevice { label: "mean".into(), embedding: g.mean.clone() }];
    let (values, axes) = g.principal_axes();
    for (i, (l, u)) in values.iter().zip(&axes).enumerate() {
        let step = 2.0 * l.sqrt();
        let shifted = |sign: f64| g.mean.iter().zip(u).map(|(m, ui)| m + sign * step * ui).collect();
        devices.push(SyntheticDevice { label: format!("plus2sd_axis_{}", i + 1), embedding: shifted(1.0) });
        devices.push(SyntheticDevice { label: format!("minus2sd_axis_{}", i + 1), embedding: shifted(-1.0) });
    }
    for j in 0..n_random {
        devices.push(SyntheticDevice { label: format!("random_{}", j + 1), embedding: sample_embedding(g, rng) });
    }
    SyntheticDeviceSet { devices }
}

/// Principal component model of the embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Principal directions, one orthonormal row each, by descending variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    /// `(x − mean) · componentsᵀ`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape { expected: self.mean.len(), got: x.len() });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x.iter().zip(&self.mean)).map(|(ci, (xi, mi))| ci * (xi - mi)).sum())
            .collect())
    }

    /// Maps projected coordinates back to the embedding space.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.components.len() {
            return Err(Error::Shape { expected: self.components.len(), got: coords.len() });
        }
        let mut out = self.mean.clone();
        for (c, &t) in self.components.iter().zip(coords) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += t * ci;
            }
        }
        Ok(out)
    }
}

pub fn pca_fit(table: &EmbeddingTable, n_components: usize) -> Result<PcaModel> {
    if n_components == 0 || n_components > table.dim() {
        return Err(Error::Config(format!(
            "n_components must be in 1..={}, got {n_components}",
            table.dim()
        )));
    }
    let (mean, cov) = sample_mean_and_covariance(table)?;
    let d = table.dim();
    let total_variance = (0..d).map(|i| cov[i * d + i]).sum();
    let (mut values, vectors) = symmetric_eigen(&cov, d);
    values.iter_mut().for_each(|l| *l = l.max(0.0));
    Ok(PcaModel {
        mean,
        components: vectors.into_iter().take(n_components).collect(),
        explained_variance: values.into_iter().take(n_components).collect(),
        total_variance,
    })
}

pub fn pca_project(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    model.project(x)
}

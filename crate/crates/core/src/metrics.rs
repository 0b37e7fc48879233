//! Image-quality metrics (SSIM, PSNR, cosine similarity) and a Fréchet
//! distance over a pluggable feature embedding.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("images differ in size: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Normalized 11×11 Gaussian window, row-major.
pub fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect()
}

/// Mean structural similarity of two images with values in [0, 1].
///
/// Local statistics use a Gaussian window (11×11, σ = 1.5) at every
/// position where it fits entirely inside the image.
pub fn ssim(a: &[f64], b: &[f64], width: usize) -> Result<f64> {
    same_len(a, b)?;
    if width == 0 || !a.len().is_multiple_of(width) {
        return Err(Error::Shape(format!("{} pixels do not tile width {width}", a.len())));
    }
    let height = a.len() / width;
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::Shape(format!("image {width}x{height} smaller than the SSIM window")));
    }
    let w = gaussian_window();
    let (oh, ow) = (height - SSIM_WINDOW + 1, width - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                let row = (y + ky) * width + x;
                for kx in 0..SSIM_WINDOW {
                    let g = w[ky * SSIM_WINDOW + kx];
                    let (p, q) = (a[row + kx], b[row + kx]);
                    mx += g * p;
                    my += g * q;
                    sxx += g * p * p;
                    syy += g * q * q;
                    sxy += g * p * q;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// Peak signal-to-noise ratio for data range 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either operand is the zero vector (value is then 0).
    pub degenerate: bool,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<Cosine> {
    same_len(a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(Cosine { value: 0.0, degenerate: true });
    }
    Ok(Cosine { value: (dot / (na * nb)).clamp(-1.0, 1.0), degenerate: false })
}

/// Mean and (unbiased) covariance of a set of feature vectors.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        if features.len() < dim + 1 || dim == 0 {
            return Err(Error::SampleSize { required: dim + 1, dim, got: features.len() });
        }
        let n = features.len();
        let data = DMatrix::from_fn(n, dim, |r, c| features[r][c]);
        let mean = data.row_mean().transpose();
        let centered = DMatrix::from_fn(n, dim, |r, c| data[(r, c)] - mean[c]);
        let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
///
/// The trace of the cross term is taken from the eigenvalues of the
/// symmetric matrix `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, with small negative eigenvalues
/// clipped to zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> f64 {
    let s1 = psd_sqrt(&a.cov);
    let mut m = &s1 * &b.cov * &s1;
    m = (&m + m.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let d = (&a.mean - &b.mean).norm_squared();
    (d + a.cov.trace() + b.cov.trace() - 2.0 * cross).max(0.0)
}

/// Embedding applied to flattened images before fitting Gaussians.
#[derive(Debug, Clone)]
pub enum FeatureBackend {
    RawPixels,
    /// Projection onto the top `k` principal axes of a reference set.
    Pca { mean: Vec<f64>, components: DMatrix<f64> },
}

impl FeatureBackend {
    /// Fits a `k`-component PCA on `reference` (row vectors).
    pub fn pca(reference: &[Vec<f64>], k: usize) -> Result<Self> {
        let dim = reference.first().map_or(0, Vec::len);
        if k == 0 || k > dim {
            return Err(Error::Config(format!("PCA needs 1 <= k <= {dim}, got {k}")));
        }
        if reference.len() < 2 {
            return Err(Error::SampleSize { required: 2, dim, got: reference.len() });
        }
        let n = reference.len();
        let mut mean = vec![0.0; dim];
        for r in reference {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n as f64);
        }
        let centered = DMatrix::from_fn(n, dim, |r, c| reference[r][c] - mean[c]);
        let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
        cov = (&cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let components = DMatrix::from_fn(k, dim, |r, c| eig.eigenvectors[(c, order[r])]);
        Ok(FeatureBackend::Pca { mean, components })
    }

    pub fn dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureBackend::RawPixels => input_dim,
            FeatureBackend::Pca { components, .. } => components.nrows(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            FeatureBackend::RawPixels => "raw-pixels".into(),
            FeatureBackend::Pca { components, .. } => format!("pca-{}", components.nrows()),
        }
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureBackend::RawPixels => x.to_vec(),
            FeatureBackend::Pca { mean, components } => {
                let centered = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(v, m)| v - m));
                (components * centered).iter().copied().collect()
            }
        }
    }
}

/// Fréchet distance between two image sets under `backend`.
pub fn fid(real: &[Vec<f64>], generated: &[Vec<f64>], backend: &FeatureBackend) -> Result<f64> {
    let embed = |set: &[Vec<f64>]| -> Vec<Vec<f64>> { set.iter().map(|x| backend.embed(x)).collect() };
    let a = GaussianStats::fit(&embed(real))?;
    let b = GaussianStats::fit(&embed(generated))?;
    Ok(frechet_distance(&a, &b))
}

/// Summary of one metric over a set of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub values: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
        Self { mean, values }
    }
}

/// JSON document emitted by `qinr evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub class: Option<u8>,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// How image pairs were formed for each group of metrics.
    pub protocol: BTreeMap<String, String>,
    /// Keyed `reconstruction.ssim`, `prior.fid`, and so on.
    pub metrics: BTreeMap<String, MetricSummary>,
    pub warnings: Vec<String>,
}

//! Closed-form pieces of the Gaussian-mixture latent model and the
//! pixel-distance uncertainty statistics.
//!
//! Everything here is deterministic given its inputs (and a seed where
//! sampling is involved), so values can be checked against independent
//! estimators and against tensors exported by a trained model.

use rand::Rng;

use crate::calibrate::DistanceField;
use crate::raster::PixelGrid;
use crate::trajgen::seeded_rng;

/// Tolerance on the sum of mixture weights.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MixError {
    #[error("weights must be non-negative and sum to 1 (sum = {0})")]
    NotSimplex(f64),
    #[error("sigma must be strictly positive (index {0})")]
    NonPositiveSigma(usize),
    #[error("top-k of {k} needs at least {k} positive weights, found {positive}")]
    TooFewPositive { k: usize, positive: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("expert index {0} out of range")]
    BadIndex(usize),
    #[error("prior is zero at index {0} where the posterior is positive")]
    SupportViolation(usize),
    #[error("mask has no set cells")]
    EmptyMask,
    #[error("cell ({0}, {1}) is outside the grid")]
    OutOfRange(i64, i64),
    #[error("no distances given")]
    Empty,
}

/// Gaussian mixture over a D-dimensional latent: K experts with weights,
/// means and standard deviations, of which `top_k` are combined.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    mu: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    top_k: usize,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, mu: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, top_k: usize) -> Result<Self, MixError> {
        check_simplex(&weights)?;
        let k = weights.len();
        for v in [&mu, &sigma] {
            if v.len() != k {
                return Err(MixError::Dimension { expected: k, found: v.len() });
            }
        }
        let d = mu.first().map_or(0, Vec::len);
        for (m, s) in mu.iter().zip(&sigma) {
            if m.len() != d || s.len() != d {
                return Err(MixError::Dimension { expected: d, found: m.len().max(s.len()) });
            }
        }
        for (i, s) in sigma.iter().enumerate() {
            if s.iter().any(|&x| !(x > 0.0)) {
                return Err(MixError::NonPositiveSigma(i));
            }
        }
        if top_k == 0 {
            return Err(MixError::ZeroK);
        }
        if top_k > k {
            return Err(MixError::TooFewPositive { k: top_k, positive: k });
        }
        Ok(Self { weights, mu, sigma, top_k })
    }

    pub fn experts(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn mu(&self, c: usize) -> &[f64] {
        &self.mu[c]
    }

    pub fn sigma(&self, c: usize) -> &[f64] {
        &self.sigma[c]
    }
}

fn check_simplex(w: &[f64]) -> Result<(), MixError> {
    let sum: f64 = w.iter().sum();
    if w.is_empty() || w.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(MixError::NotSimplex(sum));
    }
    Ok(())
}

/// Experts chosen for one draw and their renormalized weights ω.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Ascending expert indices.
    pub indices: Vec<usize>,
    /// ω, aligned with `indices`, summing to 1.
    pub weights: Vec<f64>,
}

/// Draw `k` distinct experts without replacement, each draw proportional to
/// the remaining weights, then renormalize the selected weights.
pub fn top_k_select(w: &[f64], k: usize, rng_seed: u64) -> Result<Selection, MixError> {
    top_k_select_with(w, k, &mut seeded_rng(rng_seed))
}

pub fn top_k_select_with<R: Rng>(w: &[f64], k: usize, rng: &mut R) -> Result<Selection, MixError> {
    check_simplex(w)?;
    if k == 0 {
        return Err(MixError::ZeroK);
    }
    let positive = w.iter().filter(|&&x| x > 0.0).count();
    if k > positive {
        return Err(MixError::TooFewPositive { k, positive });
    }
    let mut remaining = w.to_vec();
    let mut indices = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &x) in remaining.iter().enumerate() {
            if x <= 0.0 {
                continue;
            }
            acc += x;
            pick = Some(i);
            if u < acc {
                break;
            }
        }
        let i = pick.expect("at least one positive weight remains");
        indices.push(i);
        remaining[i] = 0.0;
    }
    indices.sort_unstable();
    let sel_sum: f64 = indices.iter().map(|&i| w[i]).sum();
    let weights = indices.iter().map(|&i| w[i] / sel_sum).collect();
    Ok(Selection { indices, weights })
}

/// `z = Σ_c ω_c (μ_c + σ_c ⊙ ε)` with one shared noise vector ε.
pub fn reparameterize(params: &MixtureParams, selected: &Selection, eps: &[f64]) -> Result<Vec<f64>, MixError> {
    let d = params.dim();
    if eps.len() != d {
        return Err(MixError::Dimension { expected: d, found: eps.len() });
    }
    if selected.indices.len() != selected.weights.len() {
        return Err(MixError::Dimension { expected: selected.indices.len(), found: selected.weights.len() });
    }
    let mut z = vec![0.0; d];
    for (&c, &omega) in selected.indices.iter().zip(&selected.weights) {
        if c >= params.experts() {
            return Err(MixError::BadIndex(c));
        }
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += omega * (params.mu[c][j] + params.sigma[c][j] * eps[j]);
        }
    }
    Ok(z)
}

/// KL(N(μ, diag σ²) ‖ N(0, I)) = Σ ½(μ² + σ² − 1 − 2 ln σ).
pub fn kl_diag_gaussian(mu: &[f64], sigma: &[f64]) -> Result<f64, MixError> {
    if mu.len() != sigma.len() {
        return Err(MixError::Dimension { expected: mu.len(), found: sigma.len() });
    }
    let mut kl = 0.0;
    for (i, (&m, &s)) in mu.iter().zip(sigma).enumerate() {
        if !(s > 0.0) {
            return Err(MixError::NonPositiveSigma(i));
        }
        kl += 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln());
    }
    Ok(kl)
}

/// Gradient of [`kl_diag_gaussian`] with respect to μ and ln σ:
/// `∂/∂μ = μ`, `∂/∂ln σ = σ² − 1`.
pub fn kl_diag_gaussian_grad(mu: &[f64], sigma: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MixError> {
    kl_diag_gaussian(mu, sigma)?;
    Ok((mu.to_vec(), sigma.iter().map(|s| s * s - 1.0).collect()))
}

/// KL(w ‖ prior) = Σ w ln(w / prior), with 0 ln 0 = 0.
pub fn categorical_kl(w: &[f64], prior: &[f64]) -> Result<f64, MixError> {
    check_simplex(w)?;
    check_simplex(prior)?;
    if w.len() != prior.len() {
        return Err(MixError::Dimension { expected: w.len(), found: prior.len() });
    }
    let mut kl = 0.0;
    for (i, (&p, &q)) in w.iter().zip(prior).enumerate() {
        if p == 0.0 {
            continue;
        }
        if q <= 0.0 {
            return Err(MixError::SupportViolation(i));
        }
        kl += p * (p / q).ln();
    }
    Ok(kl)
}

/// Uniform prior over `k` experts.
pub fn uniform_prior(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Euclidean pixel distance from `cell` to the nearest set cell of `mask`.
pub fn pixel_dist(cell: (i64, i64), mask: &PixelGrid) -> Result<f64, MixError> {
    pixel_dists(&[cell], mask).map(|d| d[0])
}

/// [`pixel_dist`] for many cells, sharing one distance transform.
pub fn pixel_dists(cells: &[(i64, i64)], mask: &PixelGrid) -> Result<Vec<f64>, MixError> {
    if mask.count_nonzero() == 0 {
        return Err(MixError::EmptyMask);
    }
    let field = DistanceField::of(mask);
    cells.iter().map(|&(c, r)| field.distance(c, r).ok_or(MixError::OutOfRange(c, r))).collect()
}

/// Mean and population variance of pixel distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistStats {
    pub mean: f64,
    pub variance: f64,
}

/// Population mean and variance (divide by n), via Welford's update.
pub fn dist_stats(d: &[f64]) -> Result<DistStats, MixError> {
    if d.is_empty() {
        return Err(MixError::Empty);
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in d.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok(DistStats { mean, variance: (m2 / d.len() as f64).max(0.0) })
}

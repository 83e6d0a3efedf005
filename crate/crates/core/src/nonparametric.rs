//! Nadaraya-Watson regression with a leave-one-out cross-validated
//! bandwidth, and the polynomial calibration that follows it.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::estimation::{mnls_fit, EstimateResult, OptimizerConfig, TruncationPlan};
use crate::inference::sample_sd;
use crate::models::{polynomial, Dataset};

fn kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Leave-one-out CV over the given grid; an empty grid means
    /// [`default_cv_grid`].
    LeaveOneOut(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRegConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KernelRegConfig {
    fn default() -> Self {
        Self { bandwidth: Bandwidth::LeaveOneOut(Vec::new()) }
    }
}

impl KernelRegConfig {
    pub fn resolve(&self, data: &Dataset) -> Result<f64> {
        match &self.bandwidth {
            Bandwidth::Fixed(h) if *h > 0.0 && h.is_finite() => Ok(*h),
            Bandwidth::Fixed(h) => Err(domain(format!("bandwidth must be positive, got {h}"))),
            Bandwidth::LeaveOneOut(g) if g.is_empty() => cv_bandwidth(data, &default_cv_grid(&data.x)?),
            Bandwidth::LeaveOneOut(g) => cv_bandwidth(data, g),
        }
    }
}

/// m̂(x0) = Σ K((X_t - x0)/h) Y_t / Σ K((X_t - x0)/h) with a Gaussian K.
pub fn nadaraya_watson(x0: f64, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(domain(format!("bandwidth must be positive, got {h}")));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let w = kernel((xi - x0) / h);
        num += w * yi;
        den += w;
    }
    if !(den > 0.0) {
        return Err(Error::Evaluation(format!("no local data at x = {x0} with bandwidth {h}")));
    }
    Ok(num / den)
}

pub fn kernel_regression(x0: f64, data: &Dataset, cfg: &KernelRegConfig) -> Result<f64> {
    if data.n() < 2 {
        return Err(domain("kernel regression needs at least two observations"));
    }
    let h = cfg.resolve(data)?;
    nadaraya_watson(x0, &data.x, &data.y, h)
}

/// Σ_t (Y_t - m̂_{-t}(X_t))², or infinity when some leave-one-out
/// denominator vanishes.
pub fn cv_score(x: &[f64], y: &[f64], h: f64) -> f64 {
    let n = x.len();
    let mut score = 0.0;
    for t in 0..n {
        let (mut num, mut den) = (0.0, 0.0);
        for s in 0..n {
            if s != t {
                let w = kernel((x[s] - x[t]) / h);
                num += w * y[s];
                den += w;
            }
        }
        if !(den > 0.0) {
            return f64::INFINITY;
        }
        let r = y[t] - num / den;
        score += r * r;
    }
    score
}

/// The grid point minimising the leave-one-out score; ties go to the
/// smallest bandwidth.
pub fn cv_bandwidth(data: &Dataset, grid: &[f64]) -> Result<f64> {
    if data.n() < 3 {
        return Err(domain("cross-validation needs at least three observations"));
    }
    if grid.is_empty() || grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(domain("bandwidth grid must be nonempty and positive"));
    }
    let scores: Vec<f64> = grid.par_iter().map(|&h| cv_score(&data.x, &data.y, h)).collect();
    let mut best: Option<(f64, f64)> = None;
    for (&h, &s) in grid.iter().zip(&scores) {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some((h, s)),
            Some((bh, bs)) if s < bs || (s == bs && h < bh) => Some((h, s)),
            keep => keep,
        };
    }
    best.map(|(h, _)| h)
        .ok_or_else(|| Error::Evaluation("every bandwidth leaves some point without local data".into()))
}

/// 30 log-spaced points on [0.05, 5] · s_X · n^{-1/5}.
pub fn default_cv_grid(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(domain("bandwidth grid needs at least two points"));
    }
    let s = sample_sd(x);
    if !(s > 0.0) {
        return Err(domain("bandwidth grid needs a regressor with positive spread"));
    }
    let base = s * (x.len() as f64).powf(-0.2);
    let (lo, hi) = ((0.05 * base).ln(), (5.0 * base).ln());
    Ok((0..30).map(|i| (lo + (hi - lo) * i as f64 / 29.0).exp()).collect())
}

/// (x, m̂(x)) on `points` equally spaced values spanning the sample range.
pub fn fitted_curve(data: &Dataset, h: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(domain("fitted curve needs at least two evaluation points"));
    }
    let lo = data.x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..points)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            nadaraya_watson(v, &data.x, &data.y, h).map(|m| (v, m))
        })
        .collect()
}

/// Truncated least-squares fit of Σ_{k<=degree} θ_k x^k.
pub fn calibrate_polynomial(
    data: &Dataset,
    degree: u32,
    plan: &TruncationPlan,
    cfg: &OptimizerConfig,
) -> Result<EstimateResult> {
    if degree < 1 {
        return Err(domain("polynomial degree must be at least 1"));
    }
    let model = polynomial(degree)?;
    mnls_fit(data, &model, plan, cfg)
}

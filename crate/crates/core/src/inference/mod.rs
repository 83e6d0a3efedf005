//! Plug-in covariance estimates and confidence intervals built from
//! observable quantities: hitting counts of a small set C, occupation ratios
//! and kernel density estimates.
//!
//! Every estimate is reported as a matrix `V` and a scalar rate factor `r`
//! with Var(θ̂) ≈ V / r:
//!
//! | kind        | V                  | r            |
//! |-------------|--------------------|--------------|
//! | Integrable  | σ̂² L̈_C⁻¹          | N_C(n)       |
//! | AsymptHomog | σ̂² (D Λ̂ D)⁻¹      | N_C(n)       |
//! | UnitRoot    | σ̂² J_{g*}⁻¹       | N_C(n) / \|C\| |

mod kde;

pub use kde::{kernel_density, sample_sd, silverman_bandwidth, GaussianKde, KdeConfig};

use nalgebra::DMatrix;

use crate::chains::{count_in, Interval};
use crate::error::{domain, Error, Result};
use crate::estimation::TruncationPlan;
use crate::models::{HomogeneousLimit, RegressionModel};
use crate::normal::normal_quantile;
use crate::quadrature::integrate_vec;

const QUAD_TOL: f64 = 1e-10;
const IDENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    Integrable,
    AsymptHomog,
    UnitRoot,
}

impl std::fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovarianceKind::Integrable => "integrable",
            CovarianceKind::AsymptHomog => "asymptotically_homogeneous",
            CovarianceKind::UnitRoot => "unit_root",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub kind: CovarianceKind,
    pub matrix: DMatrix<f64>,
    pub rate_factor: f64,
    pub ci_level: f64,
    /// Set when an unobservable normaliser was replaced by a proxy.
    pub approximation: bool,
    pub notes: Vec<String>,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Estimated variance of θ̂_j.
    pub fn variance(&self, j: usize) -> f64 {
        self.matrix[(j, j)] / self.rate_factor
    }

    pub fn std_error(&self, j: usize) -> f64 {
        self.variance(j).sqrt()
    }

    /// The estimated covariance of θ̂ itself, V / r.
    pub fn theta_covariance(&self) -> DMatrix<f64> {
        &self.matrix / self.rate_factor
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// θ̂_j ± z_{1-(1-level)/2} · sqrt(V_jj / r).
pub fn confidence_intervals(theta_hat: &[f64], cov: &CovarianceEstimate, level: f64) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if theta_hat.len() != cov.dim() {
        return Err(domain("parameter and covariance dimensions differ"));
    }
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    Ok(theta_hat
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let half = z * cov.std_error(j);
            ConfidenceInterval { level, estimate: t, lower: t - half, upper: t + half }
        })
        .collect())
}

/// Inverse of a symmetric information matrix after Jacobi scaling, so that
/// coordinates of very different magnitude do not trip the rank test.
fn invert_information(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let non_identified = || Error::Inference("non-identified at θ̂: information matrix is singular".into());
    let mut s = vec![0.0; d];
    for j in 0..d {
        let v = a[(j, j)];
        if !(v > 0.0 && v.is_finite()) {
            return Err(non_identified());
        }
        s[j] = 1.0 / v.sqrt();
    }
    let b = DMatrix::from_fn(d, d, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]) * s[i] * s[j]);
    let eig = b.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&l| l <= IDENT_TOL * max) {
        return Err(non_identified());
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let binv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let v = binv[(i, j)] * s[i] * s[j];
        if i == j {
            v
        } else {
            0.5 * (v + binv[(j, i)] * s[i] * s[j])
        }
    }))
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    let trace = m.trace();
    let eig = m.clone().symmetric_eigenvalues();
    if eig.iter().any(|&l| l < -1e-10 * trace.abs()) {
        return Err(Error::Numeric(format!("covariance matrix is not positive semidefinite: eigenvalues {eig:?}")));
    }
    Ok(())
}

fn small_set_visits(x: &[f64], set: &Interval, needed: usize) -> Result<usize> {
    let hits = count_in(x, set);
    if hits < needed {
        return Err(Error::Inference(format!(
            "small set {set} visited {hits} times; at least {needed} are needed"
        )));
    }
    Ok(hits)
}

/// ∫ ġ ġᵀ(x, θ) p(x) dx over [lo, hi], split into panels of width at most
/// `panel` so that adaptive refinement sees the local structure of p.
pub fn integrable_information<P>(
    model: &RegressionModel,
    theta: &[f64],
    density: P,
    lo: f64,
    hi: f64,
    panel: f64,
) -> Result<DMatrix<f64>>
where
    P: Fn(f64) -> f64,
{
    let d = model.dim();
    if !(hi > lo) || !(panel > 0.0) {
        return Err(domain(format!("invalid integration range [{lo}, {hi}] or panel width {panel}")));
    }
    let panels = ((hi - lo) / panel).ceil().max(1.0) as usize;
    let width = (hi - lo) / panels as f64;
    let mut total = vec![0.0; d * d];
    let integrand = |x: f64, out: &mut [f64]| {
        let mut g = vec![0.0; d];
        model.gradient(x, theta, &mut g);
        let p = density(x);
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = g[a] * g[b] * p;
            }
        }
    };
    for k in 0..panels {
        let a = lo + k as f64 * width;
        let b = if k + 1 == panels { hi } else { a + width };
        let part = integrate_vec(&integrand, a, b, d * d, QUAD_TOL)?;
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    Ok(DMatrix::from_row_slice(d, d, &total))
}

/// Plug-in covariance for an integrable regression function.
///
/// p_C = p_s / π_s(C) is estimated by a Gaussian KDE over all X_t with mass
/// 1/N_C(n) per point, which equals the within-C density extended outside C
/// by the occupation ratios. The bandwidth rule is applied to the points in C.
pub fn covariance_integrable(
    x: &[f64],
    model: &RegressionModel,
    theta_hat: &[f64],
    sigma2: f64,
    set: &Interval,
    kde: KdeConfig,
) -> Result<CovarianceEstimate> {
    if !model.class().is_integrable() {
        return Err(Error::Inference(format!("model '{}' is not in the integrable class", model.name())));
    }
    let d = model.dim();
    let hits = small_set_visits(x, set, d + 1)?;
    let within: Vec<f64> = x.iter().copied().filter(|v| set.contains(*v)).collect();
    let h = kde.resolve(&within)?;
    let density = GaussianKde::new(x, h, 1.0 / hits as f64)?;
    let (lo, hi) = density.support();
    let info = integrable_information(model, theta_hat, |v| density.eval(v), lo, hi, 2.0 * h)?;
    let matrix = invert_information(&info)? * sigma2;
    check_psd(&matrix)?;
    Ok(CovarianceEstimate {
        kind: CovarianceKind::Integrable,
        matrix,
        rate_factor: hits as f64,
        ci_level: 0.95,
        approximation: false,
        notes: vec![format!("kernel bandwidth {h:.6e}")],
    })
}

/// Unit bins covering [-M, M] with the point ḣ is evaluated at.
///
/// Positive side: [i, i+1) for i < [M] and [[M], M] last. Negative side:
/// [-i-1, -i) for i < [M] and [-M, -[M]) last, so the bins are disjoint.
pub fn unit_bins(m_n: f64) -> Vec<(f64, Interval)> {
    let k = m_n.floor() as usize;
    let mut bins = Vec::with_capacity(2 * k + 2);
    for i in 0..=k {
        let fi = i as f64;
        let pos = if i < k { Interval::half_open(fi, fi + 1.0) } else { Interval::closed(fi, m_n) };
        let neg = if i < k { Interval::half_open(-fi - 1.0, -fi) } else { Interval::half_open(-m_n, -fi) };
        bins.push((fi / m_n, pos));
        bins.push((-fi / m_n, neg));
    }
    bins
}

/// Λ̂ = Σ_i ḣ(±i/M) ḣᵀ(±i/M) · ratio(B_{i+1}), where `ratio` stands in for
/// π_s(B)/π_s(C).
pub fn lambda_matrix<R>(limit: &dyn HomogeneousLimit, theta: &[f64], dim: usize, m_n: f64, ratio: R) -> DMatrix<f64>
where
    R: Fn(&Interval) -> f64,
{
    let mut out = DMatrix::zeros(dim, dim);
    let mut h = vec![0.0; dim];
    for (point, bin) in unit_bins(m_n) {
        if bin.is_empty() {
            continue;
        }
        let w = ratio(&bin);
        if w == 0.0 {
            continue;
        }
        limit.h_dot(point, theta, &mut h);
        for a in 0..dim {
            for b in 0..dim {
                out[(a, b)] += h[a] * h[b] * w;
            }
        }
    }
    out
}

fn count_sorted(sorted: &[f64], bin: &Interval) -> usize {
    let lo = if bin.lo_closed {
        sorted.partition_point(|&v| v < bin.lo)
    } else {
        sorted.partition_point(|&v| v <= bin.lo)
    };
    let hi = if bin.hi_closed {
        sorted.partition_point(|&v| v <= bin.hi)
    } else {
        sorted.partition_point(|&v| v < bin.hi)
    };
    hi.saturating_sub(lo)
}

fn require_limit(model: &RegressionModel) -> Result<&dyn HomogeneousLimit> {
    model.class().homogeneous_limit().ok_or_else(|| {
        Error::Inference(format!("model '{}' carries no asymptotically homogeneous metadata", model.name()))
    })
}

fn order_matrix(limit: &dyn HomogeneousLimit, m_n: f64, d: usize) -> Vec<f64> {
    let mut k = vec![0.0; d];
    limit.kappa_dot(m_n, &mut k);
    k
}

/// Plug-in covariance for an asymptotically homogeneous regression function
/// fitted on the truncated sample: J = D Λ̂ D with D = diag(κ̇(M_n)) and Λ̂
/// built from occupation ratios over unit bins.
pub fn covariance_ah(
    x: &[f64],
    model: &RegressionModel,
    theta_hat: &[f64],
    sigma2: f64,
    plan: &TruncationPlan,
    set: &Interval,
) -> Result<CovarianceEstimate> {
    let limit = require_limit(model)?;
    let d = model.dim();
    if !(plan.m_n > 0.0) {
        return Err(domain("asymptotically homogeneous inference needs M_n > 0"));
    }
    let hits = small_set_visits(x, set, 1)?;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lambda = lambda_matrix(limit, theta_hat, d, plan.m_n, |b| count_sorted(&sorted, b) as f64 / hits as f64);
    if lambda.iter().all(|&v| v == 0.0) {
        return Err(Error::Inference("zero occupation in every bin of [-M_n, M_n]".into()));
    }
    let k = order_matrix(limit, plan.m_n, d);
    let j = DMatrix::from_fn(d, d, |a, b| k[a] * lambda[(a, b)] * k[b]);
    let matrix = invert_information(&j)? * sigma2;
    check_psd(&matrix)?;
    let mut notes = Vec::new();
    let approximation = d > 1;
    if approximation {
        notes.push("coefficients use their own homogeneous orders; lower-order remainder terms are ignored".into());
    }
    Ok(CovarianceEstimate { kind: CovarianceKind::AsymptHomog, matrix, rate_factor: hits as f64, ci_level: 0.95, approximation, notes })
}

#[derive(Debug, Clone)]
pub struct JgStar {
    pub matrix: DMatrix<f64>,
    pub singular: bool,
}

/// J_{g*} = D · M_n ∫_{-1}^{1} ḣ ḣᵀ(x, θ) dx · D with D = diag(κ̇(M_n)).
pub fn j_gstar(model: &RegressionModel, theta: &[f64], m_n: f64) -> Result<JgStar> {
    let limit = require_limit(model)?;
    let d = model.dim();
    let integral = integrate_vec(
        |x, out| {
            let mut h = vec![0.0; d];
            limit.h_dot(x, theta, &mut h);
            for a in 0..d {
                for b in 0..d {
                    out[a * d + b] = h[a] * h[b];
                }
            }
        },
        -1.0,
        1.0,
        d * d,
        QUAD_TOL,
    )?;
    let k = order_matrix(limit, m_n, d);
    let matrix = DMatrix::from_fn(d, d, |a, b| k[a] * m_n * integral[a * d + b] * k[b]);
    let singular = invert_information(&matrix).is_err();
    Ok(JgStar { matrix, singular })
}

/// Covariance for the log-volatility fit with a unit-root regressor. The
/// unobservable N_ε(n) is proxied by N_C(n)/|C|.
pub fn covariance_unit_root(
    x: &[f64],
    model: &RegressionModel,
    theta_hat: &[f64],
    sigma2: f64,
    plan: &TruncationPlan,
    set: &Interval,
) -> Result<CovarianceEstimate> {
    if !(set.length() > 0.0 && set.is_finite()) {
        return Err(domain(format!("small set {set} must have positive finite length")));
    }
    let hits = small_set_visits(x, set, 1)?;
    let j = j_gstar(model, theta_hat, plan.m_n)?;
    if j.singular {
        return Err(Error::Inference("non-identified at θ̂: J_g* is singular".into()));
    }
    let matrix = invert_information(&j.matrix)? * sigma2;
    check_psd(&matrix)?;
    Ok(CovarianceEstimate {
        kind: CovarianceKind::UnitRoot,
        matrix,
        rate_factor: hits as f64 / set.length(),
        ci_level: 0.95,
        approximation: true,
        notes: vec!["N_eps(n) proxied by N_C(n)/|C|".into()],
    })
}

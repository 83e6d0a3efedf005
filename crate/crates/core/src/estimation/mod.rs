//! NLS, truncated (modified) NLS and the two log-transformed volatility
//! losses, all minimised over a compact parameter box.

mod optimizer;
mod truncation;

use std::fmt;

pub use optimizer::{minimize, refine_from, sum_of_squares, Minimum, OptimizerConfig};
pub use truncation::{c_alpha, truncation_level, TruncationPlan};

use crate::chains::{Interval, RecurrenceDiagnostics};
use crate::error::{domain, Error, Result};
use crate::inference::{ConfidenceInterval, CovarianceEstimate};
use crate::models::{Dataset, RegressionModel, VolatilityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Nls,
    Mnls,
    Lnls,
    Lmnls,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Nls, Estimator::Mnls, Estimator::Lnls, Estimator::Lmnls];

    pub fn is_truncated(self) -> bool {
        matches!(self, Estimator::Mnls | Estimator::Lmnls)
    }

    pub fn is_volatility(self) -> bool {
        matches!(self, Estimator::Lnls | Estimator::Lmnls)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Nls => "NLS",
            Estimator::Mnls => "MNLS",
            Estimator::Lnls => "LNLS",
            Estimator::Lmnls => "LMNLS",
        })
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nls" => Ok(Estimator::Nls),
            "mnls" => Ok(Estimator::Mnls),
            "lnls" => Ok(Estimator::Lnls),
            "lmnls" => Ok(Estimator::Lmnls),
            _ => Err(Error::Config(format!("unknown estimator '{s}'; valid: nls, mnls, lnls, lmnls"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub estimator: Estimator,
    pub model: String,
    pub theta_hat: Vec<f64>,
    /// The minimised loss, re-evaluated at `theta_hat`.
    pub loss_value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Mean squared residual over the points entering the loss.
    pub sigma2_hat: f64,
    pub n: usize,
    /// Points retained after truncation (equal to `n` for untruncated losses).
    pub n_effective: usize,
    pub truncation: Option<TruncationPlan>,
    /// ϖ̂ from the joint volatility fit, when ϖ was not supplied.
    pub varpi_hat: Option<f64>,
    pub grid_tie: bool,
    pub finite_difference: bool,
    pub loss_trace: Vec<f64>,
    pub diagnostics: Option<RecurrenceDiagnostics>,
    pub covariance: Option<CovarianceEstimate>,
    pub ci: Option<Vec<ConfidenceInterval>>,
    pub notes: Vec<String>,
}

impl EstimateResult {
    /// Attaches hitting-count diagnostics for the small set `set`, computed
    /// from the regressor sample.
    pub fn with_diagnostics(mut self, x: &[f64], set: Interval) -> Self {
        self.diagnostics = Some(RecurrenceDiagnostics::compute(x, set, &[]));
        self
    }
}

fn fit_core(
    estimator: Estimator,
    model: &RegressionModel,
    x: &[f64],
    y: &[f64],
    n_total: usize,
    cfg: &OptimizerConfig,
) -> Result<EstimateResult> {
    let m = minimize(model, x, y, cfg)?;
    let loss = sum_of_squares(model, x, y, &m.theta);
    if !m.converged {
        log::warn!("{estimator} refinement did not meet the gradient tolerance after {} iterations", m.iterations);
    }
    let mut notes = Vec::new();
    if m.grid_tie {
        notes.push("all grid losses tied; lexicographically smallest grid point used".to_string());
    }
    if model.uses_finite_differences() {
        notes.push("derivatives by central finite differences".to_string());
    }
    Ok(EstimateResult {
        estimator,
        model: model.name().to_string(),
        theta_hat: m.theta,
        loss_value: loss,
        converged: m.converged,
        iterations: m.iterations,
        sigma2_hat: loss / x.len() as f64,
        n: n_total,
        n_effective: x.len(),
        truncation: None,
        varpi_hat: None,
        grid_tie: m.grid_tie,
        finite_difference: model.uses_finite_differences(),
        loss_trace: m.trace,
        diagnostics: None,
        covariance: None,
        ci: None,
        notes,
    })
}

fn check_size(n: usize, d: usize) -> Result<()> {
    if n < d + 1 {
        return Err(domain(format!("need at least {} observations for {d} parameters, got {n}", d + 1)));
    }
    Ok(())
}

fn truncate(x: &[f64], y: &[f64], plan: &TruncationPlan, d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        x.iter().zip(y).filter(|(xi, _)| plan.retains(**xi)).map(|(a, b)| (*a, *b)).unzip();
    if xs.len() < d + 1 {
        return Err(Error::Estimation(format!(
            "truncation removed too many points ({} of {} retained with M_n = {})",
            xs.len(),
            x.len(),
            plan.m_n
        )));
    }
    Ok((xs, ys))
}

/// Minimises L(θ) = Σ (Y_t - g(X_t, θ))².
pub fn nls_fit(data: &Dataset, model: &RegressionModel, cfg: &OptimizerConfig) -> Result<EstimateResult> {
    check_size(data.n(), model.dim())?;
    fit_core(Estimator::Nls, model, &data.x, &data.y, data.n(), cfg)
}

/// Minimises Q(θ) = Σ (Y_t - g(X_t, θ))² 1{|X_t| <= M_n}.
pub fn mnls_fit(
    data: &Dataset,
    model: &RegressionModel,
    plan: &TruncationPlan,
    cfg: &OptimizerConfig,
) -> Result<EstimateResult> {
    check_size(data.n(), model.dim())?;
    let (x, y) = truncate(&data.x, &data.y, plan, model.dim())?;
    let mut r = fit_core(Estimator::Mnls, model, &x, &y, data.n(), cfg)?;
    r.truncation = Some(*plan);
    Ok(r)
}

/// Minimises Σ (ln Y_t² - ln ϖ - ln σ²(X_t, γ))² with ϖ known.
pub fn lnls_fit(data: &Dataset, vol: &VolatilityModel, cfg: &OptimizerConfig) -> Result<EstimateResult> {
    if vol.varpi_known.is_none() {
        return Err(Error::Config(
            "the LNLS loss needs a known varpi; supply one or use the joint LMNLS fit".into(),
        ));
    }
    check_size(data.n(), vol.dim())?;
    let logs = data.log_squared(vol.log_floor)?;
    let mean = vol.mean_model();
    fit_core(Estimator::Lnls, &mean, &logs.x, &logs.y, data.n(), cfg)
}

/// The truncated log-squared loss. Without a known ϖ the loss is minimised
/// jointly over (γ, ln ϖ); `theta_hat` then carries ln ϖ̂ as its last
/// coordinate and `varpi_hat` its exponential.
pub fn lmnls_fit(
    data: &Dataset,
    vol: &VolatilityModel,
    plan: &TruncationPlan,
    cfg: &OptimizerConfig,
) -> Result<EstimateResult> {
    let mean = vol.mean_model();
    check_size(data.n(), mean.dim())?;
    let logs = data.log_squared(vol.log_floor)?;
    let (x, y) = truncate(&logs.x, &logs.y, plan, mean.dim())?;
    let mut r = fit_core(Estimator::Lmnls, &mean, &x, &y, data.n(), cfg)?;
    r.truncation = Some(*plan);
    if vol.varpi_known.is_none() {
        r.varpi_hat = Some(r.theta_hat[mean.dim() - 1].exp());
    }
    Ok(r)
}

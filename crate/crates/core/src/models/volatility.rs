//! Conditional variance families σ²(x, γ) and the log-transformed mean
//! model g_*(x, γ) = ln(ϖ σ²(x, γ)) they induce.

use std::fmt;
use std::sync::Arc;

use super::{FunctionClass, HomogeneousLimit, ParamBox, ParametricFunction, RegressionModel};
use crate::error::{config, Result};

/// Log-variance ln σ²(x, γ) with γ-derivatives. Working on the log scale
/// keeps σ² > 0 by construction.
pub trait VolatilityFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn log_sigma2(&self, x: f64, gamma: &[f64]) -> f64;
    fn grad_log_sigma2(&self, x: f64, gamma: &[f64], out: &mut [f64]);
    fn hess_log_sigma2(&self, x: f64, gamma: &[f64], out: &mut [f64]);
}

/// Bounds for ln ϖ when ϖ is estimated jointly.
pub const LOG_VARPI_BOUNDS: (f64, f64) = (-20.0, 20.0);

#[derive(Clone)]
pub struct VolatilityModel {
    name: String,
    func: Arc<dyn VolatilityFunction>,
    bounds: ParamBox,
    class: FunctionClass,
    pub varpi_known: Option<f64>,
    /// When set, ln Y² is computed as ln max(Y², floor) instead of failing
    /// on a zero observation.
    pub log_floor: Option<f64>,
}

impl fmt::Debug for VolatilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolatilityModel")
            .field("name", &self.name)
            .field("bounds", &self.bounds)
            .field("varpi_known", &self.varpi_known)
            .finish()
    }
}

impl VolatilityModel {
    /// `class` describes ln σ²(x, γ) as a function of x.
    pub fn custom(
        name: impl Into<String>,
        func: Arc<dyn VolatilityFunction>,
        bounds: ParamBox,
        class: FunctionClass,
    ) -> Result<Self> {
        if func.dim() != bounds.dim() {
            return Err(config("volatility model and bounds disagree on dimension"));
        }
        Ok(Self { name: name.into(), func, bounds, class, varpi_known: None, log_floor: None })
    }

    pub fn with_varpi(mut self, varpi: f64) -> Result<Self> {
        if !(varpi.is_finite() && varpi > 0.0) {
            return Err(config(format!("varpi must be positive, got {varpi}")));
        }
        self.varpi_known = Some(varpi);
        Ok(self)
    }

    pub fn with_bounds(mut self, bounds: ParamBox) -> Result<Self> {
        if bounds.dim() != self.dim() {
            return Err(config("volatility bounds have the wrong dimension"));
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    pub fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    pub fn sigma2(&self, x: f64, gamma: &[f64]) -> f64 {
        self.func.log_sigma2(x, gamma).exp()
    }

    pub fn log_sigma2(&self, x: f64, gamma: &[f64]) -> f64 {
        self.func.log_sigma2(x, gamma)
    }

    /// The mean model for ln Y². With ϖ known this is ln ϖ + ln σ²(x, γ)
    /// over γ; otherwise the parameter vector is (γ, ln ϖ).
    pub fn mean_model(&self) -> RegressionModel {
        let joint = self.varpi_known.is_none();
        let func = Arc::new(LogMean {
            inner: self.func.clone(),
            shift: self.varpi_known.map(f64::ln),
        });
        let bounds = if joint {
            let mut lo = self.bounds.lower().to_vec();
            let mut hi = self.bounds.upper().to_vec();
            lo.push(LOG_VARPI_BOUNDS.0);
            hi.push(LOG_VARPI_BOUNDS.1);
            ParamBox::new(lo, hi).expect("valid joint bounds")
        } else {
            self.bounds.clone()
        };
        let class = match &self.class {
            FunctionClass::Integrable => FunctionClass::Integrable,
            FunctionClass::AsymptoticallyHomogeneous(h) => {
                FunctionClass::AsymptoticallyHomogeneous(Arc::new(LogMeanLimit { inner: h.clone(), joint, p: self.dim() }))
            }
        };
        let name = if joint { format!("log_{}_joint", self.name) } else { format!("log_{}", self.name) };
        RegressionModel::custom(name, func, bounds, class).expect("dimensions agree")
    }
}

struct LogMean {
    inner: Arc<dyn VolatilityFunction>,
    shift: Option<f64>,
}

impl LogMean {
    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], f64) {
        match self.shift {
            Some(s) => (theta, s),
            None => {
                let p = self.inner.dim();
                (&theta[..p], theta[p])
            }
        }
    }
}

impl ParametricFunction for LogMean {
    fn dim(&self) -> usize {
        self.inner.dim() + usize::from(self.shift.is_none())
    }

    fn value(&self, x: f64, theta: &[f64]) -> f64 {
        let (gamma, c) = self.split(theta);
        c + self.inner.log_sigma2(x, gamma)
    }

    fn gradient(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        let (gamma, _) = self.split(theta);
        let p = self.inner.dim();
        self.inner.grad_log_sigma2(x, gamma, &mut out[..p]);
        if self.shift.is_none() {
            out[p] = 1.0;
        }
    }

    fn hessian(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        let (gamma, _) = self.split(theta);
        let p = self.inner.dim();
        if self.shift.is_some() {
            self.inner.hess_log_sigma2(x, gamma, out);
            return;
        }
        let d = p + 1;
        let mut inner = vec![0.0; p * p];
        self.inner.hess_log_sigma2(x, gamma, &mut inner);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..p {
            for j in 0..p {
                out[i * d + j] = inner[i * p + j];
            }
        }
    }
}

struct LogMeanLimit {
    inner: Arc<dyn HomogeneousLimit>,
    joint: bool,
    p: usize,
}

impl HomogeneousLimit for LogMeanLimit {
    fn kappa_g(&self, lambda: f64) -> f64 {
        self.inner.kappa_g(lambda)
    }

    fn kappa_dot(&self, lambda: f64, out: &mut [f64]) {
        self.inner.kappa_dot(lambda, &mut out[..self.p]);
        if self.joint {
            out[self.p] = 1.0;
        }
    }

    fn kappa_ddot(&self, lambda: f64) -> f64 {
        self.inner.kappa_ddot(lambda)
    }

    fn h_g(&self, x: f64, theta: &[f64]) -> f64 {
        self.inner.h_g(x, &theta[..self.p])
    }

    fn h_dot(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        self.inner.h_dot(x, &theta[..self.p], &mut out[..self.p]);
        if self.joint {
            out[self.p] = 1.0;
        }
    }
}

/// σ²(x, γ) = exp(2 γ x).
pub struct ExpLinearVolatility;

impl VolatilityFunction for ExpLinearVolatility {
    fn dim(&self) -> usize {
        1
    }

    fn log_sigma2(&self, x: f64, gamma: &[f64]) -> f64 {
        2.0 * gamma[0] * x
    }

    fn grad_log_sigma2(&self, x: f64, _gamma: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x;
    }

    fn hess_log_sigma2(&self, _x: f64, _gamma: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

impl HomogeneousLimit for ExpLinearVolatility {
    fn kappa_g(&self, lambda: f64) -> f64 {
        lambda
    }

    fn kappa_dot(&self, lambda: f64, out: &mut [f64]) {
        out[0] = lambda;
    }

    fn kappa_ddot(&self, _lambda: f64) -> f64 {
        1.0
    }

    fn h_g(&self, x: f64, gamma: &[f64]) -> f64 {
        2.0 * gamma[0] * x
    }

    fn h_dot(&self, x: f64, _gamma: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x;
    }
}

pub const BUILTIN_VOLATILITY: &[&str] = &["exp_linear"];

pub fn builtin_volatility(name: &str) -> Result<VolatilityModel> {
    match name {
        "exp_linear" => {
            let f = Arc::new(ExpLinearVolatility);
            VolatilityModel::custom(name, f.clone(), ParamBox::uniform(1, -5.0, 5.0), FunctionClass::AsymptoticallyHomogeneous(f))
        }
        other => Err(config(format!(
            "unknown volatility model '{other}'; valid names: {}",
            BUILTIN_VOLATILITY.join(", ")
        ))),
    }
}

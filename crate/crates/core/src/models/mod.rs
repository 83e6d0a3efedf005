//! Regression and volatility function families.
//!
//! A [`RegressionModel`] couples a parametric function g(x, θ) and its
//! analytic θ-derivatives with a compact parameter box Θ and the function
//! class that decides which estimator and which inference route apply.

mod dataset;
mod volatility;

use std::fmt;
use std::sync::Arc;

use crate::error::{config, domain, Result};

pub use dataset::{generate_dataset, generate_vol_dataset, Dataset, NoiseLaw, NoiseSpec, Provenance, VolatilityDataset};
pub use volatility::{builtin_volatility, ExpLinearVolatility, BUILTIN_VOLATILITY, VolatilityFunction, VolatilityModel};

/// g(x, θ) with first and second θ-derivatives.
pub trait ParametricFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: f64, theta: &[f64]) -> f64;
    /// Writes ġ(x, θ) into `out` (length `dim`).
    fn gradient(&self, x: f64, theta: &[f64], out: &mut [f64]);
    /// Writes g̈(x, θ) row-major into `out` (length `dim * dim`).
    fn hessian(&self, x: f64, theta: &[f64], out: &mut [f64]);
}

/// Asymptotic orders and limit homogeneous functions of an asymptotically
/// homogeneous family: g(λx, θ) ≈ κ_g(λ) h_g(x, θ) for large λ.
///
/// `kappa_dot` is given per parameter coordinate. For the scalar models the
/// single entry is the usual κ̇_g; for polynomials every coefficient carries
/// its own order so that ḣ_g keeps full rank.
pub trait HomogeneousLimit: Send + Sync {
    fn kappa_g(&self, lambda: f64) -> f64;
    fn kappa_dot(&self, lambda: f64, out: &mut [f64]);
    fn kappa_ddot(&self, lambda: f64) -> f64;
    fn h_g(&self, x: f64, theta: &[f64]) -> f64;
    fn h_dot(&self, x: f64, theta: &[f64], out: &mut [f64]);
}

#[derive(Clone)]
pub enum FunctionClass {
    Integrable,
    AsymptoticallyHomogeneous(Arc<dyn HomogeneousLimit>),
}

impl FunctionClass {
    pub fn is_integrable(&self) -> bool {
        matches!(self, FunctionClass::Integrable)
    }

    pub fn homogeneous_limit(&self) -> Option<&dyn HomogeneousLimit> {
        match self {
            FunctionClass::Integrable => None,
            FunctionClass::AsymptoticallyHomogeneous(h) => Some(h.as_ref()),
        }
    }
}

impl fmt::Debug for FunctionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionClass::Integrable => write!(f, "Integrable"),
            FunctionClass::AsymptoticallyHomogeneous(_) => write!(f, "AsymptoticallyHomogeneous"),
        }
    }
}

/// Compact box Θ = Π [lower_j, upper_j].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(config("parameter box needs matching nonempty lower/upper bounds"));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(config(format!("parameter box coordinate {j}: need finite lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lower: vec![lo; dim], upper: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.lower).zip(&self.upper).all(|((t, lo), hi)| t >= lo && t <= hi)
    }

    pub fn is_interior(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.lower).zip(&self.upper).all(|((t, lo), hi)| t > lo && t < hi)
    }

    pub fn project(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *t = t.clamp(*lo, *hi);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

impl fmt::Display for ParamBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.lower.iter().zip(&self.upper).map(|(a, b)| format!("{a}:{b}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl std::str::FromStr for ParamBox {
    type Err = crate::Error;

    /// `lo:hi[,lo:hi...]`
    fn from_str(s: &str) -> Result<Self> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for part in s.split(',') {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| config(format!("bound '{part}' is not lo:hi")))?;
            let parse = |v: &str| {
                v.trim().parse::<f64>().map_err(|_| config(format!("cannot parse bound '{v}'")))
            };
            lower.push(parse(a)?);
            upper.push(parse(b)?);
        }
        ParamBox::new(lower, upper)
    }
}

#[derive(Clone)]
pub struct RegressionModel {
    name: String,
    func: Arc<dyn ParametricFunction>,
    bounds: ParamBox,
    class: FunctionClass,
    finite_difference: bool,
}

impl fmt::Debug for RegressionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegressionModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("bounds", &self.bounds)
            .field("class", &self.class)
            .field("finite_difference", &self.finite_difference)
            .finish()
    }
}

impl RegressionModel {
    /// A model with user-supplied analytic derivatives.
    pub fn custom(
        name: impl Into<String>,
        func: Arc<dyn ParametricFunction>,
        bounds: ParamBox,
        class: FunctionClass,
    ) -> Result<Self> {
        if func.dim() != bounds.dim() {
            return Err(config(format!(
                "model has {} parameters, bounds have {}",
                func.dim(),
                bounds.dim()
            )));
        }
        Ok(Self { name: name.into(), func, bounds, class, finite_difference: false })
    }

    /// A model given by its value only; derivatives come from central
    /// differences and results carry a flag saying so.
    pub fn from_value_fn<F>(name: impl Into<String>, dim: usize, value: F, bounds: ParamBox, class: FunctionClass) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        let mut m = Self::custom(name, Arc::new(FiniteDifference { dim, value }), bounds, class)?;
        m.finite_difference = true;
        Ok(m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    pub fn value(&self, x: f64, theta: &[f64]) -> f64 {
        self.func.value(x, theta)
    }

    pub fn gradient(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        self.func.gradient(x, theta, out)
    }

    pub fn hessian(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        self.func.hessian(x, theta, out)
    }

    pub fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    pub fn class(&self) -> &FunctionClass {
        &self.class
    }

    pub fn uses_finite_differences(&self) -> bool {
        self.finite_difference
    }

    pub fn with_bounds(mut self, bounds: ParamBox) -> Result<Self> {
        if bounds.dim() != self.dim() {
            return Err(config(format!(
                "model '{}' has {} parameters, bounds have {}",
                self.name,
                self.dim(),
                bounds.dim()
            )));
        }
        self.bounds = bounds;
        Ok(self)
    }

    /// Errors unless θ lies strictly inside Θ.
    pub fn check_interior(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(domain(format!(
                "model '{}' expects {} parameters, got {}",
                self.name,
                self.dim(),
                theta.len()
            )));
        }
        if !self.bounds.is_interior(theta) {
            return Err(domain(format!(
                "theta {theta:?} is not in the interior of the parameter box {}",
                self.bounds
            )));
        }
        Ok(())
    }
}

pub const BUILTIN_MODELS: &[&str] = &["exp_quadratic", "quadratic", "linear", "cubic_poly", "polynomial:<degree>"];

/// Looks up a builtin model by name. `polynomial:<d>` gives the full
/// polynomial θ_0 + θ_1 x + ... + θ_d x^d.
pub fn builtin_model(name: &str) -> Result<RegressionModel> {
    let unknown = || {
        config(format!("unknown model '{name}'; valid names: {}", BUILTIN_MODELS.join(", ")))
    };
    match name {
        "exp_quadratic" => RegressionModel::custom(
            name,
            Arc::new(ExpQuadratic),
            ParamBox::uniform(1, 0.1, 5.0),
            FunctionClass::Integrable,
        ),
        "quadratic" => Monomials::new(vec![2]).model(name, ParamBox::uniform(1, -5.0, 5.0)),
        "linear" => Monomials::new(vec![1]).model(name, ParamBox::uniform(1, -5.0, 5.0)),
        "cubic_poly" => polynomial(3),
        other => match other.strip_prefix("polynomial:") {
            Some(d) => polynomial(d.trim().parse::<u32>().map_err(|_| unknown())?),
            None => Err(unknown()),
        },
    }
}

/// θ_0 + θ_1 x + ... + θ_d x^d over [-200, 200]^{d+1}.
pub fn polynomial(degree: u32) -> Result<RegressionModel> {
    if degree == 0 {
        return Err(config("polynomial degree must be at least 1"));
    }
    let powers: Vec<i32> = (0..=degree as i32).collect();
    let dim = powers.len();
    let name = if degree == 3 { "cubic_poly".to_string() } else { format!("polynomial:{degree}") };
    Monomials::new(powers).model(name, ParamBox::uniform(dim, -200.0, 200.0))
}

/// g(x, θ) = exp(-θ x²).
pub struct ExpQuadratic;

impl ParametricFunction for ExpQuadratic {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: f64, theta: &[f64]) -> f64 {
        (-theta[0] * x * x).exp()
    }

    fn gradient(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        let x2 = x * x;
        out[0] = -x2 * (-theta[0] * x2).exp();
    }

    fn hessian(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        let x2 = x * x;
        out[0] = x2 * x2 * (-theta[0] * x2).exp();
    }
}

/// g(x, θ) = Σ_j θ_j x^{p_j}: linear in θ, asymptotically homogeneous
/// with leading order λ^{max p}.
#[derive(Debug, Clone)]
pub struct Monomials {
    powers: Vec<i32>,
    leading: usize,
}

impl Monomials {
    pub fn new(powers: Vec<i32>) -> Self {
        let leading = powers
            .iter()
            .enumerate()
            .max_by_key(|(_, p)| **p)
            .map(|(i, _)| i)
            .unwrap_or(0);
        Self { powers, leading }
    }

    fn model(self, name: impl Into<String>, bounds: ParamBox) -> Result<RegressionModel> {
        let me = Arc::new(self);
        RegressionModel::custom(name, me.clone(), bounds, FunctionClass::AsymptoticallyHomogeneous(me))
    }
}

impl ParametricFunction for Monomials {
    fn dim(&self) -> usize {
        self.powers.len()
    }

    fn value(&self, x: f64, theta: &[f64]) -> f64 {
        self.powers.iter().zip(theta).map(|(&p, t)| t * x.powi(p)).sum()
    }

    fn gradient(&self, x: f64, _theta: &[f64], out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.powers) {
            *o = x.powi(p);
        }
    }

    fn hessian(&self, _x: f64, _theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

impl HomogeneousLimit for Monomials {
    fn kappa_g(&self, lambda: f64) -> f64 {
        lambda.powi(self.powers[self.leading])
    }

    fn kappa_dot(&self, lambda: f64, out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.powers) {
            *o = lambda.powi(p);
        }
    }

    // The Hessian vanishes identically; any positive nondecreasing order
    // is admissible.
    fn kappa_ddot(&self, _lambda: f64) -> f64 {
        1.0
    }

    fn h_g(&self, x: f64, theta: &[f64]) -> f64 {
        let p = self.powers[self.leading];
        theta[self.leading] * x.powi(p)
    }

    fn h_dot(&self, x: f64, _theta: &[f64], out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.powers) {
            *o = x.powi(p);
        }
    }
}

struct FiniteDifference<F> {
    dim: usize,
    value: F,
}

fn fd_step(t: f64, scale: f64) -> f64 {
    scale * (1.0 + t.abs())
}

impl<F> ParametricFunction for FiniteDifference<F>
where
    F: Fn(f64, &[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: f64, theta: &[f64]) -> f64 {
        (self.value)(x, theta)
    }

    fn gradient(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        let mut t = theta.to_vec();
        for j in 0..self.dim {
            let h = fd_step(theta[j], 1e-6);
            t[j] = theta[j] + h;
            let up = (self.value)(x, &t);
            t[j] = theta[j] - h;
            let down = (self.value)(x, &t);
            t[j] = theta[j];
            out[j] = (up - down) / (2.0 * h);
        }
    }

    fn hessian(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut t = theta.to_vec();
        for i in 0..d {
            for j in i..d {
                let hi = fd_step(theta[i], 1e-4);
                let hj = fd_step(theta[j], 1e-4);
                let mut eval = |si: f64, sj: f64| {
                    t[i] += si * hi;
                    t[j] += sj * hj;
                    let v = (self.value)(x, &t);
                    t[i] = theta[i];
                    t[j] = theta[j];
                    v
                };
                let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * hi * hj);
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_quadratic_value() {
        let m = builtin_model("exp_quadratic").unwrap();
        assert!((m.value(2.0, &[1.0]) - (-4.0f64).exp()).abs() < 1e-15);
        assert!(((-4.0f64).exp() - 0.0183156).abs() < 1e-7);
        assert!(m.class().is_integrable());
    }

    #[test]
    fn quadratic_gradient_is_x_squared() {
        let m = builtin_model("quadratic").unwrap();
        let mut g = [0.0];
        for &(x, t) in &[(0.3, -2.0), (5.0, 0.5), (-7.0, 4.0)] {
            m.gradient(x, &[t], &mut g);
            assert_eq!(g[0], x * x);
        }
    }

    #[test]
    fn homogeneous_metadata() {
        let m = builtin_model("quadratic").unwrap();
        let h = m.class().homogeneous_limit().unwrap();
        assert_eq!(h.kappa_g(3.0), 9.0);
        assert_eq!(h.h_g(0.5, &[2.0]), 0.5);
        let lin = builtin_model("linear").unwrap();
        let mut k = [0.0];
        lin.class().homogeneous_limit().unwrap().kappa_dot(7.0, &mut k);
        assert_eq!(k[0], 7.0);
        let cubic = builtin_model("cubic_poly").unwrap();
        assert_eq!(cubic.dim(), 4);
        assert_eq!(cubic.class().homogeneous_limit().unwrap().kappa_g(2.0), 8.0);
        assert_eq!(cubic.bounds().upper()[0], 200.0);
    }

    #[test]
    fn unknown_model_lists_names() {
        let err = builtin_model("sine").unwrap_err().to_string();
        assert!(err.contains("exp_quadratic") && err.contains("cubic_poly"), "{err}");
        assert!(builtin_model("polynomial:x").is_err());
        assert_eq!(builtin_model("polynomial:2").unwrap().dim(), 3);
    }

    #[test]
    fn finite_difference_model_is_flagged() {
        let m = RegressionModel::from_value_fn(
            "sin",
            1,
            |x, t| (t[0] * x).sin(),
            ParamBox::uniform(1, -3.0, 3.0),
            FunctionClass::Integrable,
        )
        .unwrap();
        assert!(m.uses_finite_differences());
        let mut g = [0.0];
        m.gradient(0.7, &[1.3], &mut g);
        assert!((g[0] - 0.7 * (1.3f64 * 0.7).cos()).abs() < 1e-8);
        let mut h = [0.0];
        m.hessian(0.7, &[1.3], &mut h);
        assert!((h[0] + 0.49 * (1.3f64 * 0.7).sin()).abs() < 1e-5);
    }

    #[test]
    fn param_box_parsing_and_projection() {
        let b: ParamBox = "0.1:5,-2:2".parse().unwrap();
        assert_eq!(b.dim(), 2);
        let mut t = vec![9.0, -3.0];
        b.project(&mut t);
        assert_eq!(t, vec![5.0, -2.0]);
        assert!(b.contains(&t) && !b.is_interior(&t));
        assert!("1:0".parse::<ParamBox>().is_err());
    }
}

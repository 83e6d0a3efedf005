//! Replication harness for simulation studies.
//!
//! Cell (r, n) draws its chain from `derive_seed(base_seed, [r, n])` and its
//! noise from the noise stream of the same seed, so adding sample sizes or
//! replications leaves existing cells unchanged and results do not depend on
//! the thread count.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::chains::{simulate_chain, ChainSpec};
use crate::error::{config, domain, Error, Result};
use crate::estimation::{lmnls_fit, lnls_fit, mnls_fit, nls_fit, truncation_level, Estimator, OptimizerConfig};
use crate::models::{generate_dataset, generate_vol_dataset, NoiseLaw, NoiseSpec, RegressionModel, VolatilityModel};
use crate::rng::derive_seed;

/// Largest tolerated failure fraction per cell.
const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone)]
pub enum StudyModel {
    Regression { model: RegressionModel, noise: NoiseSpec },
    Volatility { model: VolatilityModel, law: NoiseLaw },
}

impl StudyModel {
    fn name(&self) -> &str {
        match self {
            StudyModel::Regression { model, .. } => model.name(),
            StudyModel::Volatility { model, .. } => model.name(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub label: String,
    pub chain: ChainSpec,
    pub model: StudyModel,
    pub theta0: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub estimators: Vec<Estimator>,
    pub alpha: f64,
    /// β used in M_n; `None` takes the chain's known value.
    pub beta: Option<f64>,
    pub base_seed: u64,
    pub optimizer: OptimizerConfig,
}

impl StudyConfig {
    pub fn new(label: impl Into<String>, chain: ChainSpec, model: StudyModel, theta0: Vec<f64>) -> Self {
        let estimators = match model {
            StudyModel::Regression { .. } => vec![Estimator::Nls, Estimator::Mnls],
            StudyModel::Volatility { .. } => vec![Estimator::Lnls, Estimator::Lmnls],
        };
        Self {
            label: label.into(),
            chain,
            model,
            theta0,
            sample_sizes: vec![500, 1000, 2000],
            replications: 500,
            estimators,
            alpha: 0.01,
            beta: None,
            base_seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn resolved_beta(&self) -> Result<f64> {
        self.beta
            .or_else(|| self.chain.known_beta())
            .ok_or_else(|| config(format!("no known beta for chain {}; set beta explicitly", self.chain)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(config("a study needs at least 2 replications"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config("sample sizes must be nonempty and strictly increasing"));
        }
        if self.sample_sizes[0] < 2 {
            return Err(config("sample sizes must be at least 2"));
        }
        if self.estimators.is_empty() {
            return Err(config("no estimators requested"));
        }
        let vol = matches!(self.model, StudyModel::Volatility { .. });
        if let Some(e) = self.estimators.iter().find(|e| e.is_volatility() != vol) {
            return Err(config(format!("estimator {e} does not apply to model '{}'", self.model.name())));
        }
        self.chain.validate()?;
        if self.chain.dim() != 1 {
            return Err(config("studies need a scalar regressor chain"));
        }
        self.optimizer.validate()?;
        let beta = self.resolved_beta()?;
        if self.estimators.iter().any(|e| e.is_truncated()) {
            truncation_level(self.sample_sizes[0], beta, self.alpha)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub estimator: Estimator,
    pub n: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation of the estimates (divisor R - 1).
    pub se: Vec<f64>,
    pub failures: usize,
    pub successes: usize,
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub label: String,
    pub model: String,
    pub cells: Vec<Cell>,
    /// se(n_min) / se(n_max) on the first coordinate, per estimator.
    pub rate_ratios: Vec<(Estimator, f64)>,
}

impl StudySummary {
    pub fn cell(&self, estimator: Estimator, n: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.estimator == estimator && c.n == n)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.n).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn estimators(&self) -> Vec<Estimator> {
        let mut seen = Vec::new();
        for c in &self.cells {
            if !seen.contains(&c.estimator) {
                seen.push(c.estimator);
            }
        }
        seen
    }
}

/// Runs `f(0..reps)` on the rayon pool and returns results in index order.
pub fn replicate<T, F>(reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..reps).into_par_iter().map(f).collect()
}

fn one_replication(cfg: &StudyConfig, n: usize, r: usize, beta: f64) -> Result<Vec<Result<Vec<f64>>>> {
    let seed = derive_seed(cfg.base_seed, &[r as u64, n as u64]);
    let traj = simulate_chain(&cfg.chain, n, seed)?;
    let plan = if cfg.estimators.iter().any(|e| e.is_truncated()) {
        Some(truncation_level(n, beta, cfg.alpha)?)
    } else {
        None
    };
    let opt = &cfg.optimizer;
    match &cfg.model {
        StudyModel::Regression { model, noise } => {
            let data = generate_dataset(&traj, model, &cfg.theta0, *noise, seed)?;
            Ok(cfg
                .estimators
                .iter()
                .map(|e| {
                    let fit = match e {
                        Estimator::Nls => nls_fit(&data, model, opt),
                        _ => mnls_fit(&data, model, plan.as_ref().expect("plan"), opt),
                    };
                    fit.map(|f| f.theta_hat)
                })
                .collect())
        }
        StudyModel::Volatility { model, law } => {
            let vd = generate_vol_dataset(&traj, model, &cfg.theta0, *law, seed)?;
            Ok(cfg
                .estimators
                .iter()
                .map(|e| {
                    let fit = match e {
                        Estimator::Lnls if model.varpi_known.is_none() => {
                            model.clone().with_varpi(law.varpi()).and_then(|m| lnls_fit(&vd.data, &m, opt))
                        }
                        Estimator::Lnls => lnls_fit(&vd.data, model, opt),
                        _ => lmnls_fit(&vd.data, model, plan.as_ref().expect("plan"), opt),
                    };
                    fit.map(|f| f.theta_hat)
                })
                .collect())
        }
    }
}

fn moments(estimates: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = estimates[0].len();
    let k = estimates.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| estimates.iter().map(|e| e[j]).sum::<f64>() / k).collect();
    let se = (0..d)
        .map(|j| {
            if estimates.len() < 2 {
                return 0.0;
            }
            (estimates.iter().map(|e| (e[j] - mean[j]).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        })
        .collect();
    (mean, se)
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudySummary> {
    cfg.validate()?;
    let beta = cfg.resolved_beta()?;
    let mut cells = Vec::new();
    for &n in &cfg.sample_sizes {
        let reps = replicate(cfg.replications, |r| one_replication(cfg, n, r, beta));
        let reps: Vec<Vec<Result<Vec<f64>>>> = reps.into_iter().collect::<Result<_>>()?;
        for (k, &est) in cfg.estimators.iter().enumerate() {
            let mut estimates = Vec::with_capacity(cfg.replications);
            let mut first_error = None;
            for rep in &reps {
                match &rep[k] {
                    Ok(t) => estimates.push(t.clone()),
                    Err(e) => {
                        first_error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            let failures = cfg.replications - estimates.len();
            if failures as f64 > MAX_FAILURE_FRACTION * cfg.replications as f64 || estimates.is_empty() {
                return Err(Error::Study(format!(
                    "cell ({}, {est}, n = {n}): {failures} of {} replications failed; first error: {}",
                    cfg.label,
                    cfg.replications,
                    first_error.unwrap_or_default()
                )));
            }
            if failures > 0 {
                log::warn!("cell ({}, {est}, n = {n}): {failures} failed replications excluded", cfg.label);
            }
            let (mean, se) = moments(&estimates);
            cells.push(Cell { estimator: est, n, mean, se, failures, successes: estimates.len(), estimates });
        }
    }
    let mut summary = StudySummary { label: cfg.label.clone(), model: cfg.model.name().to_string(), cells, rate_ratios: Vec::new() };
    let (n1, n2) = (cfg.sample_sizes[0], *cfg.sample_sizes.last().unwrap());
    if n1 != n2 {
        for &e in &cfg.estimators {
            if let Ok(r) = rate_ratio(&summary, e, n1, n2) {
                summary.rate_ratios.push((e, r));
            }
        }
    }
    Ok(summary)
}

/// se(n1) / se(n2) on the first coordinate.
pub fn rate_ratio(summary: &StudySummary, estimator: Estimator, n1: usize, n2: usize) -> Result<f64> {
    let get = |n| {
        summary
            .cell(estimator, n)
            .ok_or_else(|| domain(format!("no cell for {estimator} at n = {n} in study '{}'", summary.label)))
    };
    let (a, b) = (get(n1)?, get(n2)?);
    if !(b.se[0] > 0.0) {
        return Err(domain(format!("standard error of {estimator} at n = {n2} is zero")));
    }
    Ok(a.se[0] / b.se[0])
}

/// Formats a "mean (se)" cell; small standard errors use scientific notation.
pub fn format_cell(mean: f64, se: f64) -> String {
    if se != 0.0 && se.abs() < 1e-3 {
        let exp = se.abs().log10().floor() as i32;
        let mant = se / 10f64.powi(exp);
        // rounding can carry the mantissa to 10
        let (mant, exp) = if (mant * 1e4).round() / 1e4 >= 10.0 { (mant / 10.0, exp + 1) } else { (mant, exp) };
        format!("{mean:.4} ({mant:.4}e{exp})")
    } else {
        format!("{mean:.4} ({se:.4})")
    }
}

fn coordinate_label(est: Estimator, j: usize, d: usize) -> String {
    if d == 1 {
        est.to_string()
    } else {
        format!("{est}:theta{}", j + 1)
    }
}

/// One row per (study, estimator, coordinate), one column per sample size.
pub fn render_table(summaries: &[StudySummary]) -> String {
    let sizes: Vec<usize> = summaries.iter().flat_map(|s| s.sizes()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut out = String::from("case,estimator");
    for n in &sizes {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for s in summaries {
        for est in s.estimators() {
            let d = s.cells.iter().find(|c| c.estimator == est).map_or(1, |c| c.mean.len());
            for j in 0..d {
                let _ = write!(out, "{},{}", s.label, coordinate_label(est, j, d));
                for &n in &sizes {
                    match s.cell(est, n) {
                        Some(c) => {
                            let _ = write!(out, ",{}", format_cell(c.mean[j], c.se[j]));
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn render_ratios(summaries: &[StudySummary]) -> String {
    let mut out = String::from("case,estimator,n1,n2,se_ratio\n");
    for s in summaries {
        let sizes = s.sizes();
        if sizes.len() < 2 {
            continue;
        }
        let (n1, n2) = (sizes[0], sizes[sizes.len() - 1]);
        for (e, r) in &s.rate_ratios {
            let _ = writeln!(out, "{},{e},{n1},{n2},{r:.6}", s.label);
        }
    }
    out
}

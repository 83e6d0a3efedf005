//! Flat `key = value` study configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear
//! once; unknown keys are rejected. List values are comma separated, except
//! `chains` and `labels`, which are separated by `;` because chain
//! specifications themselves contain commas.

use std::collections::BTreeMap;

use crate::chains::ChainSpec;
use crate::error::{Error, Result};
use crate::estimation::{Estimator, OptimizerConfig};
use crate::models::{builtin_model, builtin_volatility, NoiseLaw, NoiseSpec, ParamBox, BUILTIN_VOLATILITY};
use crate::montecarlo::{StudyConfig, StudyModel};

pub const STUDY_KEYS: &[&str] = &[
    "chains",
    "labels",
    "model",
    "theta0",
    "theta_bounds",
    "noise_sd",
    "noise_law",
    "sizes",
    "reps",
    "estimators",
    "alpha",
    "beta",
    "seed",
    "grid_points",
    "varpi",
];

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, u64)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected key = value, got '{line}'"),
            })?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(Error::Parse { line: line_no, message: "empty key".into() });
            }
            if let Some((_, first)) = entries.get(&k) {
                return Err(Error::Parse { line: line_no, message: format!("duplicate key '{k}' (first set on line {first})") });
            }
            entries.insert(k, (v.trim().to_string(), line_no));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse { line: *line, message: format!("unknown key '{k}'; valid keys: {}", allowed.join(", ")) });
            }
        }
        Ok(())
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Parse { line: *line, message: format!("invalid value for '{key}': {e}") }),
        }
    }

    fn parse_list<T: std::str::FromStr>(&self, key: &str, sep: char) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(sep)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| Error::Parse { line: *line, message: format!("invalid entry '{s}' in '{key}': {e}") }))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn require(&self, key: &str) -> Result<()> {
        if self.entries.contains_key(key) {
            Ok(())
        } else {
            Err(Error::Config(format!("missing required key '{key}'")))
        }
    }
}

/// One [`StudyConfig`] per entry of `chains`, sharing all other settings.
pub fn study_configs_from_str(text: &str) -> Result<Vec<StudyConfig>> {
    let kv = KeyValues::parse(text)?;
    kv.check_keys(STUDY_KEYS)?;
    for k in ["chains", "model", "theta0"] {
        kv.require(k)?;
    }
    let chains: Vec<ChainSpec> = kv.parse_list("chains", ';')?.unwrap_or_default();
    if chains.is_empty() {
        return Err(Error::Config("'chains' lists no chain".into()));
    }
    let labels: Vec<String> = match kv.parse_list::<String>("labels", ';')? {
        Some(l) if l.len() != chains.len() => {
            return Err(Error::Config(format!("{} labels given for {} chains", l.len(), chains.len())))
        }
        Some(l) => l,
        None => chains.iter().map(|c| c.to_string()).collect(),
    };
    let model_name = kv.get("model").unwrap_or_default().to_string();
    let theta0: Vec<f64> = kv.parse_list("theta0", ',')?.unwrap_or_default();
    let bounds: Option<ParamBox> = kv.parse_value("theta_bounds")?;
    let law: NoiseLaw = kv.parse_value("noise_law")?.unwrap_or(NoiseLaw::Gaussian);
    let sd: f64 = kv.parse_value("noise_sd")?.unwrap_or(1.0);
    let varpi: Option<f64> = kv.parse_value("varpi")?;
    let model = if BUILTIN_VOLATILITY.contains(&model_name.as_str()) {
        if kv.get("noise_sd").is_some() {
            return Err(Error::Config("noise_sd does not apply to volatility models (the noise has unit variance)".into()));
        }
        let mut vol = builtin_volatility(&model_name)?;
        if let Some(b) = bounds {
            vol = vol.with_bounds(b)?;
        }
        if let Some(v) = varpi {
            vol = vol.with_varpi(v)?;
        }
        StudyModel::Volatility { model: vol, law }
    } else {
        if varpi.is_some() {
            return Err(Error::Config("varpi applies only to volatility models".into()));
        }
        let mut m = builtin_model(&model_name)?;
        if let Some(b) = bounds {
            m = m.with_bounds(b)?;
        }
        StudyModel::Regression { model: m, noise: NoiseSpec { sd, law } }
    };
    let beta = match kv.get("beta") {
        None | Some("auto") => None,
        Some(_) => kv.parse_value::<f64>("beta")?,
    };
    let mut optimizer = OptimizerConfig::default();
    if let Some(g) = kv.parse_value::<usize>("grid_points")? {
        optimizer.grid_points_per_dim = g;
    }
    let mut out = Vec::with_capacity(chains.len());
    for (chain, label) in chains.into_iter().zip(labels) {
        let mut c = StudyConfig::new(label, chain, model.clone(), theta0.clone());
        if let Some(s) = kv.parse_list("sizes", ',')? {
            c.sample_sizes = s;
        }
        if let Some(r) = kv.parse_value("reps")? {
            c.replications = r;
        }
        if let Some(e) = kv.parse_list::<Estimator>("estimators", ',')? {
            c.estimators = e;
        }
        if let Some(a) = kv.parse_value("alpha")? {
            c.alpha = a;
        }
        c.beta = beta;
        if let Some(s) = kv.parse_value("seed")? {
            c.base_seed = s;
        }
        c.optimizer = optimizer;
        c.validate()?;
        out.push(c);
    }
    Ok(out)
}

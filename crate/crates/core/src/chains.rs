//! Chain generators and observable recurrence diagnostics.
//!
//! Hitting counts N_C(n) = #{1 <= t <= n : X_t in C} are the observable
//! stand-in for the (unobservable) number of regenerations. The initial
//! state X_0 is never counted.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{config, domain, Error, Result};
use crate::rng::{derive_seed, Stream, CHAIN_STREAM};

/// A real interval with independently open or closed endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: true, hi_closed: true }
    }

    /// `[lo, hi)`
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: true, hi_closed: false }
    }

    /// `[-a, a]`
    pub fn symmetric(a: f64) -> Self {
        Self::closed(-a, a)
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Set inclusion, taking endpoint closedness into account.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        if self.is_empty() {
            return true;
        }
        let lo_ok = self.lo > other.lo || (self.lo == other.lo && (other.lo_closed || !self.lo_closed));
        let hi_ok = self.hi < other.hi || (self.hi == other.hi && (other.hi_closed || !self.hi_closed));
        lo_ok && hi_ok
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Chain recursion. Innovations are Gaussian with the chain's
/// `innovation_sd`, except for [`ChainFamily::Renewal`].
#[derive(Debug, Clone, PartialEq)]
pub enum ChainFamily {
    /// X_t = φ X_{t-1} + x_t, |φ| < 1.
    Ar1 { phi: f64 },
    /// X_t = X_{t-1} + x_t.
    RandomWalk,
    /// X_t = φ X_{t-1} 1{X_{t-1} ∈ S} + X_{t-1} 1{X_{t-1} ∉ S} + x_t.
    Tar { phi_inner: f64, threshold: Interval },
    /// X_t = X_{t-1} - 1 if X_{t-1} > 1, otherwise a fresh Pareto(1, β) draw.
    Renewal { beta: f64 },
    /// X_t = A X_{t-1} + b + x_t with `a` stored row-major.
    Var1 { a: Vec<f64>, b: Vec<f64> },
    /// X_t = X_{t-1} + Σ_j φ_j ε_{t-j}, ε_t = ρ ε_{t-1} + v_t.
    UnitRootLinear { ma_weights: Vec<f64>, innovation_ar: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub family: ChainFamily,
    pub innovation_sd: f64,
    pub initial_state: Option<Vec<f64>>,
}

const UNIT_CIRCLE_TOL: f64 = 1e-9;

impl ChainSpec {
    pub fn new(family: ChainFamily) -> Self {
        Self { family, innovation_sd: 1.0, initial_state: None }
    }

    pub fn ar1(phi: f64) -> Self {
        Self::new(ChainFamily::Ar1 { phi })
    }

    pub fn random_walk() -> Self {
        Self::new(ChainFamily::RandomWalk)
    }

    pub fn tar(phi_inner: f64, threshold: Interval) -> Self {
        Self::new(ChainFamily::Tar { phi_inner, threshold })
    }

    pub fn renewal(beta: f64) -> Self {
        Self::new(ChainFamily::Renewal { beta })
    }

    pub fn var1(a: Vec<f64>, b: Vec<f64>) -> Self {
        Self::new(ChainFamily::Var1 { a, b })
    }

    pub fn unit_root(ma_weights: Vec<f64>, innovation_ar: f64) -> Self {
        Self::new(ChainFamily::UnitRootLinear { ma_weights, innovation_ar })
    }

    pub fn with_innovation_sd(mut self, sd: f64) -> Self {
        self.innovation_sd = sd;
        self
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = Some(x0);
        self
    }

    /// State dimension q (1 for every scalar family).
    pub fn dim(&self) -> usize {
        match &self.family {
            ChainFamily::Var1 { b, .. } => b.len(),
            _ => 1,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            ChainFamily::Ar1 { .. } => "ar1",
            ChainFamily::RandomWalk => "random_walk",
            ChainFamily::Tar { .. } => "tar",
            ChainFamily::Renewal { .. } => "renewal",
            ChainFamily::Var1 { .. } => "var1",
            ChainFamily::UnitRootLinear { .. } => "unit_root",
        }
    }

    pub fn initial(&self) -> Vec<f64> {
        match &self.initial_state {
            Some(x0) => x0.clone(),
            None => match self.family {
                ChainFamily::Renewal { .. } => vec![1.0],
                _ => vec![0.0; self.dim()],
            },
        }
    }

    /// The recurrence index of the family when it is known in closed form:
    /// 1 for positive recurrent chains, 1/2 for random-walk-like chains and
    /// the tail index for the renewal chain.
    pub fn known_beta(&self) -> Option<f64> {
        match &self.family {
            ChainFamily::Ar1 { .. } => Some(1.0),
            ChainFamily::RandomWalk | ChainFamily::Tar { .. } | ChainFamily::UnitRootLinear { .. } => {
                Some(0.5)
            }
            ChainFamily::Renewal { beta } => Some(*beta),
            ChainFamily::Var1 { a, b } => match unit_eigenvalues(a, b.len()) {
                Ok((0, _)) => Some(1.0),
                Ok((1, _)) => Some(0.5),
                _ => None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.innovation_sd.is_finite() && self.innovation_sd >= 0.0) {
            return Err(config(format!(
                "innovation_sd must be finite and nonnegative, got {}",
                self.innovation_sd
            )));
        }
        match &self.family {
            ChainFamily::Ar1 { phi } => {
                if !(phi.abs() < 1.0) {
                    return Err(config(format!("AR(1) requires |phi| < 1, got phi = {phi}")));
                }
            }
            ChainFamily::RandomWalk => {}
            ChainFamily::Tar { phi_inner, threshold } => {
                if !phi_inner.is_finite() {
                    return Err(config("TAR requires a finite inner coefficient"));
                }
                if threshold.is_empty() || !threshold.is_finite() {
                    return Err(config(format!(
                        "TAR threshold set must be a nonempty compact interval, got {threshold}"
                    )));
                }
            }
            ChainFamily::Renewal { beta } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(config(format!("renewal chain requires 0 < beta < 1, got {beta}")));
                }
            }
            ChainFamily::Var1 { a, b } => {
                let q = b.len();
                if q == 0 || a.len() != q * q {
                    return Err(config(format!(
                        "VAR(1) needs a q x q matrix and a q-vector, got {} matrix entries for q = {q}",
                        a.len()
                    )));
                }
                let (units, explosive) = unit_eigenvalues(a, q)?;
                if explosive > 0 {
                    return Err(config(format!(
                        "VAR(1) matrix has {explosive} eigenvalue(s) outside the unit circle: transient regime"
                    )));
                }
                if units >= 3 {
                    return Err(config(format!(
                        "VAR(1) matrix has {units} eigenvalues on the unit circle: transient regime"
                    )));
                }
                if units == 2 {
                    log::warn!("VAR(1) with two unit eigenvalues may be null recurrent without a beta index, or transient");
                }
            }
            ChainFamily::UnitRootLinear { ma_weights, innovation_ar } => {
                if ma_weights.is_empty() {
                    return Err(config("unit-root chain requires at least one moving-average weight"));
                }
                let total: f64 = ma_weights.iter().sum();
                if total == 0.0 || !total.is_finite() {
                    return Err(config("unit-root chain requires the moving-average weights to have a nonzero finite sum"));
                }
                if !(innovation_ar.abs() < 1.0) {
                    return Err(config(format!(
                        "unit-root innovation AR coefficient must satisfy |rho| < 1, got {innovation_ar}"
                    )));
                }
            }
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != self.dim() {
                return Err(config(format!(
                    "initial state has {} coordinates, chain has {}",
                    x0.len(),
                    self.dim()
                )));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(config("initial state must be finite"));
            }
            if matches!(self.family, ChainFamily::Renewal { .. }) && x0[0] < 0.0 {
                return Err(config("renewal chain requires a nonnegative initial state"));
            }
        }
        Ok(())
    }
}

/// Returns (#eigenvalues on the unit circle, #eigenvalues outside it).
fn unit_eigenvalues(a: &[f64], q: usize) -> Result<(usize, usize)> {
    if a.len() != q * q || q == 0 {
        return Err(config("VAR(1) matrix is not square"));
    }
    let m = DMatrix::from_row_slice(q, q, a);
    let eig = m.complex_eigenvalues();
    let mut units = 0;
    let mut outside = 0;
    for z in eig.iter() {
        let r = z.norm();
        if (r - 1.0).abs() <= UNIT_CIRCLE_TOL {
            units += 1;
        } else if r > 1.0 {
            outside += 1;
        }
    }
    Ok((units, outside))
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("/")
}

impl fmt::Display for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        match &self.family {
            ChainFamily::Ar1 { phi } => parts.push(format!("phi={phi}")),
            ChainFamily::RandomWalk => {}
            ChainFamily::Tar { phi_inner, threshold } => {
                parts.push(format!("phi={phi_inner}"));
                parts.push(format!("lo={}", threshold.lo));
                parts.push(format!("hi={}", threshold.hi));
            }
            ChainFamily::Renewal { beta } => parts.push(format!("beta={beta}")),
            ChainFamily::Var1 { a, b } => {
                parts.push(format!("a={}", join(a)));
                parts.push(format!("b={}", join(b)));
            }
            ChainFamily::UnitRootLinear { ma_weights, innovation_ar } => {
                parts.push(format!("ma={}", join(ma_weights)));
                parts.push(format!("ar={innovation_ar}"));
            }
        }
        if self.innovation_sd != 1.0 {
            parts.push(format!("sd={}", self.innovation_sd));
        }
        if let Some(x0) = &self.initial_state {
            parts.push(format!("x0={}", join(x0)));
        }
        if parts.is_empty() {
            write!(f, "{}", self.family_name())
        } else {
            write!(f, "{}:{}", self.family_name(), parts.join(","))
        }
    }
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split('/')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| config(format!("chain parameter {key}: cannot parse '{v}' as a number")))
        })
        .collect()
}

/// Parses the compact chain syntax `family[:key=value,...]`, e.g.
/// `ar1:phi=0.5`, `tar:phi=0.5,lo=-1,hi=1`, `unit_root:ma=1,ar=0.2,sd=0.866`,
/// `var1:a=1/0/0/0.5,b=0/0`. List values are separated by `/`.
impl FromStr for ChainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s, ""),
        };
        let mut kv = std::collections::BTreeMap::new();
        if !rest.is_empty() {
            for item in rest.split(',') {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| config(format!("chain parameter '{item}' is not key=value")))?;
                if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                    return Err(config(format!("chain parameter '{}' given twice", k.trim())));
                }
            }
        }
        let mut take = |key: &str| kv.remove(key);
        let num = |key: &str, v: Option<String>| -> Result<Option<f64>> {
            v.map(|v| {
                v.parse::<f64>()
                    .map_err(|_| config(format!("chain parameter {key}: cannot parse '{v}' as a number")))
            })
            .transpose()
        };
        let required = |key: &str, v: Option<f64>| {
            v.ok_or_else(|| config(format!("chain '{name}' requires parameter '{key}'")))
        };
        let family = match name {
            "ar1" => ChainFamily::Ar1 { phi: required("phi", num("phi", take("phi"))?)? },
            "random_walk" | "rw" => ChainFamily::RandomWalk,
            "tar" => {
                let phi_inner = required("phi", num("phi", take("phi"))?)?;
                let lo = num("lo", take("lo"))?.unwrap_or(-1.0);
                let hi = num("hi", take("hi"))?.unwrap_or(1.0);
                ChainFamily::Tar { phi_inner, threshold: Interval::closed(lo, hi) }
            }
            "renewal" => ChainFamily::Renewal { beta: required("beta", num("beta", take("beta"))?)? },
            "var1" => {
                let a = take("a").ok_or_else(|| config("chain 'var1' requires parameter 'a'"))?;
                let a = parse_list("a", &a)?;
                let q = (a.len() as f64).sqrt().round() as usize;
                let b = match take("b") {
                    Some(b) => parse_list("b", &b)?,
                    None => vec![0.0; q],
                };
                ChainFamily::Var1 { a, b }
            }
            "unit_root" => {
                let ma = match take("ma") {
                    Some(m) => parse_list("ma", &m)?,
                    None => vec![1.0],
                };
                let ar = num("ar", take("ar"))?.unwrap_or(0.0);
                ChainFamily::UnitRootLinear { ma_weights: ma, innovation_ar: ar }
            }
            other => {
                return Err(config(format!(
                    "unknown chain family '{other}'; valid: ar1, random_walk, tar, renewal, var1, unit_root"
                )))
            }
        };
        let mut spec = ChainSpec::new(family);
        if let Some(sd) = num("sd", take("sd"))? {
            spec.innovation_sd = sd;
        }
        if let Some(x0) = take("x0") {
            spec.initial_state = Some(parse_list("x0", &x0)?);
        }
        if let Some(k) = kv.keys().next() {
            return Err(config(format!("unknown parameter '{k}' for chain '{name}'")));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// A realised path X_0, ..., X_n. Vector states are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    values: Vec<f64>,
    dim: usize,
    spec: Option<ChainSpec>,
    seed: Option<u64>,
}

impl Trajectory {
    /// Wraps an externally observed path. The first entry plays the role
    /// of X_0.
    pub fn from_values(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::Data(format!(
                "trajectory of {} values cannot be split into states of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { values, dim, spec: None, seed: None })
    }

    /// Number of stored states, n + 1.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The number of transitions n.
    pub fn n(&self) -> usize {
        self.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> Option<&ChainSpec> {
        self.spec.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// X_0..X_n of a scalar chain.
    pub fn scalar_values(&self) -> Result<&[f64]> {
        if self.dim != 1 {
            return Err(config(format!(
                "trajectory has {} coordinates; designate one explicitly",
                self.dim
            )));
        }
        Ok(&self.values)
    }

    /// X_1..X_n of a scalar chain (the initial state dropped).
    pub fn observations(&self) -> Result<&[f64]> {
        Ok(&self.scalar_values()?[1..])
    }

    /// Coordinate `j` (zero-based) as its own scalar trajectory.
    pub fn coordinate(&self, j: usize) -> Result<Trajectory> {
        if j >= self.dim {
            return Err(config(format!("coordinate {j} out of range for dimension {}", self.dim)));
        }
        let values = self.values.iter().skip(j).step_by(self.dim).copied().collect();
        Ok(Trajectory { values, dim: 1, spec: self.spec.clone(), seed: self.seed })
    }
}

/// Simulates `n` transitions of `spec` from its initial state.
pub fn simulate_chain(spec: &ChainSpec, n: usize, seed: u64) -> Result<Trajectory> {
    if n == 0 {
        return Err(domain("simulate_chain requires n >= 1"));
    }
    spec.validate()?;
    let q = spec.dim();
    let sd = spec.innovation_sd;
    let mut rng = Stream::new(derive_seed(seed, &[CHAIN_STREAM]));
    let mut values = Vec::with_capacity((n + 1) * q);
    values.extend(spec.initial());
    match &spec.family {
        ChainFamily::Ar1 { phi } => {
            let mut x = values[0];
            for _ in 0..n {
                x = phi * x + sd * rng.standard_normal();
                values.push(x);
            }
        }
        ChainFamily::RandomWalk => {
            let mut x = values[0];
            for _ in 0..n {
                x += sd * rng.standard_normal();
                values.push(x);
            }
        }
        ChainFamily::Tar { phi_inner, threshold } => {
            let mut x = values[0];
            for _ in 0..n {
                let drift = if threshold.contains(x) { phi_inner * x } else { x };
                x = drift + sd * rng.standard_normal();
                values.push(x);
            }
        }
        ChainFamily::Renewal { beta } => {
            let mut x = values[0];
            for _ in 0..n {
                x = if x > 1.0 { x - 1.0 } else { rng.pareto(*beta) };
                values.push(x);
            }
        }
        ChainFamily::Var1 { a, b } => {
            let mut x = values[..q].to_vec();
            let mut next = vec![0.0; q];
            for _ in 0..n {
                for i in 0..q {
                    let ax: f64 = (0..q).map(|j| a[i * q + j] * x[j]).sum();
                    next[i] = ax + b[i] + sd * rng.standard_normal();
                }
                std::mem::swap(&mut x, &mut next);
                values.extend_from_slice(&x);
            }
        }
        ChainFamily::UnitRootLinear { ma_weights, innovation_ar } => {
            // eps[k] holds ε_{t-k}; pre-sample innovations are zero.
            let mut eps = vec![0.0; ma_weights.len()];
            let mut x = values[0];
            for _ in 0..n {
                let fresh = innovation_ar * eps[0] + sd * rng.standard_normal();
                eps.rotate_right(1);
                eps[0] = fresh;
                let increment: f64 = ma_weights.iter().zip(&eps).map(|(w, e)| w * e).sum();
                x += increment;
                values.push(x);
            }
        }
    }
    Ok(Trajectory { values, dim: q, spec: Some(spec.clone()), seed: Some(seed) })
}

/// N_C over a slice of observations (X_1..X_n).
pub fn count_in(observations: &[f64], set: &Interval) -> usize {
    if set.is_empty() {
        return 0;
    }
    observations.iter().filter(|&&x| set.contains(x)).count()
}

/// N_C(n) for a scalar trajectory.
pub fn hitting_count(traj: &Trajectory, set: &Interval) -> Result<usize> {
    Ok(count_in(traj.observations()?, set))
}

/// N_C(n) measured on coordinate `coord` of a (possibly vector) trajectory.
pub fn hitting_count_on(traj: &Trajectory, set: &Interval, coord: usize) -> Result<usize> {
    hitting_count(&traj.coordinate(coord)?, set)
}

/// ln N / ln n.
pub fn beta_from_counts(hits: usize, n: usize) -> Result<f64> {
    if n <= 1 {
        return Err(domain(format!("beta estimate needs n >= 2, got n = {n}")));
    }
    if hits == 0 {
        return Err(Error::Estimation("small set never visited".into()));
    }
    Ok((hits as f64).ln() / (n as f64).ln())
}

pub fn estimate_beta(traj: &Trajectory, set: &Interval) -> Result<f64> {
    beta_from_counts(hitting_count(traj, set)?, traj.n())
}

/// Empirical ratios N_B(n) / N_C(n), keyed by bin.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationRatios(pub Vec<(Interval, f64)>);

impl OccupationRatios {
    pub fn get(&self, bin: &Interval) -> Option<f64> {
        self.0.iter().find(|(b, _)| b == bin).map(|(_, r)| *r)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Interval, f64)> {
        self.0.iter()
    }
}

pub fn occupation_ratios_of(observations: &[f64], set: &Interval, bins: &[Interval]) -> Result<OccupationRatios> {
    let hits = count_in(observations, set);
    if hits == 0 {
        return Err(Error::Estimation(format!("small set {set} never visited")));
    }
    Ok(OccupationRatios(
        bins.iter()
            .map(|b| (*b, count_in(observations, b) as f64 / hits as f64))
            .collect(),
    ))
}

pub fn occupation_ratios(traj: &Trajectory, set: &Interval, bins: &[Interval]) -> Result<OccupationRatios> {
    occupation_ratios_of(traj.observations()?, set, bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceDiagnostics {
    pub small_set: Interval,
    pub hitting_count: usize,
    /// `None` when the small set was never visited or n <= 1.
    pub beta_hat: Option<f64>,
    pub occupation_ratios: OccupationRatios,
}

impl RecurrenceDiagnostics {
    /// Diagnostics over X_1..X_n. The small set itself is always the first
    /// bin, so its ratio is exactly 1 whenever it was visited.
    pub fn compute(observations: &[f64], set: Interval, bins: &[Interval]) -> Self {
        let hits = count_in(observations, &set);
        let beta_hat = beta_from_counts(hits, observations.len()).ok();
        let mut all = vec![set];
        all.extend(bins.iter().filter(|b| **b != set).copied());
        let occupation_ratios = if hits == 0 {
            OccupationRatios(Vec::new())
        } else {
            OccupationRatios(
                all.iter()
                    .map(|b| (*b, count_in(observations, b) as f64 / hits as f64))
                    .collect(),
            )
        };
        Self { small_set: set, hitting_count: hits, beta_hat, occupation_ratios }
    }
}

/// Pilot-run choice of C = [-A, A]: the smallest A on a 0.25 lattice whose
/// visit fraction reaches 5% of the sample.
pub fn default_small_set(observations: &[f64]) -> Interval {
    let n = observations.len();
    let max_abs = observations.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let target = (0.05 * n as f64).ceil() as usize;
    let mut a = 0.25;
    while a < max_abs {
        if count_in(observations, &Interval::symmetric(a)) >= target.max(1) {
            return Interval::symmetric(a);
        }
        a += 0.25;
    }
    Interval::symmetric(a.max(0.25))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_random_walk_stays_at_zero() {
        let spec = ChainSpec::random_walk().with_innovation_sd(0.0);
        let traj = simulate_chain(&spec, 3, 1).unwrap();
        assert_eq!(traj.raw(), &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(traj.len(), 4);
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = ChainSpec::tar(0.5, Interval::symmetric(1.0));
        let a = simulate_chain(&spec, 500, 99).unwrap();
        let b = simulate_chain(&spec, 500, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_chain(&spec, 500, 100).unwrap();
        assert_ne!(a.raw(), c.raw());
    }

    #[test]
    fn hitting_count_skips_initial_state() {
        let traj = Trajectory::from_values(vec![0.0, 0.5, -2.0, 0.3], 1).unwrap();
        assert_eq!(hitting_count(&traj, &Interval::closed(-1.0, 1.0)).unwrap(), 2);
    }

    #[test]
    fn degenerate_and_empty_sets() {
        let traj = simulate_chain(&ChainSpec::random_walk(), 1000, 5).unwrap();
        assert_eq!(hitting_count(&traj, &Interval::closed(0.123, 0.123)).unwrap(), 0);
        assert_eq!(hitting_count(&traj, &Interval::closed(1.0, -1.0)).unwrap(), 0);
        assert_eq!(hitting_count(&traj, &Interval::half_open(1.0, 1.0)).unwrap(), 0);
    }

    #[test]
    fn beta_arithmetic() {
        assert!((beta_from_counts(100, 10_000).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(beta_from_counts(500, 500).unwrap(), 1.0);
        assert!(matches!(beta_from_counts(0, 100), Err(Error::Estimation(_))));
        assert!(matches!(beta_from_counts(3, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn occupation_ratio_edges() {
        let traj = Trajectory::from_values(vec![0.0, 0.5, -2.0, 0.3, 0.9], 1).unwrap();
        let c = Interval::symmetric(1.0);
        let far = Interval::closed(100.0, 200.0);
        let r = occupation_ratios(&traj, &c, &[c, far]).unwrap();
        assert_eq!(r.get(&c), Some(1.0));
        assert_eq!(r.get(&far), Some(0.0));
        let never = Interval::closed(50.0, 60.0);
        assert!(occupation_ratios(&traj, &never, &[c]).is_err());
    }

    #[test]
    fn vector_chain_requires_coordinate() {
        let spec = ChainSpec::var1(vec![1.0, 0.0, 0.0, 0.5], vec![0.0, 0.0]);
        let traj = simulate_chain(&spec, 1000, 3).unwrap();
        assert_eq!(traj.len(), 1001);
        assert!(matches!(hitting_count(&traj, &Interval::symmetric(1.0)), Err(Error::Config(_))));
        assert!(hitting_count_on(&traj, &Interval::symmetric(1.0), 0).unwrap() > 0);
    }

    #[test]
    fn var_transient_regimes_rejected() {
        let three_units = ChainSpec::var1(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
        );
        let err = simulate_chain(&three_units, 10, 1).unwrap_err();
        assert!(err.to_string().contains("transient regime"), "{err}");
        let rotation_plus_unit = ChainSpec::var1(
            vec![0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
        );
        assert!(simulate_chain(&rotation_plus_unit, 10, 1).is_err());
        let explosive = ChainSpec::var1(vec![1.5], vec![0.0]);
        assert!(simulate_chain(&explosive, 10, 1).is_err());
    }

    #[test]
    fn invalid_specs_name_the_violation() {
        assert!(ChainSpec::ar1(1.0).validate().unwrap_err().to_string().contains("|phi| < 1"));
        assert!(ChainSpec::renewal(1.2).validate().unwrap_err().to_string().contains("0 < beta < 1"));
        assert!(ChainSpec::unit_root(vec![1.0, -1.0], 0.0).validate().is_err());
        assert!(ChainSpec::random_walk().with_innovation_sd(-1.0).validate().is_err());
        assert!(simulate_chain(&ChainSpec::random_walk(), 0, 1).is_err());
    }

    #[test]
    fn renewal_chain_counts_down() {
        let traj = simulate_chain(&ChainSpec::renewal(0.5), 2000, 11).unwrap();
        let xs = traj.scalar_values().unwrap();
        for w in xs.windows(2) {
            if w[0] > 1.0 {
                assert!((w[1] - (w[0] - 1.0)).abs() < 1e-12);
            } else {
                assert!(w[1] >= 1.0);
            }
        }
    }

    #[test]
    fn unit_root_with_zero_ar_is_random_walk() {
        let ur = ChainSpec::unit_root(vec![1.0], 0.0);
        let rw = ChainSpec::random_walk();
        let a = simulate_chain(&ur, 200, 8).unwrap();
        let b = simulate_chain(&rw, 200, 8).unwrap();
        for (x, y) in a.raw().iter().zip(b.raw()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn chain_syntax_roundtrip() {
        for s in ["ar1:phi=0.5", "random_walk", "tar:phi=0.5,lo=-1,hi=1", "renewal:beta=0.3",
                  "unit_root:ma=1/0.5,ar=0.2,sd=0.8", "var1:a=1/0/0/0.5,b=0/0"] {
            let spec: ChainSpec = s.parse().unwrap();
            let again: ChainSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again, "{s}");
        }
        assert!("ar1".parse::<ChainSpec>().is_err());
        assert!("ar1:phi=0.5,zeta=1".parse::<ChainSpec>().is_err());
        assert!("brownian".parse::<ChainSpec>().is_err());
    }

    #[test]
    fn subset_relation() {
        let c = Interval::symmetric(1.0);
        assert!(Interval::half_open(0.0, 1.0).is_subset_of(&c));
        assert!(!Interval::closed(0.0, 1.5).is_subset_of(&c));
        assert!(c.is_subset_of(&c));
    }

    #[test]
    fn diagnostics_put_small_set_first() {
        let traj = simulate_chain(&ChainSpec::random_walk(), 5000, 2).unwrap();
        let c = Interval::symmetric(1.0);
        let d = RecurrenceDiagnostics::compute(traj.observations().unwrap(), c, &[Interval::half_open(0.0, 1.0)]);
        assert_eq!(d.occupation_ratios.get(&c), Some(1.0));
        assert!(d.hitting_count <= 5000);
        let b = d.beta_hat.unwrap();
        assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn pilot_small_set_reaches_five_percent() {
        let traj = simulate_chain(&ChainSpec::random_walk(), 4000, 21).unwrap();
        let xs = traj.observations().unwrap();
        let c = default_small_set(xs);
        assert!(count_in(xs, &c) as f64 >= 0.05 * xs.len() as f64);
    }
}

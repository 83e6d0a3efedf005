use super::{RegressionModel, VolatilityModel};
use crate::chains::Trajectory;
use crate::error::{domain, Error, Result};
use crate::rng::{derive_seed, Stream, NOISE_STREAM};

/// Euler-Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLaw {
    Gaussian,
    /// ±1 with equal probability, scaled by the sd. |e| is constant, which
    /// makes the log-transformed noise vanish identically.
    Rademacher,
}

impl NoiseLaw {
    /// ϖ = exp(E ln e²) for a unit-variance draw from this law.
    pub fn varpi(self) -> f64 {
        match self {
            // E ln χ²_1 = ψ(1/2) + ln 2 = -γ_E - ln 2
            NoiseLaw::Gaussian => (-EULER_GAMMA - std::f64::consts::LN_2).exp(),
            NoiseLaw::Rademacher => 1.0,
        }
    }

    fn draw(self, rng: &mut Stream) -> f64 {
        match self {
            NoiseLaw::Gaussian => rng.standard_normal(),
            NoiseLaw::Rademacher => rng.sign(),
        }
    }
}

impl std::str::FromStr for NoiseLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(NoiseLaw::Gaussian),
            "rademacher" => Ok(NoiseLaw::Rademacher),
            other => Err(Error::Config(format!("unknown noise law '{other}'; valid: gaussian, rademacher"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sd: f64,
    pub law: NoiseLaw,
}

impl NoiseSpec {
    pub fn gaussian(sd: f64) -> Self {
        Self { sd, law: NoiseLaw::Gaussian }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub chain: Option<String>,
    pub model: Option<String>,
    pub noise: Option<NoiseSpec>,
    pub source: Option<String>,
}

/// Paired observations (X_t, Y_t), t = 1..n.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Data(format!("x has {} values, y has {}", x.len(), y.len())));
        }
        if x.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y, provenance: Provenance::default() })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// The dataset with Y replaced by ln Y². A zero response is an error
    /// unless `floor` is given, in which case ln max(Y², floor) is used.
    pub fn log_squared(&self, floor: Option<f64>) -> Result<Dataset> {
        let mut y = Vec::with_capacity(self.n());
        for (t, &v) in self.y.iter().enumerate() {
            let sq = v * v;
            let sq = match floor {
                Some(f) => sq.max(f),
                None if sq == 0.0 => {
                    return Err(Error::Data(format!(
                        "Y_{} = 0: log of zero; enable the log floor (e.g. 1e-300) to proceed",
                        t + 1
                    )))
                }
                None => sq,
            };
            y.push(sq.ln());
        }
        Ok(Dataset { x: self.x.clone(), y, provenance: self.provenance.clone() })
    }
}

/// Y_t = g(X_t, θ_0) + e_t. The noise stream is derived from `seed` and is
/// independent of the stream that generated the chain.
pub fn generate_dataset(
    traj: &Trajectory,
    model: &RegressionModel,
    theta0: &[f64],
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    model.check_interior(theta0)?;
    if traj.len() < 2 {
        return Err(domain("dataset generation needs a trajectory with at least one transition"));
    }
    if !(noise.sd.is_finite() && noise.sd >= 0.0) {
        return Err(domain(format!("noise sd must be nonnegative, got {}", noise.sd)));
    }
    let x = traj.observations()?.to_vec();
    let mut rng = Stream::new(derive_seed(seed, &[NOISE_STREAM]));
    let y = x
        .iter()
        .map(|&xt| model.value(xt, theta0) + noise.sd * noise.law.draw(&mut rng))
        .collect();
    Ok(Dataset {
        x,
        y,
        provenance: Provenance {
            seed: Some(seed),
            chain: traj.spec().map(|s| s.to_string()),
            model: Some(model.name().to_string()),
            noise: Some(noise),
            source: None,
        },
    })
}

#[derive(Debug, Clone)]
pub struct VolatilityDataset {
    pub data: Dataset,
    /// ln Y_t².
    pub log_y2: Vec<f64>,
    /// ϖ_0 = exp(E ln e²) of the noise law used.
    pub varpi0: f64,
}

/// Y_t = σ(X_t, γ_0) e_t with unit-variance e_t.
pub fn generate_vol_dataset(
    traj: &Trajectory,
    vol: &VolatilityModel,
    gamma0: &[f64],
    law: NoiseLaw,
    seed: u64,
) -> Result<VolatilityDataset> {
    if gamma0.len() != vol.dim() || !vol.bounds().is_interior(gamma0) {
        return Err(domain(format!("gamma0 {gamma0:?} is not interior to {}", vol.bounds())));
    }
    if traj.len() < 2 {
        return Err(domain("dataset generation needs a trajectory with at least one transition"));
    }
    let x = traj.observations()?.to_vec();
    let mut rng = Stream::new(derive_seed(seed, &[NOISE_STREAM]));
    let mut y = Vec::with_capacity(x.len());
    let mut log_y2 = Vec::with_capacity(x.len());
    for &xt in &x {
        let ls2 = vol.log_sigma2(xt, gamma0);
        let s2 = ls2.exp();
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(domain(format!("sigma^2 = {s2} at x = {xt} is not positive and finite")));
        }
        let e = law.draw(&mut rng);
        y.push(s2.sqrt() * e);
        log_y2.push(ls2 + (e * e).ln());
    }
    Ok(VolatilityDataset {
        data: Dataset {
            x,
            y,
            provenance: Provenance {
                seed: Some(seed),
                chain: traj.spec().map(|s| s.to_string()),
                model: Some(vol.name().to_string()),
                noise: Some(NoiseSpec { sd: 1.0, law }),
                source: None,
            },
        },
        log_y2,
        varpi0: law.varpi(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{simulate_chain, ChainSpec};
    use crate::models::{builtin_model, builtin_volatility};

    #[test]
    fn noiseless_data_is_exact() {
        let traj = simulate_chain(&ChainSpec::ar1(0.5), 200, 4).unwrap();
        let m = builtin_model("exp_quadratic").unwrap();
        let d = generate_dataset(&traj, &m, &[1.0], NoiseSpec::gaussian(0.0), 9).unwrap();
        for (x, y) in d.x.iter().zip(&d.y) {
            assert_eq!(*y, (-x * x).exp());
        }
        assert_eq!(d.n(), 200);
    }

    #[test]
    fn theta_outside_box_is_domain_error() {
        let traj = simulate_chain(&ChainSpec::ar1(0.5), 20, 4).unwrap();
        let m = builtin_model("exp_quadratic").unwrap();
        assert!(matches!(
            generate_dataset(&traj, &m, &[7.0], NoiseSpec::gaussian(0.5), 1),
            Err(Error::Domain(_))
        ));
        assert!(generate_dataset(&traj, &m, &[5.0], NoiseSpec::gaussian(0.5), 1).is_err());
    }

    #[test]
    fn zero_gamma_gives_pure_noise() {
        let traj = simulate_chain(&ChainSpec::random_walk(), 100, 2).unwrap();
        let vol = builtin_volatility("exp_linear").unwrap();
        let v = generate_vol_dataset(&traj, &vol, &[0.0], NoiseLaw::Gaussian, 5).unwrap();
        let mut rng = Stream::new(derive_seed(5, &[NOISE_STREAM]));
        for y in &v.data.y {
            assert_eq!(*y, rng.standard_normal());
        }
        for (y, l) in v.data.y.iter().zip(&v.log_y2) {
            assert!(((y * y).ln() - l).abs() < 1e-12);
        }
    }

    #[test]
    fn log_of_zero_needs_floor() {
        let d = Dataset::new(vec![1.0, 2.0], vec![0.5, 0.0]).unwrap();
        assert!(matches!(d.log_squared(None), Err(Error::Data(_))));
        let floored = d.log_squared(Some(1e-300)).unwrap();
        assert!((floored.y[1] - 1e-300f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn gaussian_varpi_constant() {
        // exp(-γ_E - ln 2), computed independently
        assert!((NoiseLaw::Gaussian.varpi() - 0.280_729_741_783_442_6).abs() < 1e-14);
    }
}

use crate::error::{domain, Result};
use crate::normal::normal_pdf;

/// Kernel mass beyond this many bandwidths is ignored (below 1e-22).
const WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KdeConfig {
    Fixed(f64),
    /// 1.06 · s · n^{-1/5}
    Silverman,
}

impl KdeConfig {
    pub fn resolve(&self, data: &[f64]) -> Result<f64> {
        match *self {
            KdeConfig::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            KdeConfig::Fixed(h) => Err(domain(format!("bandwidth must be positive, got {h}"))),
            KdeConfig::Silverman => silverman_bandwidth(data),
        }
    }
}

pub fn sample_sd(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn silverman_bandwidth(data: &[f64]) -> Result<f64> {
    if data.len() < 2 {
        return Err(domain("the bandwidth rule needs at least two points"));
    }
    let s = sample_sd(data);
    if !(s > 0.0) {
        return Err(domain("the bandwidth rule needs a sample with positive spread"));
    }
    Ok(1.06 * s * (data.len() as f64).powf(-0.2))
}

/// Gaussian kernel density with a configurable total mass: each point
/// contributes `weight` rather than 1/n.
#[derive(Debug, Clone)]
pub struct GaussianKde {
    sorted: Vec<f64>,
    h: f64,
    weight: f64,
}

impl GaussianKde {
    pub fn new(data: &[f64], h: f64, weight: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(domain("kernel density of an empty sample"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(domain(format!("bandwidth must be positive, got {h}")));
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted, h, weight })
    }

    /// The usual density estimate, mass 1.
    pub fn normalized(data: &[f64], h: f64) -> Result<Self> {
        Self::new(data, h, 1.0 / data.len() as f64)
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn support(&self) -> (f64, f64) {
        (self.sorted[0] - WINDOW * self.h, self.sorted[self.sorted.len() - 1] + WINDOW * self.h)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let lo = self.sorted.partition_point(|&v| v < x - WINDOW * self.h);
        let hi = self.sorted.partition_point(|&v| v <= x + WINDOW * self.h);
        let s: f64 = self.sorted[lo..hi].iter().map(|&v| normal_pdf((x - v) / self.h)).sum();
        self.weight * s / self.h
    }
}

pub fn kernel_density(x: f64, data: &[f64], cfg: KdeConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(domain("kernel density of an empty sample"));
    }
    let h = cfg.resolve(data)?;
    Ok(GaussianKde::normalized(data, h)?.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn single_point_peak() {
        let h = 0.7;
        let v = kernel_density(0.0, &[0.0], KdeConfig::Fixed(h)).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI * h * h).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn integrates_to_one() {
        let data = [-1.0, 0.3, 0.5, 2.0, 7.5];
        let kde = GaussianKde::normalized(&data, 0.4).unwrap();
        let (a, b) = kde.support();
        let steps = 20_000;
        let dx = (b - a) / steps as f64;
        let total: f64 = (0..steps).map(|i| kde.eval(a + (i as f64 + 0.5) * dx)).sum::<f64>() * dx;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn normal_sample_at_zero() {
        let mut rng = Stream::new(2024);
        let data: Vec<f64> = (0..100_000).map(|_| rng.standard_normal()).collect();
        let v = kernel_density(0.0, &data, KdeConfig::Silverman).unwrap();
        assert!((v - 0.398_942_280_4).abs() < 0.01, "{v}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kernel_density(0.0, &[], KdeConfig::Fixed(1.0)).is_err());
        assert!(kernel_density(0.0, &[1.0], KdeConfig::Fixed(0.0)).is_err());
        assert!(kernel_density(0.0, &[1.0, 1.0], KdeConfig::Silverman).is_err());
    }
}

//! Truncation levels M_n = C_α n^{1-β} for the modified (truncated) losses.

use crate::error::{domain, Result};
use crate::normal::normal_sf;

/// The c >= 0 solving 2(1 - Φ(c)) = α, i.e. P(sup_{r<=1} B(r) >= c) = α by
/// the reflection principle.
///
/// α = 1 is accepted as the boundary case and returns 0.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if alpha == 1.0 {
        log::warn!("alpha = 1 gives the degenerate truncation constant C_alpha = 0");
        return Ok(0.0);
    }
    let f = |c: f64| 2.0 * normal_sf(c) - alpha;
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPlan {
    pub alpha: f64,
    pub c_alpha: f64,
    pub beta_used: f64,
    pub m_n: f64,
    pub n: usize,
}

impl TruncationPlan {
    /// Whether an observation survives the indicator 1{|x| <= M_n}.
    pub fn retains(&self, x: f64) -> bool {
        x.abs() <= self.m_n
    }
}

/// M_n = C_α n^{1-β}, with the slowly varying factor taken as 1.
pub fn truncation_level(n: usize, beta: f64, alpha: f64) -> Result<TruncationPlan> {
    if n < 2 {
        return Err(domain(format!("truncation level needs n >= 2, got {n}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    let c = c_alpha(alpha)?;
    Ok(TruncationPlan { alpha, c_alpha: c, beta_used: beta, m_n: c * (n as f64).powf(1.0 - beta), n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::normal_quantile;

    /// Independent oracle: bisection on Φ itself, written against the CDF
    /// rather than the survival function.
    fn oracle(alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * (1.0 - crate::normal::normal_cdf(mid)) > alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn reference_constants() {
        let c01 = c_alpha(0.01).unwrap();
        assert!((c01 - 2.5758).abs() < 5e-5, "{c01}");
        assert!((c01 - 2.58).abs() < 0.005);
        let c05 = c_alpha(0.05).unwrap();
        assert!((c05 - oracle(0.05)).abs() < 1e-12);
        assert!((c05 - 1.9600).abs() < 5e-5);
        assert!((c05 - normal_quantile(0.975)).abs() < 1e-12);
    }

    #[test]
    fn boundary_and_domain() {
        assert_eq!(c_alpha(1.0).unwrap(), 0.0);
        assert!(c_alpha(0.0).is_err());
        assert!(c_alpha(1.5).is_err());
        assert!(c_alpha(f64::NAN).is_err());
    }

    #[test]
    fn levels() {
        let p = truncation_level(2000, 0.5, 0.01).unwrap();
        assert!((p.m_n - 115.19).abs() < 0.01, "{}", p.m_n);
        let one = truncation_level(12345, 1.0, 0.01).unwrap();
        assert_eq!(one.m_n, one.c_alpha);
        let tiny = truncation_level(1000, 1e-12, 0.01).unwrap();
        assert!((tiny.m_n / (tiny.c_alpha * 1000.0) - 1.0).abs() < 1e-9);
        assert!(truncation_level(1, 0.5, 0.01).is_err());
        assert!(truncation_level(100, 0.0, 0.01).is_err());
        assert!(truncation_level(100, 0.5, 0.0).is_err());
    }
}

//! Adaptive Simpson quadrature for scalar and vector integrands.

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 48;

/// Integrates a vector-valued `f` over `[a, b]` to absolute tolerance `tol`
/// in max-norm. Each call to `f` must write `dim` values into `out`.
pub fn integrate_vec<F>(f: F, a: f64, b: f64, dim: usize, tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!("quadrature over non-finite range [{a}, {b}]")));
    }
    if a == b {
        return Ok(vec![0.0; dim]);
    }
    let eval = |x: f64| {
        let mut v = vec![0.0; dim];
        f(x, &mut v);
        v
    };
    let fa = eval(a);
    let fb = eval(b);
    let m = 0.5 * (a + b);
    let fm = eval(m);
    let whole = simpson(a, b, &fa, &fm, &fb);
    let mut state = State { evals: 3, worst_depth_hit: false };
    let out = recurse(&eval, a, b, &fa, &fm, &fb, whole, tol, MAX_DEPTH, &mut state);
    if state.worst_depth_hit {
        return Err(Error::Numeric(format!(
            "adaptive Simpson failed to reach tolerance {tol:e} on [{a}, {b}] after {} evaluations",
            state.evals
        )));
    }
    Ok(out)
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, tol).map(|v| v[0])
}

struct State {
    evals: usize,
    worst_depth_hit: bool,
}

fn simpson(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    let h = (b - a) / 6.0;
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((x, y), z)| h * (x + 4.0 * y + z))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn recurse<E>(
    eval: &E,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: Vec<f64>,
    tol: f64,
    depth: usize,
    state: &mut State,
) -> Vec<f64>
where
    E: Fn(f64) -> Vec<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(lm);
    let frm = eval(rm);
    state.evals += 2;
    let left = simpson(a, m, fa, &flm, fm);
    let right = simpson(m, b, fm, &frm, fb);
    let err = left
        .iter()
        .zip(&right)
        .zip(&whole)
        .map(|((l, r), w)| (l + r - w).abs())
        .fold(0.0, f64::max);
    if err <= 15.0 * tol || depth == 0 {
        if depth == 0 && err > 15.0 * tol {
            state.worst_depth_hit = true;
        }
        return left
            .iter()
            .zip(&right)
            .zip(&whole)
            .map(|((l, r), w)| l + r + (l + r - w) / 15.0)
            .collect();
    }
    let mut lv = recurse(eval, a, m, fa, &flm, fm, left, 0.5 * tol, depth - 1, state);
    let rv = recurse(eval, m, b, fm, &frm, fb, right, 0.5 * tol, depth - 1, state);
    for (l, r) in lv.iter_mut().zip(rv) {
        *l += r;
    }
    lv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_moments() {
        assert_abs_diff_eq!(integrate(|x| x * x, -1.0, 1.0, 1e-12).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate(|x| x.powi(4), -1.0, 1.0, 1e-12).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let v = integrate(|x| (-0.5 * x * x).exp(), -12.0, 12.0, 1e-12).unwrap();
        assert_abs_diff_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn vector_integrand() {
        let v = integrate_vec(|x, o| { o[0] = 1.0; o[1] = x; o[2] = x * x }, 0.0, 2.0, 3, 1e-12).unwrap();
        assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], 8.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn nonfinite_range_is_an_error() {
        assert!(integrate(|x| x, 0.0, f64::INFINITY, 1e-8).is_err());
    }
}

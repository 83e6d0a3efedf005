//! Box-constrained least squares: a lexicographic grid scan followed by a
//! projected Levenberg-Marquardt refinement.

use nalgebra::{DMatrix, DVector};

use crate::error::{config, Error, Result};
use crate::models::RegressionModel;

/// Upper bound on the number of grid evaluations; the per-dimension count is
/// reduced for high-dimensional boxes.
const MAX_GRID_POINTS: usize = 500_000;

/// Relative step size below which polishing stops.
const POLISH_STEP: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub grid_points_per_dim: usize,
    pub max_refine_iterations: usize,
    /// Tolerance on the projected gradient norm divided by 1 + |loss|.
    pub gradient_tolerance: f64,
    pub damping_init: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grid_points_per_dim: 25,
            max_refine_iterations: 200,
            gradient_tolerance: 1e-10,
            damping_init: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_dim == 0 || self.max_refine_iterations == 0 {
            return Err(config("optimizer grid size and iteration limit must be positive"));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.damping_init > 0.0) {
            return Err(config("optimizer tolerance and damping must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grid_tie: bool,
    /// Loss after the grid scan and after every accepted refinement step.
    pub trace: Vec<f64>,
}

/// Sum of squared residuals Σ (y_t - g(x_t, θ))².
pub fn sum_of_squares(model: &RegressionModel, x: &[f64], y: &[f64], theta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - model.value(xi, theta);
            r * r
        })
        .sum()
}

pub fn minimize(model: &RegressionModel, x: &[f64], y: &[f64], cfg: &OptimizerConfig) -> Result<Minimum> {
    cfg.validate()?;
    let (start, grid_loss, tie) = grid_scan(model, x, y, cfg.grid_points_per_dim);
    if tie {
        log::warn!("all grid losses are equal; starting from the smallest grid point");
    }
    let mut out = refine_from(model, x, y, &start, cfg)?;
    out.grid_tie = tie;
    if out.trace.first().map_or(true, |&l| l != grid_loss) {
        out.trace.insert(0, grid_loss);
    }
    Ok(out)
}

fn grid_points(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 || lo == hi {
        return vec![0.5 * (lo + hi)];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

/// Evaluates the loss on a product grid in lexicographic order. The first
/// strict minimum wins, which makes ties resolve to the lexicographically
/// smallest θ.
fn grid_scan(model: &RegressionModel, x: &[f64], y: &[f64], per_dim: usize) -> (Vec<f64>, f64, bool) {
    let d = model.dim();
    let mut k = per_dim.max(1);
    while k > 2 && (k as f64).powi(d as i32) > MAX_GRID_POINTS as f64 {
        k -= 1;
    }
    let b = model.bounds();
    let axes: Vec<Vec<f64>> = (0..d).map(|j| grid_points(b.lower()[j], b.upper()[j], k)).collect();
    let mut index = vec![0usize; d];
    let mut theta: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut best = theta.clone();
    let mut best_loss = f64::INFINITY;
    let mut first_loss = None;
    let mut all_equal = true;
    loop {
        let l = sum_of_squares(model, x, y, &theta);
        match first_loss {
            None => first_loss = Some(l),
            Some(f) => {
                if l != f {
                    all_equal = false;
                }
            }
        }
        if l < best_loss {
            best_loss = l;
            best.copy_from_slice(&theta);
        }
        // advance the odometer, last coordinate fastest
        let mut j = d;
        loop {
            if j == 0 {
                return (best, best_loss, all_equal && k.pow(d as u32) > 1);
            }
            j -= 1;
            index[j] += 1;
            if index[j] < axes[j].len() {
                theta[j] = axes[j][index[j]];
                break;
            }
            index[j] = 0;
            theta[j] = axes[j][0];
        }
    }
}

struct Linearization {
    loss: f64,
    /// Jᵀr where J is the Jacobian of g (not of the residual).
    jtr: DVector<f64>,
    jtj: DMatrix<f64>,
    /// Rounding scale of `jtr`: ε (Σ |∂g|·(|r| + |y|) + |JᵀJ|·|θ|) per coordinate.
    jtr_noise: f64,
}

fn linearize(model: &RegressionModel, x: &[f64], y: &[f64], theta: &[f64]) -> Linearization {
    let d = model.dim();
    let mut grad = vec![0.0; d];
    let mut jtr = DVector::zeros(d);
    let mut jtj = DMatrix::<f64>::zeros(d, d);
    let mut noise = vec![0.0; d];
    let mut loss = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - model.value(xi, theta);
        loss += r * r;
        model.gradient(xi, theta, &mut grad);
        for a in 0..d {
            jtr[a] += grad[a] * r;
            noise[a] += grad[a].abs() * (r.abs() + yi.abs());
            for c in 0..=a {
                jtj[(a, c)] += grad[a] * grad[c];
            }
        }
    }
    for a in 0..d {
        for c in 0..a {
            jtj[(c, a)] = jtj[(a, c)];
        }
    }
    // θ itself is only known to ε|θ|, which moves JᵀR by JᵀJ ε|θ|.
    for a in 0..d {
        noise[a] += (0..d).map(|c| jtj[(a, c)].abs() * theta[c].abs()).sum::<f64>();
    }
    let jtr_noise = f64::EPSILON * noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    Linearization { loss, jtr, jtj, jtr_noise }
}

/// Gradient of the loss with components that push outward across an active
/// bound zeroed, i.e. the residual of the box KKT conditions.
fn projected_gradient_norm(model: &RegressionModel, theta: &[f64], jtr: &DVector<f64>) -> f64 {
    let b = model.bounds();
    let mut s = 0.0;
    for j in 0..theta.len() {
        let g = -2.0 * jtr[j];
        let lo = b.lower()[j];
        let hi = b.upper()[j];
        let at_lo = theta[j] <= lo + 1e-12 * (1.0 + lo.abs());
        let at_hi = theta[j] >= hi - 1e-12 * (1.0 + hi.abs());
        let active = (at_lo && g > 0.0) || (at_hi && g < 0.0);
        if !active {
            s += g * g;
        }
    }
    s.sqrt()
}

/// The relative projected gradient is below `tol`, or the gradient is within
/// a small multiple of its own rounding error.
fn kkt_satisfied(model: &RegressionModel, theta: &[f64], lin: &Linearization, tol: f64) -> bool {
    let g = projected_gradient_norm(model, theta, &lin.jtr);
    g / (1.0 + lin.loss.abs()) <= tol || g <= 64.0 * lin.jtr_noise
}

/// L(θ) - L(cand) as Σ (g(cand) - g(θ))·(r(θ) + r(cand)), with a bound on
/// its rounding error from the evaluation of g.
fn loss_reduction(model: &RegressionModel, x: &[f64], y: &[f64], theta: &[f64], cand: &[f64]) -> (f64, f64) {
    let mut red = 0.0;
    let mut noise = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let g0 = model.value(xi, theta);
        let g1 = model.value(xi, cand);
        let (r0, r1) = (yi - g0, yi - g1);
        red += (g1 - g0) * (r0 + r1);
        noise += (g0.abs() + g1.abs()) * (r0.abs() + r1.abs());
    }
    (red, 4.0 * f64::EPSILON * noise)
}

/// Projected Levenberg-Marquardt from `start`. Steps are accepted when they
/// lower the loss or, once the change is below rounding, the projected
/// gradient; the trace is non-increasing up to that rounding.
pub fn refine_from(
    model: &RegressionModel,
    x: &[f64],
    y: &[f64],
    start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Minimum> {
    cfg.validate()?;
    let d = model.dim();
    if start.len() != d {
        return Err(crate::error::domain(format!("start point has {} coordinates, model needs {d}", start.len())));
    }
    let bounds = model.bounds();
    let mut theta = start.to_vec();
    bounds.project(&mut theta);
    let mut lin = linearize(model, x, y, &theta);
    if !lin.loss.is_finite() {
        return Err(Error::Estimation(format!("loss is not finite at the starting point {theta:?}")));
    }
    let mut trace = vec![lin.loss];
    let max_diag = (0..d).map(|j| lin.jtj[(j, j)]).fold(0.0_f64, f64::max);
    // Marquardt scaling: the damping multiplies diag(JᵀJ), so μ is dimensionless.
    let mut mu = cfg.damping_init;
    let mut nu = 2.0;
    let mut converged = kkt_satisfied(model, &theta, &lin, cfg.gradient_tolerance);
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;

    // Past the gradient test, keep polishing while accepted steps still move θ.
    while iterations < cfg.max_refine_iterations && !(converged && last_step <= POLISH_STEP) {
        iterations += 1;
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let v = lin.jtj[(j, j)];
                if v > 0.0 {
                    v
                } else {
                    1e-12 * max_diag.max(1e-300)
                }
            })
            .collect();
        let mut accepted = false;
        let mut stalled = false;
        while !accepted {
            let mut a = lin.jtj.clone();
            for j in 0..d {
                a[(j, j)] += mu * scale[j];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&lin.jtr),
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    if mu > 1e30 {
                        stalled = true;
                        break;
                    }
                    continue;
                }
            };
            let mut cand: Vec<f64> = (0..d).map(|j| theta[j] + step[j]).collect();
            bounds.project(&mut cand);
            let delta = DVector::from_iterator(d, (0..d).map(|j| cand[j] - theta[j]));
            if delta.iter().all(|&v| v == 0.0) {
                stalled = true;
                break;
            }
            let (reduction, noise) = loss_reduction(model, x, y, &theta, &cand);
            let predicted = 2.0 * delta.dot(&lin.jtr) - (delta.transpose() * &lin.jtj * &delta)[(0, 0)];
            // Inside the rounding band of the loss, the gradient decides.
            let mut cand_lin = None;
            let better = if !reduction.is_finite() {
                false
            } else if reduction > noise {
                true
            } else if reduction >= -noise {
                let l = linearize(model, x, y, &cand);
                let shrinks = projected_gradient_norm(model, &cand, &l.jtr)
                    < projected_gradient_norm(model, &theta, &lin.jtr);
                cand_lin = Some(l);
                shrinks
            } else {
                false
            };
            if better {
                let rho = if predicted > 0.0 { reduction / predicted } else { 1.0 };
                mu *= (1.0_f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                last_step = (0..d).map(|j| delta[j].abs() / (1.0 + theta[j].abs())).fold(0.0, f64::max);
                lin = cand_lin.unwrap_or_else(|| linearize(model, x, y, &cand));
                theta = cand;
                trace.push(lin.loss);
                accepted = true;
            } else {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e30 {
                    stalled = true;
                    break;
                }
            }
        }
        converged = kkt_satisfied(model, &theta, &lin, cfg.gradient_tolerance);
        if stalled {
            // No representable descent step remains; the point is optimal up
            // to rounding when the relative gradient is tiny.
            if !converged {
                let rel = projected_gradient_norm(model, &theta, &lin.jtr) / (1.0 + lin.loss.abs());
                converged = rel <= cfg.gradient_tolerance.max(1e3 * f64::EPSILON);
            }
            break;
        }
    }
    check_rank(&lin.jtj)?;
    Ok(Minimum { theta, loss: lin.loss, converged, iterations, grid_tie: false, trace })
}

fn check_rank(jtj: &DMatrix<f64>) -> Result<()> {
    let eig = jtj.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(max > 0.0) || min <= 1e-14 * max {
        return Err(Error::Estimation("rank-deficient design".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_model, ParamBox};

    #[test]
    fn recovers_exact_linear() {
        let m = builtin_model("linear").unwrap();
        let x: Vec<f64> = (1..50).map(|i| (i as f64).sin() * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.7 * v).collect();
        let r = minimize(&m, &x, &y, &OptimizerConfig::default()).unwrap();
        assert!((r.theta[0] - 1.7).abs() < 1e-10);
        assert!(r.converged);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn zero_regressor_is_rank_deficient() {
        let m = builtin_model("linear").unwrap();
        let x = vec![0.0; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let e = minimize(&m, &x, &y, &OptimizerConfig::default()).unwrap_err();
        assert!(e.to_string().contains("rank-deficient design"));
    }

    #[test]
    fn flat_loss_flags_tie() {
        let m = builtin_model("linear").unwrap();
        let x = vec![0.0; 4];
        let (start, _, tie) = grid_scan(&m, &x, &[1.0; 4], 25);
        assert!(tie);
        assert_eq!(start, vec![m.bounds().lower()[0]]);
    }

    #[test]
    fn boundary_solution_passes_kkt() {
        let m = builtin_model("linear").unwrap().with_bounds(ParamBox::uniform(1, 0.0, 1.0)).unwrap();
        let x: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let r = minimize(&m, &x, &y, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.theta[0], 1.0);
        assert!(r.converged);
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::default();
        assert!(c.validate().is_ok());
        c.grid_points_per_dim = 0;
        assert!(c.validate().is_err());
    }
}

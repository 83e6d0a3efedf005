use approx::assert_relative_eq;
use proptest::prelude::*;

use recurrent_nls::chains::{count_in, hitting_count, simulate_chain, ChainSpec, Interval};
use recurrent_nls::estimation::{
    c_alpha, minimize, mnls_fit, nls_fit, refine_from, sum_of_squares, truncation_level, OptimizerConfig,
};
use recurrent_nls::inference::{confidence_intervals, covariance_ah, covariance_integrable, KdeConfig};
use recurrent_nls::models::{builtin_model, builtin_volatility, generate_dataset, Dataset, NoiseSpec, RegressionModel};
use recurrent_nls::nonparametric::{cv_bandwidth, nadaraya_watson};
use recurrent_nls::quadrature::integrate;

fn chain_strategy() -> impl Strategy<Value = ChainSpec> {
    prop_oneof![
        (-0.9..0.9f64).prop_map(ChainSpec::ar1),
        Just(ChainSpec::random_walk()),
        (-0.9..0.9f64).prop_map(|p| ChainSpec::tar(p, Interval::symmetric(1.0))),
        (0.1..0.9f64).prop_map(ChainSpec::renewal),
    ]
}

fn sample(n: usize, seed: u64, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let mut r = recurrent_nls::rng::Stream::new(seed);
    let x: Vec<f64> = (0..n).map(|_| scale * r.standard_normal()).collect();
    let y = x.iter().map(|v| v.sin() + 0.5 * r.standard_normal()).collect();
    (x, y)
}

/// A coarse start grid keeps the four-parameter cubic cheap.
fn small_grid() -> OptimizerConfig {
    OptimizerConfig { grid_points_per_dim: 7, ..OptimizerConfig::default() }
}

fn models() -> Vec<RegressionModel> {
    let mut m: Vec<RegressionModel> =
        ["exp_quadratic", "quadratic", "linear", "cubic_poly"].iter().map(|n| builtin_model(n).unwrap()).collect();
    m.push(builtin_volatility("exp_linear").unwrap().mean_model());
    m
}

fn in_box(model: &RegressionModel, u: &[f64]) -> Vec<f64> {
    let b = model.bounds();
    (0..model.dim()).map(|j| b.lower()[j] + (b.upper()[j] - b.lower()[j]) * u[j]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulation_is_deterministic(spec in chain_strategy(), n in 1usize..400, seed in any::<u64>()) {
        let a = simulate_chain(&spec, n, seed).unwrap();
        let b = simulate_chain(&spec, n, seed).unwrap();
        prop_assert_eq!(a.raw(), b.raw());
        prop_assert_eq!(a.len(), n + 1);
    }

    #[test]
    fn hitting_counts_add_over_partitions(seed in any::<u64>(), cuts in prop::collection::vec(-4.0..4.0f64, 1..6)) {
        let traj = simulate_chain(&ChainSpec::random_walk(), 500, seed).unwrap();
        let mut edges = cuts.clone();
        edges.push(-5.0);
        edges.push(5.0);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let union = Interval::half_open(edges[0], *edges.last().unwrap());
        let total: usize = edges.windows(2).map(|w| hitting_count(&traj, &Interval::half_open(w[0], w[1])).unwrap()).sum();
        prop_assert_eq!(total, hitting_count(&traj, &union).unwrap());
    }

    #[test]
    fn subset_never_has_more_visits(seed in any::<u64>(), a in 0.1..3.0f64, shrink in 0.0..1.0f64) {
        let traj = simulate_chain(&ChainSpec::tar(0.5, Interval::symmetric(1.0)), 400, seed).unwrap();
        let obs = traj.observations().unwrap();
        let c = Interval::symmetric(a);
        let b = Interval::symmetric(a * shrink);
        prop_assert!(count_in(obs, &b) <= count_in(obs, &c));
    }

    #[test]
    fn gradients_match_central_differences(u in prop::collection::vec(0.05..0.95f64, 4), x in -3.0..3.0f64) {
        for model in models() {
            let theta = in_box(&model, &u);
            let d = model.dim();
            let mut g = vec![0.0; d];
            let mut h = vec![0.0; d * d];
            model.gradient(x, &theta, &mut g);
            model.hessian(x, &theta, &mut h);
            for j in 0..d {
                let step = 1e-6 * (1.0 + theta[j].abs());
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += step;
                dn[j] -= step;
                let fd = (model.value(x, &up) - model.value(x, &dn)) / (2.0 * step);
                prop_assert!((g[j] - fd).abs() / g[j].abs().max(1.0) < 1e-5, "{} grad {j}", model.name());
                let mut gu = vec![0.0; d];
                let mut gd = vec![0.0; d];
                model.gradient(x, &up, &mut gu);
                model.gradient(x, &dn, &mut gd);
                for k in 0..d {
                    let fd2 = (gu[k] - gd[k]) / (2.0 * step);
                    prop_assert!((h[k * d + j] - fd2).abs() / h[k * d + j].abs().max(1.0) < 1e-5, "{} hess", model.name());
                }
            }
        }
    }

    #[test]
    fn truncated_loss_is_bounded_by_full_loss(seed in any::<u64>(), t in 0.1..5.0f64, m in 0.0..3.0f64) {
        let model = builtin_model("exp_quadratic").unwrap();
        let (x, y) = sample(200, seed, 2.0);
        let kept: (Vec<f64>, Vec<f64>) = x.iter().zip(&y).filter(|(v, _)| v.abs() <= m).map(|(a, b)| (*a, *b)).unzip();
        prop_assert!(sum_of_squares(&model, &kept.0, &kept.1, &[t]) <= sum_of_squares(&model, &x, &y, &[t]));
    }

    #[test]
    fn refinement_trace_never_increases(seed in any::<u64>()) {
        let model = builtin_model("cubic_poly").unwrap();
        let (x, y) = sample(150, seed, 1.5);
        let m = minimize(&model, &x, &y, &small_grid()).unwrap();
        for w in m.trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", m.trace);
        }
    }

    #[test]
    fn reoptimization_is_stable(seed in any::<u64>(), name in prop::sample::select(vec!["exp_quadratic", "quadratic", "cubic_poly"])) {
        let model = builtin_model(name).unwrap();
        let (x, y) = sample(300, seed, 1.5);
        let cfg = small_grid();
        let m = minimize(&model, &x, &y, &cfg).unwrap();
        let again = refine_from(&model, &x, &y, &m.theta, &cfg).unwrap();
        prop_assert!((again.loss - m.loss).abs() <= 1e-12 * m.loss.max(1.0), "{} vs {}", again.loss, m.loss);
    }

    #[test]
    fn linear_fit_is_the_closed_form(seed in any::<u64>(), n in 20usize..400, scale in 0.1..10.0f64) {
        let (x, y0) = sample(n, seed, scale);
        let y: Vec<f64> = x.iter().zip(&y0).map(|(a, b)| 0.7 * a + b).collect();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let slope = sxy / sxx;
        prop_assume!(slope.abs() < 4.9);
        let fit = nls_fit(&Dataset::new(x, y).unwrap(), &builtin_model("linear").unwrap(), &OptimizerConfig::default()).unwrap();
        prop_assert!((fit.theta_hat[0] - slope).abs() <= 1e-8);
    }

    #[test]
    fn linear_fit_scales_with_response(seed in any::<u64>(), c in 0.05..2.0f64) {
        let (x, y) = sample(200, seed, 3.0);
        let model = builtin_model("linear").unwrap();
        let cfg = OptimizerConfig::default();
        let base = nls_fit(&Dataset::new(x.clone(), y.clone()).unwrap(), &model, &cfg).unwrap();
        prop_assume!(base.theta_hat[0].abs() * c.max(1.0) < 4.9);
        let scaled = nls_fit(&Dataset::new(x, y.iter().map(|v| c * v).collect()).unwrap(), &model, &cfg).unwrap();
        assert_relative_eq!(scaled.theta_hat[0], c * base.theta_hat[0], epsilon = 1e-12, max_relative = 1e-10);
    }

    #[test]
    fn c_alpha_decreases(a in 1e-6..0.999f64, b in 1e-6..0.999f64) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(c_alpha(lo).unwrap() > c_alpha(hi).unwrap());
    }

    #[test]
    fn kernel_regression_is_a_convex_combination(seed in any::<u64>(), x0 in -2.0..2.0f64, h in 0.05..2.0f64) {
        let (x, y) = sample(80, seed, 1.0);
        if let Ok(m) = nadaraya_watson(x0, &x, &y, h) {
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }
    }

    #[test]
    fn kernel_regression_ignores_order(seed in any::<u64>(), x0 in -1.0..1.0f64, shift in 1usize..79) {
        let (x, y) = sample(80, seed, 1.0);
        let mut idx: Vec<usize> = (0..80).collect();
        idx.rotate_left(shift);
        idx.reverse();
        let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let a = nadaraya_watson(x0, &x, &y, 0.4).unwrap();
        let b = nadaraya_watson(x0, &xp, &yp, 0.4).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-14, max_relative = 1e-12);
    }

    #[test]
    fn cv_bandwidth_scales_with_x(seed in any::<u64>(), k in -3i32..4) {
        // Powers of two keep every kernel argument bit-identical.
        let c = 2f64.powi(k);
        let (x, y) = sample(60, seed, 1.0);
        let grid: Vec<f64> = (0..12).map(|i| 0.05 * 1.4f64.powi(i)).collect();
        let h = cv_bandwidth(&Dataset::new(x.clone(), y.clone()).unwrap(), &grid).unwrap();
        let xs = x.iter().map(|v| c * v).collect();
        let gs: Vec<f64> = grid.iter().map(|g| c * g).collect();
        let hs = cv_bandwidth(&Dataset::new(xs, y).unwrap(), &gs).unwrap();
        prop_assert_eq!(hs, c * h);
    }
}

#[test]
fn homogeneous_remainder_vanishes_relative_to_kappa() {
    for name in ["quadratic", "linear", "cubic_poly"] {
        let model = builtin_model(name).unwrap();
        let limit = model.class().homogeneous_limit().unwrap();
        let b = model.bounds();
        let mut previous = f64::INFINITY;
        for lambda in [1e2, 1e3, 1e4] {
            let mut worst: f64 = 0.0;
            for i in 0..=20 {
                let x = -1.0 + 0.1 * i as f64;
                for u in [0.1, 0.5, 0.9] {
                    let theta: Vec<f64> = (0..model.dim()).map(|j| b.lower()[j] + u * (b.upper()[j] - b.lower()[j])).collect();
                    let r = (model.value(lambda * x, &theta) - limit.kappa_g(lambda) * limit.h_g(x, &theta)).abs();
                    worst = worst.max(r / limit.kappa_g(lambda));
                }
            }
            if name == "cubic_poly" {
                assert!(worst <= previous, "{name}: remainder grew at lambda {lambda}");
                assert!(worst < 1e3 / lambda, "{name}: {worst} at {lambda}");
            } else {
                assert!(worst < 1e-14, "{name} is homogeneous up to rounding: {worst}");
            }
            previous = worst;
        }
    }
    let vol = builtin_volatility("exp_linear").unwrap();
    let mean = vol.mean_model();
    let limit = mean.class().homogeneous_limit().unwrap();
    let theta = vec![0.3, -0.5];
    let mut previous = f64::INFINITY;
    for lambda in [1e2, 1e3, 1e4] {
        let worst = (0..=20)
            .map(|i| -1.0 + 0.1 * i as f64)
            .map(|x| (mean.value(lambda * x, &theta) - limit.kappa_g(lambda) * limit.h_g(x, &theta)).abs() / limit.kappa_g(lambda))
            .fold(0.0, f64::max);
        assert!(worst <= previous + 1e-15);
        previous = worst;
    }
}

#[test]
fn integrable_model_has_negligible_tails() {
    let model = builtin_model("exp_quadratic").unwrap();
    let b = model.bounds();
    for i in 0..=10 {
        let theta = [b.lower()[0] + 0.1 * i as f64 * (b.upper()[0] - b.lower()[0])];
        let f = |x: f64| model.value(x, &theta).abs();
        let core = integrate(f, -50.0, 50.0, 1e-12).unwrap();
        let wider = integrate(f, -100.0, 100.0, 1e-12).unwrap();
        assert!((wider - core).abs() < 1e-8, "theta {theta:?}");
        assert_relative_eq!(core, (std::f64::consts::PI / theta[0]).sqrt(), max_relative = 1e-8);
    }
}

#[test]
fn covariances_are_psd_and_intervals_symmetric() {
    let cfg = OptimizerConfig::default();
    let set = Interval::symmetric(1.0);
    let eq = builtin_model("exp_quadratic").unwrap();
    let quad = builtin_model("quadratic").unwrap();
    let cubic = builtin_model("cubic_poly").unwrap();
    let mut checked = 0;
    for seed in 0..40u64 {
        let traj = simulate_chain(&ChainSpec::random_walk(), 1500, seed).unwrap();
        if hitting_count(&traj, &set).unwrap() < 20 {
            continue;
        }
        checked += 1;
        if checked > 6 {
            break;
        }
        let plan = truncation_level(1500, 0.5, 0.01).unwrap();
        let d = generate_dataset(&traj, &eq, &[1.0], NoiseSpec::gaussian(0.5), seed).unwrap();
        let fit = nls_fit(&d, &eq, &cfg).unwrap();
        let a = covariance_integrable(&d.x, &eq, &fit.theta_hat, fit.sigma2_hat, &set, KdeConfig::Silverman).unwrap();
        let d2 = generate_dataset(&traj, &cubic, &[1.0, 0.5, -0.2, 0.1], NoiseSpec::gaussian(0.5), seed).unwrap();
        let fit2 = mnls_fit(&d2, &cubic, &plan, &small_grid()).unwrap();
        let b = covariance_ah(&d2.x, &cubic, &fit2.theta_hat, fit2.sigma2_hat, &plan, &set).unwrap();
        let d3 = generate_dataset(&traj, &quad, &[0.5], NoiseSpec::gaussian(0.5), seed).unwrap();
        let fit3 = mnls_fit(&d3, &quad, &plan, &cfg).unwrap();
        let c = covariance_ah(&d3.x, &quad, &fit3.theta_hat, fit3.sigma2_hat, &plan, &set).unwrap();
        for (cov, theta) in [(&a, &fit.theta_hat), (&b, &fit2.theta_hat), (&c, &fit3.theta_hat)] {
            let m = &cov.matrix;
            assert_relative_eq!(m.clone(), m.transpose(), epsilon = 1e-12 * m.norm());
            let eig = m.clone().symmetric_eigen().eigenvalues;
            assert!(eig.iter().all(|&e| e >= -1e-10 * m.trace()), "{eig:?}");
            for ci in confidence_intervals(theta, cov, 0.9).unwrap() {
                assert_relative_eq!(ci.estimate - ci.lower, ci.upper - ci.estimate, max_relative = 1e-12);
                assert!(ci.contains(ci.estimate));
            }
        }
    }
}

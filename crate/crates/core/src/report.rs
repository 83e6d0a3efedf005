//! Text renderings of fit results: a flat key=value report, a CSV row and a
//! covariance block.

use std::fmt::Write as _;

use crate::estimation::EstimateResult;
use crate::inference::CovarianceEstimate;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.10e}")).collect::<Vec<_>>().join(",")
}

pub fn render_report(r: &EstimateResult) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("estimator", r.estimator.to_string());
    kv("model", r.model.clone());
    kv("theta_hat", join(&r.theta_hat));
    kv("loss", format!("{:.10e}", r.loss_value));
    kv("sigma2_hat", format!("{:.10e}", r.sigma2_hat));
    kv("n", r.n.to_string());
    kv("n_effective", r.n_effective.to_string());
    kv("converged", r.converged.to_string());
    kv("iterations", r.iterations.to_string());
    kv("grid_tie", r.grid_tie.to_string());
    kv("finite_difference", r.finite_difference.to_string());
    if let Some(p) = &r.truncation {
        kv("alpha", format!("{}", p.alpha));
        kv("c_alpha", format!("{:.10}", p.c_alpha));
        kv("beta_used", format!("{}", p.beta_used));
        kv("m_n", format!("{:.10e}", p.m_n));
    }
    if let Some(v) = r.varpi_hat {
        kv("varpi_hat", format!("{v:.10e}"));
    }
    if let Some(d) = &r.diagnostics {
        kv("small_set", d.small_set.to_string());
        kv("hitting_count", d.hitting_count.to_string());
        if let Some(b) = d.beta_hat {
            kv("beta_hat", format!("{b:.6}"));
        }
    }
    if let Some(c) = &r.covariance {
        kv("covariance_kind", c.kind.to_string());
        kv("rate_factor", format!("{:.10e}", c.rate_factor));
        kv("approximation", c.approximation.to_string());
        let se: Vec<f64> = (0..c.dim()).map(|j| c.std_error(j)).collect();
        kv("std_error", join(&se));
    }
    if let Some(ci) = &r.ci {
        for (j, c) in ci.iter().enumerate() {
            kv(&format!("ci{}", j + 1), format!("{:.10e},{:.10e}", c.lower, c.upper));
        }
        if let Some(c) = ci.first() {
            kv("ci_level", format!("{}", c.level));
        }
    }
    for note in r.notes.iter().chain(r.covariance.iter().flat_map(|c| c.notes.iter())) {
        kv("note", note.clone());
    }
    s
}

pub fn csv_header(dim: usize) -> String {
    let mut cols = vec!["estimator".to_string(), "model".to_string()];
    cols.extend((1..=dim).map(|j| format!("theta{j}")));
    cols.extend(["loss", "sigma2_hat", "n", "n_effective", "converged", "m_n"].map(String::from));
    cols.extend((1..=dim).map(|j| format!("se{j}")));
    cols.join(",")
}

pub fn csv_row(r: &EstimateResult) -> String {
    let mut cols = vec![r.estimator.to_string(), r.model.clone()];
    cols.extend(r.theta_hat.iter().map(|v| format!("{v:.16e}")));
    cols.push(format!("{:.16e}", r.loss_value));
    cols.push(format!("{:.16e}", r.sigma2_hat));
    cols.push(r.n.to_string());
    cols.push(r.n_effective.to_string());
    cols.push(r.converged.to_string());
    cols.push(r.truncation.map(|p| format!("{:.16e}", p.m_n)).unwrap_or_default());
    for j in 0..r.theta_hat.len() {
        cols.push(r.covariance.as_ref().map(|c| format!("{:.16e}", c.std_error(j))).unwrap_or_default());
    }
    cols.join(",")
}

/// The d×d covariance of θ̂ (V / r) as CSV rows.
pub fn covariance_block(c: &CovarianceEstimate) -> String {
    let m = c.theta_covariance();
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// `v` rounded to `digits` significant digits, without exponent for
/// moderate magnitudes.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Renders θ_0 + θ_1 x + ... as a readable equation.
pub fn render_polynomial(lhs: &str, coeffs: &[f64], digits: usize) -> String {
    let mut s = format!("{lhs} =");
    for (k, &c) in coeffs.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else { "+" };
        let body = format_significant(c.abs(), digits);
        let term = match k {
            0 => body,
            1 => format!("{body} x"),
            _ => format!("{body} x^{k}"),
        };
        if k == 0 {
            let lead = if c < 0.0 { "-" } else { "" };
            let _ = write!(s, " {lead}{term}");
        } else {
            let _ = write!(s, " {sign} {term}");
        }
    }
    s
}

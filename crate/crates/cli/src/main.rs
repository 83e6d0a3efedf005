use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use recurrent_nls::chains::{default_small_set, simulate_chain, RecurrenceDiagnostics};
use recurrent_nls::config::{study_configs_from_str, KeyValues};
use recurrent_nls::estimation::{
    lmnls_fit, lnls_fit, mnls_fit, nls_fit, truncation_level, EstimateResult, Estimator, OptimizerConfig,
    TruncationPlan,
};
use recurrent_nls::inference::{
    confidence_intervals, covariance_ah, covariance_integrable, covariance_unit_root, CovarianceEstimate, KdeConfig,
};
use recurrent_nls::io::{read_series_csv, write_dataset, write_trajectory, Series};
use recurrent_nls::models::{
    builtin_model, builtin_volatility, generate_dataset, generate_vol_dataset, BUILTIN_VOLATILITY,
};
use recurrent_nls::montecarlo::{render_ratios, render_table, run_study};
use recurrent_nls::nonparametric::{calibrate_polynomial, cv_bandwidth, default_cv_grid, fitted_curve};
use recurrent_nls::report::{covariance_block, csv_header, csv_row, render_polynomial, render_report};
use recurrent_nls::{ChainSpec, Dataset, Error, Interval, NoiseLaw, NoiseSpec, RegressionModel, Trajectory};

#[derive(Parser, Debug)]
#[command(
    name = "rnls",
    version,
    about = "Nonlinear least squares with Harris recurrent regressors",
    long_about = None
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a chain, optionally with a regression or volatility response
    Simulate(SimulateArgs),
    /// Fit a parametric model to a t,x,y data file
    Fit(FitArgs),
    /// Hitting count on C and the recurrence index estimate
    Beta(BetaArgs),
    /// Run a Monte Carlo study described by a config file
    Mc(McArgs),
    /// Kernel regression curve and truncated polynomial calibration
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Chain, e.g. random_walk, ar1:phi=0.5, tar:phi=0.5,lo=-1,hi=1
    #[arg(long)]
    chain: String,
    /// Number of transitions
    #[arg(long)]
    n: usize,
    /// Seed; drawn at random and printed when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Add a response Y_t from this regression or volatility (exp_linear) model
    #[arg(long)]
    model: Option<String>,
    /// True parameter for --model (comma separated)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Option<Vec<f64>>,
    /// Noise standard deviation for regression models
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Noise law: gaussian or rademacher
    #[arg(long, default_value = "gaussian")]
    noise_law: String,
    /// Output file (standard output when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Loss {
    Nls,
    Mnls,
    Lnls,
    Lmnls,
}

impl From<Loss> for Estimator {
    fn from(l: Loss) -> Self {
        match l {
            Loss::Nls => Estimator::Nls,
            Loss::Mnls => Estimator::Mnls,
            Loss::Lnls => Estimator::Lnls,
            Loss::Lmnls => Estimator::Lmnls,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CovarianceChoice {
    /// Integrable or homogeneous, from the model class
    Auto,
    /// Kernel density plug-in for integrable g
    Integrable,
    /// Unit-bin occupation plug-in for asymptotically homogeneous g
    Homogeneous,
    /// Homogeneous limit over [-1, 1], for MA-driven unit roots
    UnitRoot,
}

#[derive(Args, Debug)]
struct SetArg {
    /// Small set C = [lo, hi]; chosen from the data when omitted
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true)]
    set: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Data file with header t,x,y
    #[arg(long)]
    data: PathBuf,
    /// exp_quadratic, quadratic, linear, cubic_poly, polynomial:<d>; exp_linear for lnls/lmnls
    #[arg(long)]
    model: String,
    /// Loss function
    #[arg(long, value_enum, default_value_t = Loss::Nls)]
    loss: Loss,
    /// Truncation level alpha for M_n
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Recurrence index for M_n; estimated from the hitting count when omitted
    #[arg(long)]
    beta: Option<f64>,
    /// Parameter box lo:hi[,lo:hi...]
    #[arg(long, allow_hyphen_values = true)]
    theta_bounds: Option<String>,
    /// Known varpi for the log-squared losses
    #[arg(long)]
    varpi: Option<f64>,
    #[command(flatten)]
    set: SetArg,
    /// Attach confidence intervals at this level
    #[arg(long)]
    ci: Option<f64>,
    /// Covariance estimator used with --ci
    #[arg(long, value_enum, default_value_t = CovarianceChoice::Auto)]
    covariance: CovarianceChoice,
    /// Grid points per parameter for the starting scan
    #[arg(long)]
    grid_points: Option<usize>,
    /// Write the CSV result row here (standard output when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the covariance block here (with --ci)
    #[arg(long)]
    cov_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BetaArgs {
    /// Series file with header t,x or t,x,y
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    set: SetArg,
}

#[derive(Args, Debug)]
struct McArgs {
    /// Study config file (key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write table.csv and ratios.csv here instead of standard output
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads for the replication pool
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Data file with header t,x,y
    #[arg(long)]
    data: PathBuf,
    /// Polynomial degree
    #[arg(long, default_value_t = 3)]
    degree: u32,
    /// Kernel bandwidth; leave-one-out cross-validation when omitted
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Number of curve samples
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Truncation level alpha for M_n
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Recurrence index for M_n; estimated from the hitting count when omitted
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    set: SetArg,
    /// Write the x,m_hat curve here (standard output when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a subcommand, split by exit status.
enum Failure {
    User(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::User(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::User(format!("i/o error: {e}"))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn user(msg: impl Into<String>) -> Failure {
    Failure::User(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => single_threaded().and_then(|_| simulate(a)),
        Command::Fit(a) => single_threaded().and_then(|_| fit(a)),
        Command::Beta(a) => single_threaded().and_then(|_| beta(a)),
        Command::Mc(a) => mc(a),
        Command::Calibrate(a) => single_threaded().and_then(|_| calibrate(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn thread_pool(threads: usize) -> Outcome {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| user(format!("cannot start thread pool: {e}")))
}

fn single_threaded() -> Outcome {
    thread_pool(1)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s = rand::rng().random::<u64>();
            eprintln!("seed drawn: {s}");
            s
        }
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn echo(pairs: &[(&str, String)]) {
    for (k, v) in pairs {
        eprintln!("{k}={v}");
    }
}

fn show_path(p: Option<&Path>) -> String {
    p.map(|p| p.display().to_string()).unwrap_or_else(|| "-".into())
}

fn simulate(a: SimulateArgs) -> Outcome {
    let chain: ChainSpec = a.chain.parse()?;
    let seed = resolve_seed(a.seed);
    echo(&[
        ("command", "simulate".into()),
        ("chain", chain.to_string()),
        ("n", a.n.to_string()),
        ("seed", seed.to_string()),
        ("model", a.model.clone().unwrap_or_else(|| "-".into())),
        ("out", show_path(a.out.as_deref())),
    ]);
    let traj = simulate_chain(&chain, a.n, seed)?;
    let mut w = output(a.out.as_deref())?;
    match &a.model {
        None => write_trajectory(&mut w, &traj)?,
        Some(name) => {
            let theta0 = a.theta0.clone().ok_or_else(|| user("--model needs --theta0"))?;
            let law: NoiseLaw = a.noise_law.parse()?;
            if BUILTIN_VOLATILITY.contains(&name.as_str()) {
                let vol = builtin_volatility(name)?;
                let v = generate_vol_dataset(&traj, &vol, &theta0, law, seed)?;
                eprintln!("varpi0={}", v.varpi0);
                write_dataset(&mut w, &v.data)?;
            } else {
                let model = builtin_model(name)?;
                let d = generate_dataset(&traj, &model, &theta0, NoiseSpec { sd: a.noise_sd, law }, seed)?;
                write_dataset(&mut w, &d)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    match read_series_csv(path)? {
        Series::Dataset(d) => Ok(d),
        Series::Trajectory(_) => Err(user(format!("{} has no y column; expected header t,x,y", path.display()))),
    }
}

/// Regressor sample of a series file. Vector chains contribute their first
/// coordinate.
fn regressor(series: Series) -> Result<Vec<f64>, Failure> {
    match series {
        Series::Dataset(d) => Ok(d.x),
        Series::Trajectory(t) => {
            let t: Trajectory = if t.dim() > 1 {
                log::warn!("series has {} coordinates; using the first", t.dim());
                t.coordinate(0)?
            } else {
                t
            };
            // External series have no initial-state row: X_0 is the first
            // observation and the visits are counted over all rows.
            Ok(t.raw().to_vec())
        }
    }
}

fn small_set(arg: &SetArg, x: &[f64]) -> Result<Interval, Failure> {
    match &arg.set {
        Some(v) => {
            let (lo, hi) = (v[0], v[1]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(user(format!("--set needs finite lo < hi, got {lo} {hi}")));
            }
            Ok(Interval::closed(lo, hi))
        }
        None => Ok(default_small_set(x)),
    }
}

/// β from the flag, or β̂ from the hitting count of C.
fn resolve_beta(beta: Option<f64>, x: &[f64], set: &Interval) -> Result<f64, Failure> {
    match beta {
        Some(b) => Ok(b),
        None => {
            let diag = RecurrenceDiagnostics::compute(x, *set, &[]);
            let b = diag
                .beta_hat
                .ok_or_else(|| user(format!("the series never visits {set}; pass --beta or a different --set")))?;
            eprintln!("beta_hat={b:.6} (hitting count {} on {set})", diag.hitting_count);
            Ok(b.clamp(f64::MIN_POSITIVE, 1.0))
        }
    }
}

fn optimizer(grid_points: Option<usize>) -> OptimizerConfig {
    let mut cfg = OptimizerConfig::default();
    if let Some(g) = grid_points {
        cfg.grid_points_per_dim = g;
    }
    cfg
}

fn fit(a: FitArgs) -> Outcome {
    let data = read_dataset(&a.data)?;
    let set = small_set(&a.set, &data.x)?;
    let estimator: Estimator = a.loss.into();
    let cfg = optimizer(a.grid_points);
    echo(&[
        ("command", "fit".into()),
        ("data", a.data.display().to_string()),
        ("model", a.model.clone()),
        ("loss", estimator.to_string()),
        ("alpha", a.alpha.to_string()),
        ("beta", a.beta.map(|b| b.to_string()).unwrap_or_else(|| "auto".into())),
        ("theta_bounds", a.theta_bounds.clone().unwrap_or_else(|| "default".into())),
        ("set", set.to_string()),
        ("ci", a.ci.map(|c| c.to_string()).unwrap_or_else(|| "-".into())),
        ("grid_points", cfg.grid_points_per_dim.to_string()),
    ]);
    let needs_plan = estimator.is_truncated() || (a.ci.is_some() && !estimator.is_volatility());
    let plan: Option<TruncationPlan> = if needs_plan {
        let b = resolve_beta(a.beta, &data.x, &set)?;
        Some(truncation_level(data.n(), b, a.alpha)?)
    } else {
        None
    };

    let mut result: EstimateResult = if estimator.is_volatility() {
        if a.ci.is_some() {
            return Err(user("--ci is available for the nls and mnls losses"));
        }
        let mut vol = builtin_volatility(&a.model)?;
        if let Some(b) = &a.theta_bounds {
            vol = vol.with_bounds(b.parse()?)?;
        }
        if let Some(v) = a.varpi {
            vol = vol.with_varpi(v)?;
        }
        match estimator {
            Estimator::Lnls => lnls_fit(&data, &vol, &cfg)?,
            _ => lmnls_fit(&data, &vol, plan.as_ref().expect("truncated loss has a plan"), &cfg)?,
        }
    } else {
        if a.varpi.is_some() {
            return Err(user("--varpi applies to the lnls and lmnls losses"));
        }
        let mut model = builtin_model(&a.model)?;
        if let Some(b) = &a.theta_bounds {
            model = model.with_bounds(b.parse()?)?;
        }
        let mut r = match estimator {
            Estimator::Nls => nls_fit(&data, &model, &cfg)?,
            _ => mnls_fit(&data, &model, plan.as_ref().expect("truncated loss has a plan"), &cfg)?,
        };
        if let Some(level) = a.ci {
            let plan = plan.as_ref().expect("--ci computes a plan");
            let mut cov = covariance(a.covariance, &data.x, &model, &r, plan, &set)?;
            cov.ci_level = level;
            r.ci = Some(confidence_intervals(&r.theta_hat, &cov, level)?);
            r.covariance = Some(cov);
        }
        r
    };
    result = result.with_diagnostics(&data.x, set);

    let mut out = io::stdout().lock();
    write!(out, "{}", render_report(&result))?;
    if let Some(c) = &result.covariance {
        for (i, row) in covariance_block(c).lines().enumerate() {
            writeln!(out, "covariance_row{}={row}", i + 1)?;
        }
    }
    let row = format!("{}\n{}\n", csv_header(result.theta_hat.len()), csv_row(&result));
    match &a.out {
        Some(p) => fs::write(p, row)?,
        None => write!(out, "{row}")?,
    }
    if let Some(p) = &a.cov_out {
        let c = result
            .covariance
            .as_ref()
            .ok_or_else(|| user("--cov-out needs --ci"))?;
        fs::write(p, covariance_block(c))?;
    }
    out.flush()?;
    Ok(())
}

fn covariance(
    choice: CovarianceChoice,
    x: &[f64],
    model: &RegressionModel,
    r: &EstimateResult,
    plan: &TruncationPlan,
    set: &Interval,
) -> Result<CovarianceEstimate, Failure> {
    let choice = match choice {
        CovarianceChoice::Auto if model.class().is_integrable() => CovarianceChoice::Integrable,
        CovarianceChoice::Auto => CovarianceChoice::Homogeneous,
        c => c,
    };
    let cov = match choice {
        CovarianceChoice::Integrable => {
            covariance_integrable(x, model, &r.theta_hat, r.sigma2_hat, set, KdeConfig::Silverman)?
        }
        CovarianceChoice::Homogeneous => covariance_ah(x, model, &r.theta_hat, r.sigma2_hat, plan, set)?,
        CovarianceChoice::UnitRoot => covariance_unit_root(x, model, &r.theta_hat, r.sigma2_hat, plan, set)?,
        CovarianceChoice::Auto => unreachable!(),
    };
    Ok(cov)
}

fn beta(a: BetaArgs) -> Outcome {
    let x = regressor(read_series_csv(&a.data)?)?;
    let set = small_set(&a.set, &x)?;
    echo(&[("command", "beta".into()), ("data", a.data.display().to_string()), ("set", set.to_string())]);
    let diag = RecurrenceDiagnostics::compute(&x, set, &[]);
    let mut out = io::stdout().lock();
    writeln!(out, "n={}", x.len())?;
    writeln!(out, "small_set={set}")?;
    writeln!(out, "hitting_count={}", diag.hitting_count)?;
    match diag.beta_hat {
        Some(b) => writeln!(out, "beta_hat={b:.6}")?,
        None => {
            out.flush()?;
            return Err(Failure::Numeric(format!("the series never visits {set}; beta_hat is undefined")));
        }
    }
    out.flush()?;
    Ok(())
}

fn mc(a: McArgs) -> Outcome {
    let threads = a.threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if threads == 0 {
        return Err(user("--threads must be at least 1"));
    }
    thread_pool(threads)?;
    let text = fs::read_to_string(&a.config)
        .map_err(|e| user(format!("cannot read {}: {e}", a.config.display())))?;
    let has_seed = KeyValues::parse(&text)?.get("seed").is_some();
    let mut configs = study_configs_from_str(&text)?;
    let seed = match a.seed {
        Some(s) => Some(s),
        None if has_seed => None,
        None => Some(resolve_seed(None)),
    };
    if let Some(s) = seed {
        for c in &mut configs {
            c.base_seed = s;
        }
    }
    echo(&[
        ("command", "mc".into()),
        ("config", a.config.display().to_string()),
        ("seed", configs[0].base_seed.to_string()),
        ("threads", threads.to_string()),
        ("out_dir", show_path(a.out_dir.as_deref())),
    ]);
    for c in &configs {
        eprintln!(
            "study {}: chain={} theta0={:?} sizes={:?} reps={} estimators={} alpha={} beta={}",
            c.label,
            c.chain,
            c.theta0,
            c.sample_sizes,
            c.replications,
            c.estimators.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","),
            c.alpha,
            c.resolved_beta().map(|b| b.to_string()).unwrap_or_else(|_| "?".into()),
        );
    }
    let summaries = configs.iter().map(run_study).collect::<recurrent_nls::Result<Vec<_>>>()?;
    for s in &summaries {
        for c in &s.cells {
            if c.failures > 0 {
                eprintln!("study {}: {} n={}: {} failed replications excluded", s.label, c.estimator, c.n, c.failures);
            }
        }
    }
    let table = render_table(&summaries);
    let ratios = render_ratios(&summaries);
    match &a.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("table.csv"), table)?;
            fs::write(dir.join("ratios.csv"), ratios)?;
        }
        None => {
            let mut out = io::stdout().lock();
            write!(out, "{table}\n{ratios}")?;
            out.flush()?;
        }
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Outcome {
    let data = read_dataset(&a.data)?;
    let set = small_set(&a.set, &data.x)?;
    echo(&[
        ("command", "calibrate".into()),
        ("data", a.data.display().to_string()),
        ("degree", a.degree.to_string()),
        ("bandwidth", a.bandwidth.map(|h| h.to_string()).unwrap_or_else(|| "cv".into())),
        ("points", a.points.to_string()),
        ("alpha", a.alpha.to_string()),
        ("beta", a.beta.map(|b| b.to_string()).unwrap_or_else(|| "auto".into())),
        ("set", set.to_string()),
        ("out", show_path(a.out.as_deref())),
    ]);
    let h = match a.bandwidth {
        Some(h) => h,
        None => cv_bandwidth(&data, &default_cv_grid(&data.x)?)?,
    };
    eprintln!("bandwidth={h:.6e}");
    let curve = fitted_curve(&data, h, a.points)?;
    let beta = resolve_beta(a.beta, &data.x, &set)?;
    let plan = truncation_level(data.n(), beta, a.alpha)?;
    let fit = calibrate_polynomial(&data, a.degree, &plan, &OptimizerConfig::default())?;
    eprintln!("{}", render_polynomial("m(x)", &fit.theta_hat, 5));
    eprintln!("m_n={:.6e} n_effective={}", plan.m_n, fit.n_effective);

    let mut w = output(a.out.as_deref())?;
    writeln!(w, "x,m_hat")?;
    for (x, m) in curve {
        writeln!(w, "{x:.10e},{m:.10e}")?;
    }
    w.flush()?;
    Ok(())
}

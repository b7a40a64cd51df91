//! The `natgrad` command line.
//!
//! Settings come from three layers: command-line flags override values in a
//! `--config` file, which override per-subcommand defaults. The config file
//! is flat TOML using the same keys as [`Settings`]. Every run writes a
//! `manifest.json` with the fully resolved settings.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::experiments::{self, Fig1Data, GridSpec, THETA_TRUE};
use crate::linalg::SymMatrix;
use crate::metrics::{
    diagonal_of, ConditionalFisher, EmpiricalFisher, EnergyMetric, Gauss2dFisher, MetricProvider,
    MonteCarloFisher, DEFAULT_MC_SAMPLES,
};
use crate::models::{gauss2d_sample, l2_regression_model, DataSet, Gauss2d, LinearMap, ParamVector, ProbModel};
use crate::optimize::{natural_descent, steepest_descent, whitened_descent, DescentTrace, Method, OptimizerConfig};
use crate::regularize::{InverseMode, RegularizationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Whitened sample covariance must be this close to identity, per entry.
pub const WHITENING_TOL: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "natgrad", version, about = "Natural-gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steepest vs natural descent on the 2D Gaussian: traces, KL curves, vector fields.
    Fig1(CommonArgs),
    /// Zero-phase whitening of correlated Gaussian samples.
    Fig2(CommonArgs),
    /// Analytic, Monte-Carlo, empirical and diagonal Fisher side by side.
    Metrics(CommonArgs),
    /// Fit a linear L2 regression model to CSV data.
    Fit(CommonArgs),
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Steps between metric refreshes.
    #[arg(long)]
    refresh: Option<usize>,
    /// Robust-inverse epsilon (also the diagonal floor).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    ridge_lambda: Option<f64>,
    /// exact | ridge | robust
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    stop_tol: Option<f64>,
    /// analytic | mc | empirical | energy | diagonal | none
    #[arg(long)]
    metric: Option<String>,
    /// steepest | natural | whitened
    #[arg(long)]
    optimizer: Option<String>,
    /// Finite-sample size (fig1: switches off the population objective).
    #[arg(long)]
    data_n: Option<usize>,
    /// Sample count for fig2.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Comma-separated parameter point (metrics) or starting point (fit).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    /// Input CSV for fit.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of trailing response columns in the fit CSV.
    #[arg(long)]
    y_cols: Option<usize>,
}

/// Every tunable, as read from a config file or resolved for a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refresh: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_cols: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }

    /// Fields set in `top` win over fields set in `self`.
    pub fn overlay(mut self, top: &Settings) -> Settings {
        overlay!(self, top; out, seed, lr, steps, refresh, eps, ridge_lambda, mode, stop_tol,
            metric, optimizer, data_n, n, mc_samples, grid_min, grid_max, grid_points, theta,
            covariance, data, y_cols);
        self
    }

    fn from_args(a: &CommonArgs) -> Settings {
        Settings {
            out: a.out.clone(),
            seed: a.seed,
            lr: a.lr,
            steps: a.steps,
            refresh: a.refresh,
            eps: a.eps,
            ridge_lambda: a.ridge_lambda,
            mode: a.mode.clone(),
            stop_tol: a.stop_tol,
            metric: a.metric.clone(),
            optimizer: a.optimizer.clone(),
            data_n: a.data_n,
            n: a.n,
            mc_samples: a.mc_samples,
            grid_min: a.grid_min,
            grid_max: a.grid_max,
            grid_points: a.grid_points,
            theta: a.theta.clone(),
            covariance: None,
            data: a.data.clone(),
            y_cols: a.y_cols,
        }
    }

    fn optimizer_config(&self) -> Result<OptimizerConfig, CliError> {
        let d = OptimizerConfig::default();
        let r = RegularizationConfig::default();
        let mode: InverseMode = match &self.mode {
            Some(m) => m.parse().map_err(usage)?,
            None => r.mode,
        };
        let cfg = OptimizerConfig {
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            max_steps: self.steps.unwrap_or(d.max_steps),
            refresh_interval: self.refresh.unwrap_or(d.refresh_interval),
            stop_tol: self.stop_tol.unwrap_or(d.stop_tol),
            regularization: RegularizationConfig {
                epsilon: self.eps.unwrap_or(r.epsilon),
                ridge_lambda: self.ridge_lambda.unwrap_or(r.ridge_lambda),
                mode,
                fallback_to_robust: r.fallback_to_robust,
            },
            seed: self.seed.unwrap_or(d.seed),
            debug_checks: false,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Parse(_) | Error::Csv(_) | Error::DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

/// Written as `manifest.json` in the output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: Settings,
    /// The resolved settings in config-file form.
    pub config_toml: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub wall_time_secs: f64,
}

/// Outcome of a subcommand that got far enough to write its outputs.
#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    /// Set when the run completed but a numerical check failed (exit 1).
    pub failure: Option<String>,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(report) => {
            eprintln!(
                "{}: wrote {} files to {}",
                report.manifest.experiment,
                report.manifest.files.len(),
                report.manifest.output_dir.display()
            );
            match report.failure {
                Some(msg) => {
                    eprintln!("numerical failure: {msg}");
                    EXIT_NUMERICAL
                }
                None => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<RunReport, CliError> {
    let (name, args) = match &cli.command {
        Command::Fig1(a) => ("fig1", a),
        Command::Fig2(a) => ("fig2", a),
        Command::Metrics(a) => ("metrics", a),
        Command::Fit(a) => ("fit", a),
    };
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            Settings::from_toml(&text)?
        }
        None => Settings::default(),
    };
    let settings = file.overlay(&Settings::from_args(args));
    run_settings(name, settings)
}

/// Runs a subcommand from already-merged settings. Missing values take the
/// subcommand's defaults.
pub fn run_settings(name: &str, settings: Settings) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let resolved = resolve(name, settings)?;
    let out = resolved.out.clone().expect("resolved");
    std::fs::create_dir_all(&out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;

    let (files, failure) = match name {
        "fig1" => cmd_fig1(&resolved, &out)?,
        "fig2" => cmd_fig2(&resolved, &out)?,
        "metrics" => cmd_metrics(&resolved, &out)?,
        "fit" => cmd_fit(&resolved, &out)?,
        other => return Err(CliError::Usage(format!("unknown subcommand {other}"))),
    };

    let manifest = RunManifest {
        experiment: name.to_string(),
        config_toml: resolved.to_toml(),
        seed: resolved.seed.expect("resolved"),
        output_dir: out.clone(),
        files: files
            .iter()
            .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        config: resolved,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), text).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(RunReport { manifest, failure })
}

/// Fills every setting the subcommand uses with its default.
pub fn resolve(name: &str, s: Settings) -> Result<Settings, CliError> {
    let d = OptimizerConfig::default();
    let r = RegularizationConfig::default();
    let mut s = s;
    s.out.get_or_insert_with(|| PathBuf::from("out").join(name));
    s.seed.get_or_insert(d.seed);
    let optimizer_keys = |s: &mut Settings, lr: f64| {
        s.lr.get_or_insert(lr);
        s.steps.get_or_insert(d.max_steps);
        s.refresh.get_or_insert(d.refresh_interval);
        s.stop_tol.get_or_insert(d.stop_tol);
        s.eps.get_or_insert(r.epsilon);
        s.ridge_lambda.get_or_insert(r.ridge_lambda);
        s.mode.get_or_insert_with(|| "exact".into());
    };
    match name {
        "fig1" => {
            optimizer_keys(&mut s, d.learning_rate);
            s.metric.get_or_insert_with(|| "analytic".into());
            s.optimizer.get_or_insert_with(|| "natural".into());
            s.mc_samples.get_or_insert(DEFAULT_MC_SAMPLES);
            let g = GridSpec::default();
            s.grid_min.get_or_insert(g.min);
            s.grid_max.get_or_insert(g.max);
            s.grid_points.get_or_insert(g.points_per_axis);
        }
        "fig2" => {
            s.n.get_or_insert(10_000);
            s.covariance
                .get_or_insert_with(|| experiments::DEFAULT_FIG2_COVARIANCE.concat());
        }
        "metrics" => {
            s.theta.get_or_insert_with(|| vec![0.0, 0.0]);
            s.mc_samples.get_or_insert(DEFAULT_MC_SAMPLES);
            s.data_n.get_or_insert(10_000);
        }
        "fit" => {
            optimizer_keys(&mut s, 0.5);
            s.metric.get_or_insert_with(|| "empirical".into());
            s.optimizer.get_or_insert_with(|| "natural".into());
            s.mc_samples.get_or_insert(DEFAULT_MC_SAMPLES);
            s.y_cols.get_or_insert(1);
            if s.data.is_none() {
                return Err(CliError::Usage("fit requires --data FILE".into()));
            }
        }
        other => return Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
    Ok(s)
}

fn parse_method(s: &Settings) -> Result<Method, CliError> {
    s.optimizer.as_deref().unwrap_or("natural").parse().map_err(usage)
}

fn run_method<O: crate::models::Objective + ?Sized>(
    method: Method,
    obj: &O,
    provider: Option<&dyn MetricProvider>,
    theta0: &ParamVector,
    cfg: &OptimizerConfig,
) -> Result<DescentTrace, CliError> {
    let need = || CliError::Usage(format!("optimizer {method:?} needs a metric"));
    Ok(match method {
        Method::Steepest => steepest_descent(obj, theta0, cfg)?,
        Method::Natural => natural_descent(obj, provider.ok_or_else(need)?, theta0, cfg)?,
        Method::Whitened => whitened_descent(obj, provider.ok_or_else(need)?, theta0, cfg)?,
    })
}

fn cmd_fig1(s: &Settings, out: &Path) -> Result<(Vec<PathBuf>, Option<String>), CliError> {
    let cfg = s.optimizer_config()?;
    let method = parse_method(s)?;
    if method == Method::Steepest {
        return Err(CliError::Usage("fig1 compares steepest against natural or whitened".into()));
    }
    let data = match s.data_n {
        Some(n) => Fig1Data::Sampled { n },
        None => Fig1Data::Population,
    };
    let metric_data = || gauss2d_sample(&THETA_TRUE, s.data_n.unwrap_or(10_000), cfg.seed.wrapping_add(1));
    let provider: Box<dyn MetricProvider> = match s.metric.as_deref().unwrap_or("analytic") {
        "analytic" => Box::new(Gauss2dFisher),
        "mc" => Box::new(MonteCarloFisher::new(Gauss2d, s.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES), cfg.seed)),
        "empirical" => Box::new(EmpiricalFisher::new(Gauss2d, metric_data()?)),
        "energy" => Box::new(EnergyMetric::new(negative_score(Gauss2d), metric_data()?, 2)),
        "diagonal" => Box::new(diagonal_of(Gauss2dFisher)),
        other => return Err(CliError::Usage(format!("unknown metric {other:?} for fig1"))),
    };
    let traj = experiments::run_fig1_comparison(&cfg, data, provider.as_ref(), method)?;
    let grid = GridSpec {
        min: s.grid_min.unwrap_or(-1.5),
        max: s.grid_max.unwrap_or(1.5),
        points_per_axis: s.grid_points.unwrap_or(13),
    };
    let fields = experiments::run_fig1_vector_fields(&grid)?;
    let mut files = traj.write(out)?;
    files.extend(fields.write(out)?);
    let failure = traj.any_diverged().then(|| {
        let which: Vec<&str> = [("steepest", &traj.steepest), ("natural", &traj.natural)]
            .into_iter()
            .filter(|(_, t)| t.diverged())
            .map(|(n, _)| n)
            .collect();
        format!("{} descent diverged at learning rate {}", which.join(" and "), cfg.learning_rate)
    });
    Ok((files, failure))
}

fn negative_score<M: ProbModel>(model: M) -> impl Fn(&[f64], &ParamVector) -> ParamVector + Send + Sync {
    move |x, theta| {
        model
            .grad_log_q(x, theta)
            .iter()
            .map(|v| -v)
            .collect::<Vec<_>>()
            .into()
    }
}

fn cmd_fig2(s: &Settings, out: &Path) -> Result<(Vec<PathBuf>, Option<String>), CliError> {
    let n = s.n.unwrap_or(10_000);
    let cov_entries = s.covariance.clone().unwrap_or_else(|| experiments::DEFAULT_FIG2_COVARIANCE.concat());
    let dim = (cov_entries.len() as f64).sqrt() as usize;
    let covariance = SymMatrix::new(dim, cov_entries).map_err(usage)?;
    let report = experiments::run_fig2_whitening(n, s.seed.unwrap_or(0), &covariance)?;
    let files = report.write(out)?;

    let sample_dev = experiments::max_abs_deviation_from_identity(&report.whitened_covariance);
    let population_dev = experiments::max_abs_deviation_from_identity(&report.population_whitened_covariance);
    if population_dev > WHITENING_TOL {
        eprintln!(
            "warning: with n = {n}, W whitens the generating distribution only to within {population_dev:.3} per entry (tolerance {WHITENING_TOL})"
        );
    }
    let failure = (sample_dev > WHITENING_TOL)
        .then(|| format!("whitened sample covariance deviates from identity by {sample_dev:e}"));
    Ok((files, failure))
}

fn cmd_metrics(s: &Settings, out: &Path) -> Result<(Vec<PathBuf>, Option<String>), CliError> {
    let theta = ParamVector::new(s.theta.clone().unwrap_or_else(|| vec![0.0, 0.0])).map_err(usage)?;
    if theta.len() != 2 {
        return Err(CliError::Usage("--theta needs two values".into()));
    }
    let cmp = experiments::run_metric_comparison(
        &theta,
        s.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
        s.data_n.unwrap_or(10_000),
        s.seed.unwrap_or(0),
    )?;
    Ok((cmp.write(out)?, None))
}

fn cmd_fit(s: &Settings, out: &Path) -> Result<(Vec<PathBuf>, Option<String>), CliError> {
    let cfg = s.optimizer_config()?;
    let method = parse_method(s)?;
    let path = s.data.as_ref().ok_or_else(|| CliError::Usage("fit requires --data FILE".into()))?;
    let pairs = DataSet::load_csv(path).map_err(|e| match e {
        Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", path.display())),
        other => CliError::Usage(format!("malformed data CSV {}: {other}", path.display())),
    })?;
    let y_cols = s.y_cols.unwrap_or(1);
    if y_cols == 0 || y_cols >= pairs.dim() {
        return Err(CliError::Usage(format!(
            "data has {} columns; need at least one input and {y_cols} response column(s)",
            pairs.dim()
        )));
    }
    let map = LinearMap::new(pairs.dim() - y_cols, y_cols);
    let (model, objective) = l2_regression_model(map, pairs.clone())?;
    let n_params = model.n_params();
    let theta0 = match &s.theta {
        Some(t) if t.len() == n_params => ParamVector::new(t.clone()).map_err(usage)?,
        Some(t) => {
            return Err(CliError::Usage(format!(
                "--theta has {} values, model has {n_params} parameters",
                t.len()
            )))
        }
        None => ParamVector::zeros(n_params),
    };

    let metric = s.metric.as_deref().unwrap_or("empirical");
    let provider: Option<Box<dyn MetricProvider>> = match (method, metric) {
        (Method::Steepest, _) => None,
        (_, "empirical") => Some(Box::new(ConditionalFisher::new(model.clone()))),
        (_, "mc") => Some(Box::new(MonteCarloFisher::new(
            model.clone(),
            s.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
            cfg.seed,
        ))),
        (_, "energy") => Some(Box::new(EnergyMetric::new(negative_score(model.clone()), pairs, n_params))),
        (_, "diagonal") => Some(Box::new(diagonal_of(ConditionalFisher::new(model.clone())))),
        (_, other) => {
            return Err(CliError::Usage(format!(
                "metric {other:?} is not available for fit (use empirical, mc, energy or diagonal)"
            )))
        }
    };
    let trace = run_method(method, &objective, provider.as_deref(), &theta0, &cfg)?;

    let trace_path = out.join("fit_trace.csv");
    trace.save_csv(&trace_path)?;
    let result_path = out.join("fit_result.json");
    let last = trace.last().expect("trace has the initial record");
    let result = serde_json::json!({
        "theta": last.params,
        "objective": last.objective,
        "steps": last.step,
        "terminated_by": trace.terminated_by,
        "optimizer": method,
        "metric": if method == Method::Steepest { "none" } else { metric },
        "trace": trace.to_json(method, &cfg),
    });
    std::fs::write(&result_path, serde_json::to_string_pretty(&result).map_err(|e| CliError::Numerical(e.to_string()))?)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let initial = trace.records[0].objective;
    let failure = if trace.diverged() {
        Some(format!("{method:?} descent diverged at learning rate {}", cfg.learning_rate))
    } else if last.objective > initial {
        Some(format!(
            "objective rose from {initial:e} to {:e}; try a smaller --lr or another --metric",
            last.objective
        ))
    } else {
        None
    };
    Ok((vec![trace_path, result_path], failure))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let file = Settings::from_toml("lr = 0.1\nsteps = 50\nseed = 3\n").unwrap();
        let flags = Settings {
            lr: Some(0.2),
            ..Default::default()
        };
        let merged = resolve("fig1", file.overlay(&flags)).unwrap();
        assert_eq!(merged.lr, Some(0.2));
        assert_eq!(merged.steps, Some(50));
        assert_eq!(merged.seed, Some(3));
        assert_eq!(merged.refresh, Some(10));
    }

    #[test]
    fn resolved_settings_round_trip_through_toml() {
        let r = resolve("fig1", Settings::default()).unwrap();
        let back = Settings::from_toml(&r.to_toml()).unwrap();
        assert_eq!(back, r);
        assert_eq!(resolve("fig1", back).unwrap(), r);
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        assert!(matches!(Settings::from_toml("learning_rate = 1\n"), Err(CliError::Usage(_))));
    }

    #[test]
    fn fit_requires_data() {
        assert!(matches!(resolve("fit", Settings::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn bad_flags_exit_2() {
        assert_eq!(main_with_args(["natgrad", "fig1", "--lr", "abc"]), EXIT_USAGE);
        assert_eq!(main_with_args(["natgrad", "nope"]), EXIT_USAGE);
    }
}

//! Reproducible runs on the 2D Gaussian example and a whitening demo.
//!
//! Each run is a pure function of its inputs (config and seed); the
//! `write_*` helpers lay the results out as CSV files in a directory.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::metrics::{self, diagonal_of, Gauss2dFisher, Metric, MetricProvider};
use crate::models::{
    gauss2d_kl, gauss2d_population_nll, gauss2d_sample, nll_objective, write_rows, DataSet, Gauss2d,
    Objective, ParamVector,
};
use crate::optimize::{natural_descent, steepest_descent, whitened_descent, DescentTrace, Method, OptimizerConfig, WhitenedState};

pub const THETA_INIT: [f64; 2] = [1.0, -1.0];
pub const THETA_TRUE: [f64; 2] = [0.0, 0.0];

/// Generating covariance for the whitening demo: an elongated, tilted cloud.
pub const DEFAULT_FIG2_COVARIANCE: [[f64; 2]; 2] = [[2.0, 1.2], [1.2, 1.0]];

/// Square grid over a 2D parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points_per_axis: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: -1.5,
            max: 1.5,
            points_per_axis: 13,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min < self.max) {
            return Err(Error::InvalidConfig(format!(
                "grid min {} must be below max {}",
                self.min, self.max
            )));
        }
        if self.points_per_axis < 2 {
            return Err(Error::InvalidConfig("grid needs >= 2 points per axis".into()));
        }
        Ok(())
    }

    /// Grid points, first coordinate varying slowest.
    pub fn points(&self) -> Vec<ParamVector> {
        let n = self.points_per_axis;
        let step = (self.max - self.min) / (n - 1) as f64;
        let coord = |i: usize| self.min + step * i as f64;
        (0..n)
            .flat_map(|i| (0..n).map(move |j| ParamVector::from(vec![coord(i), coord(j)])))
            .collect()
    }
}

/// Arrows `directions[i]` anchored at `points[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub points: Vec<ParamVector>,
    pub directions: Vec<ParamVector>,
}

impl VectorField {
    /// CSV columns `x0, x1, dx0, dx1`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .points
            .iter()
            .zip(&self.directions)
            .map(|(p, d)| p.iter().chain(d.iter()).copied().collect())
            .collect();
        let header = ["x0", "x1", "dx0", "dx1"].map(String::from);
        write_rows(File::create(path)?, &header, rows.iter().map(Vec::as_slice))
    }
}

/// `‖â − (â·b̂)b̂‖`: zero when `a` and `b` are parallel (or either vanishes).
pub fn collinearity_residual(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (linalg::norm(a), linalg::norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = linalg::dot(a, b) / (na * nb);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / na - c * y / nb).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Largest distance of any trace point from the line through its first
/// point and `target`.
pub fn max_perpendicular_deviation(trace: &DescentTrace, target: &[f64]) -> f64 {
    let Some(start) = trace.records.first().map(|r| r.params.clone()) else {
        return 0.0;
    };
    let dir: Vec<f64> = target.iter().zip(start.iter()).map(|(t, s)| t - s).collect();
    let len = linalg::norm(&dir);
    trace
        .records
        .iter()
        .map(|r| {
            let p: Vec<f64> = r.params.iter().zip(start.iter()).map(|(a, b)| a - b).collect();
            if len == 0.0 {
                return linalg::norm(&p);
            }
            // Project explicitly; ‖p‖² − along² cancels catastrophically.
            let along = linalg::dot(&p, &dir) / (len * len);
            let perp: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a - along * d).collect();
            linalg::norm(&perp)
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Trajectories and KL curves.

/// Which data distribution the Fig. 1 objective averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fig1Data {
    /// Closed-form expectation under the generating distribution.
    Population,
    /// Average over `n` samples drawn with the config seed.
    Sampled { n: usize },
}

#[derive(Debug, Clone)]
pub struct Fig1Trajectories {
    pub steepest: DescentTrace,
    pub natural: DescentTrace,
}

/// Steepest and natural descent from [`THETA_INIT`] toward [`THETA_TRUE`]
/// on the population objective, the natural run using the analytic Fisher.
pub fn run_fig1_trajectories(config: &OptimizerConfig) -> Result<Fig1Trajectories> {
    run_fig1_trajectories_with(config, Fig1Data::Population)
}

pub fn run_fig1_trajectories_with(config: &OptimizerConfig, data: Fig1Data) -> Result<Fig1Trajectories> {
    run_fig1_comparison(config, data, &Gauss2dFisher, Method::Natural)
}

/// Steepest descent against `method` (natural or whitened) driven by `provider`.
/// The second run is stored in the `natural` slot.
pub fn run_fig1_comparison(
    config: &OptimizerConfig,
    data: Fig1Data,
    provider: &dyn MetricProvider,
    method: Method,
) -> Result<Fig1Trajectories> {
    let theta0 = ParamVector::from(THETA_INIT);
    match data {
        Fig1Data::Population => {
            let obj = gauss2d_population_nll(THETA_TRUE.into());
            run_pair(&obj, provider, method, &theta0, config)
        }
        Fig1Data::Sampled { n } => {
            let samples = gauss2d_sample(&THETA_TRUE, n, config.seed)?;
            let obj = nll_objective(Gauss2d, samples)?.with_kl(|t| gauss2d_kl(t, &THETA_TRUE));
            run_pair(&obj, provider, method, &theta0, config)
        }
    }
}

fn run_pair<O: Objective + Sync>(
    obj: &O,
    provider: &dyn MetricProvider,
    method: Method,
    theta0: &ParamVector,
    config: &OptimizerConfig,
) -> Result<Fig1Trajectories> {
    // Independent runs; each owns its trace.
    let (steepest, natural) = std::thread::scope(|s| {
        let h = s.spawn(|| steepest_descent(obj, theta0, config));
        let natural = match method {
            Method::Whitened => whitened_descent(obj, provider, theta0, config),
            Method::Natural => natural_descent(obj, provider, theta0, config),
            Method::Steepest => steepest_descent(obj, theta0, config),
        };
        (h.join().expect("steepest run panicked"), natural)
    });
    Ok(Fig1Trajectories {
        steepest: steepest?,
        natural: natural?,
    })
}

impl Fig1Trajectories {
    pub fn any_diverged(&self) -> bool {
        self.steepest.diverged() || self.natural.diverged()
    }

    /// Writes `steepest_trace.csv`, `natural_trace.csv` and `kl_curves.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let s = dir.join("steepest_trace.csv");
        let n = dir.join("natural_trace.csv");
        let k = dir.join("kl_curves.csv");
        self.steepest.save_csv(&s)?;
        self.natural.save_csv(&n)?;

        let len = self.steepest.records.len().max(self.natural.records.len());
        let cell = |t: &DescentTrace, i: usize| {
            t.records
                .get(i)
                .and_then(|r| r.kl)
                .map(|v| v.to_string())
                .unwrap_or_default()
        };
        let mut wtr = csv::Writer::from_path(&k)?;
        wtr.write_record(["step", "steepest_kl", "natural_kl"])?;
        for i in 0..len {
            wtr.write_record([i.to_string(), cell(&self.steepest, i), cell(&self.natural, i)])?;
        }
        wtr.flush()?;
        Ok(vec![s, n, k])
    }
}

// ---------------------------------------------------------------------------
// Vector fields.

#[derive(Debug, Clone)]
pub struct Fig1Fields {
    pub raw: VectorField,
    pub whitened: VectorField,
    /// φ_true = G^{1/2}·θ_true
    pub phi_true: ParamVector,
}

/// −∇_θ J over the θ grid, and −∇_φ J over its image φ = G^{1/2}θ.
pub fn run_fig1_vector_fields(grid: &GridSpec) -> Result<Fig1Fields> {
    grid.validate()?;
    let obj = gauss2d_population_nll(THETA_TRUE.into());
    let state = WhitenedState::new(&metrics::fisher_analytic_gauss2d())?;
    let mut raw = VectorField {
        points: Vec::new(),
        directions: Vec::new(),
    };
    let mut whitened = raw.clone();
    for theta in grid.points() {
        let g = obj.gradient(&theta);
        let neg: ParamVector = g.iter().map(|v| -v).collect::<Vec<_>>().into();
        whitened.points.push(state.to_phi(&theta)?);
        whitened
            .directions
            .push(state.phi_gradient(&neg)?);
        raw.points.push(theta);
        raw.directions.push(neg);
    }
    Ok(Fig1Fields {
        raw,
        whitened,
        phi_true: state.to_phi(&THETA_TRUE)?,
    })
}

impl Fig1Fields {
    /// Writes `field_raw.csv` and `field_whitened.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let r = dir.join("field_raw.csv");
        let w = dir.join("field_whitened.csv");
        self.raw.save_csv(&r)?;
        self.whitened.save_csv(&w)?;
        Ok(vec![r, w])
    }
}

// ---------------------------------------------------------------------------
// Whitening.

#[derive(Debug, Clone)]
pub struct WhiteningReport {
    pub raw_samples: DataSet,
    pub whitened_samples: DataSet,
    pub raw_covariance: SymMatrix,
    pub whitened_covariance: SymMatrix,
    /// W = Σ̂^{-1/2}, symmetric (zero-phase).
    pub whitening_matrix: SymMatrix,
    /// W·Σ·W against the generating covariance Σ; carries the sampling error of W.
    pub population_whitened_covariance: SymMatrix,
}

/// Draws `n` samples from N(0, Σ), estimates Σ̂ over mean-centered samples,
/// and whitens them with W = Σ̂^{-1/2}.
pub fn run_fig2_whitening(n: usize, seed: u64, covariance: &SymMatrix) -> Result<WhiteningReport> {
    let dim = covariance.dim();
    let chol = linalg::cholesky(covariance)?;
    if n <= dim {
        return Err(Error::Singular(format!(
            "{n} samples cannot give a full-rank covariance in {dim} dimensions"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        values.extend(chol.matvec(&z)?);
    }
    let raw_samples = DataSet::new(dim, values)?;
    let raw_covariance = raw_samples.covariance();
    if !linalg::is_positive_definite(&raw_covariance) {
        return Err(Error::Singular("sample covariance is singular".into()));
    }
    let whitening_matrix = linalg::sym_inv_sqrt(&raw_covariance, 0.0)?;

    let mean = raw_samples.mean();
    let mut centered = Vec::with_capacity(n * dim);
    for p in raw_samples.iter() {
        centered.extend(p.iter().zip(&mean).map(|(a, b)| a - b));
    }
    let whitened_samples = DataSet::new(dim, centered)?.transformed(&whitening_matrix.to_matrix())?;
    let whitened_covariance = whitened_samples.covariance();
    let population_whitened_covariance = SymMatrix::symmetrize(
        &whitening_matrix
            .matmul(covariance)?
            .matmul(&whitening_matrix.to_matrix())?,
    )?;
    Ok(WhiteningReport {
        raw_samples,
        whitened_samples,
        raw_covariance,
        whitened_covariance,
        whitening_matrix,
        population_whitened_covariance,
    })
}

pub fn max_abs_deviation_from_identity(m: &SymMatrix) -> f64 {
    let id = SymMatrix::identity(m.dim());
    m.entries()
        .iter()
        .zip(id.entries())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Largest `|W_ij − W_ji|`.
pub fn asymmetry(m: &linalg::Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            worst = worst.max((m.get(i, j) - m.get(j, i)).abs());
        }
    }
    worst
}

#[derive(Serialize)]
struct WhiteningJson {
    whitening_matrix: Vec<f64>,
    raw_covariance: Vec<f64>,
    whitened_covariance: Vec<f64>,
    population_whitened_covariance: Vec<f64>,
    dim: usize,
}

impl WhiteningReport {
    /// Writes `raw_samples.csv`, `whitened_samples.csv` and `whitening.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let r = dir.join("raw_samples.csv");
        let w = dir.join("whitened_samples.csv");
        let j = dir.join("whitening.json");
        self.raw_samples.save_csv(&r)?;
        self.whitened_samples.save_csv(&w)?;
        let json = WhiteningJson {
            whitening_matrix: self.whitening_matrix.entries().to_vec(),
            raw_covariance: self.raw_covariance.entries().to_vec(),
            whitened_covariance: self.whitened_covariance.entries().to_vec(),
            population_whitened_covariance: self.population_whitened_covariance.entries().to_vec(),
            dim: self.whitening_matrix.dim(),
        };
        std::fs::write(&j, serde_json::to_string_pretty(&json)?)?;
        Ok(vec![r, w, j])
    }
}

// ---------------------------------------------------------------------------
// Metric comparison.

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub name: &'static str,
    pub metric: Metric,
    /// Entrywise `metric − analytic`, row-major over the dense form.
    pub deviation: Vec<f64>,
}

impl MetricRow {
    pub fn max_abs_deviation(&self) -> f64 {
        self.deviation.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct MetricComparison {
    pub rows: Vec<MetricRow>,
}

/// Analytic, Monte-Carlo, empirical and diagonal Fisher for the 2D Gaussian
/// at θ. The empirical rows average over `n_data` points drawn from q(·;θ).
pub fn run_metric_comparison(theta: &ParamVector, n_mc: usize, n_data: usize, seed: u64) -> Result<MetricComparison> {
    let analytic = Gauss2dFisher.evaluate(theta)?;
    let reference = analytic.to_sym();
    let mc = metrics::fisher_monte_carlo(&Gauss2d, theta, n_mc, seed)?;
    let data = gauss2d_sample(theta, n_data, seed.wrapping_add(1))?;
    let empirical = metrics::fisher_empirical(&Gauss2d, theta, &data)?;
    let diagonal = diagonal_of(Gauss2dFisher).evaluate(theta)?;

    let row = |name, metric: Metric| {
        let deviation = metric
            .to_sym()
            .entries()
            .iter()
            .zip(reference.entries())
            .map(|(a, b)| a - b)
            .collect();
        MetricRow {
            name,
            metric,
            deviation,
        }
    };
    Ok(MetricComparison {
        rows: vec![
            row("analytic", analytic),
            row("monte_carlo", mc),
            row("empirical", empirical),
            row("diagonal", diagonal),
        ],
    })
}

impl MetricComparison {
    pub fn get(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Writes `metric_comparison.csv` (dense entries plus deviations) and
    /// `metrics.json` (one metric object per row).
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let c = dir.join("metric_comparison.csv");
        let j = dir.join("metrics.json");
        let mut wtr = csv::Writer::from_path(&c)?;
        wtr.write_record(["metric", "g00", "g01", "g10", "g11", "max_abs_deviation"])?;
        for r in &self.rows {
            let mut rec = vec![r.name.to_string()];
            rec.extend(r.metric.to_sym().entries().iter().map(|v| v.to_string()));
            rec.push(r.max_abs_deviation().to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        let json: serde_json::Map<String, serde_json::Value> = self
            .rows
            .iter()
            .map(|r| Ok((r.name.to_string(), serde_json::to_value(r.metric.to_json())?)))
            .collect::<Result<_>>()?;
        std::fs::write(&j, serde_json::to_string_pretty(&json)?)?;
        Ok(vec![c, j])
    }
}

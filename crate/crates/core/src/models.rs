//! Model and objective contracts, plus the concrete models: the badly
//! parameterized 2D Gaussian and L2 regression viewed as a conditional
//! Gaussian.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Deref;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};

/// A point θ in parameter space (or φ, when read in whitened coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Checked constructor: every entry must be finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self + alpha·dir`
    pub fn axpy(&self, alpha: f64, dir: &[f64]) -> ParamVector {
        ParamVector(self.0.iter().zip(dir).map(|(a, d)| a + alpha * d).collect())
    }

    pub fn sub(&self, other: &[f64]) -> ParamVector {
        ParamVector(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.0)
    }

    pub(crate) fn bits_key(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for ParamVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

/// Observed points of uniform dimension, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    dim: usize,
    values: Vec<f64>,
}

impl DataSet {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("data dimension must be >= 1".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptyData);
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: values.len() % dim,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data set"));
        }
        Ok(Self { dim, values })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyData)?.len();
        let mut values = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            values.extend_from_slice(p);
        }
        Self::new(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (acc, v) in m.iter_mut().zip(p) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Covariance `⟨(x−x̄)(x−x̄)ᵀ⟩` with a `1/n` normalization.
    pub fn covariance(&self) -> SymMatrix {
        let mean = self.mean();
        let centered: Vec<Vec<f64>> = self
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(a, b)| a - b).collect())
            .collect();
        SymMatrix::outer_product_mean(self.dim, centered.iter().map(Vec::as_slice))
            .expect("data set is non-empty")
    }

    /// Applies a linear map to every point.
    pub fn transformed(&self, m: &Matrix) -> Result<DataSet> {
        let mut values = Vec::with_capacity(self.len() * m.rows());
        for p in self.iter() {
            values.extend(m.matvec(p)?);
        }
        DataSet::new(m.rows(), values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        write_rows(writer, &header, self.iter())
    }

    /// Reads a headered CSV, one point per row.
    pub fn read_csv<R: Read>(reader: R) -> Result<DataSet> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let dim = rdr.headers()?.len();
        let mut values = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != dim {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, header has {dim}",
                    line + 1,
                    record.len()
                )));
            }
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("row {}: cannot parse {field:?}", line + 1))
                })?;
                values.push(v);
            }
        }
        DataSet::new(dim, values)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<DataSet> {
        DataSet::read_csv(std::fs::File::open(path)?)
    }
}

pub(crate) fn write_rows<'a, W: Write>(
    writer: W,
    header: &[String],
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// A probabilistic model q(x; θ).
pub trait ProbModel: Send + Sync {
    fn n_params(&self) -> usize;

    fn data_dim(&self) -> usize;

    fn log_q(&self, x: &[f64], params: &ParamVector) -> f64;

    /// Score ∂log q(x;θ)/∂θ.
    fn grad_log_q(&self, x: &[f64], params: &ParamVector) -> ParamVector;

    /// Draws `n` points from q(·; θ). Models without a sampler return
    /// [`Error::NoSampler`].
    fn sample(&self, _params: &ParamVector, _n: usize, _seed: u64) -> Result<DataSet> {
        Err(Error::NoSampler)
    }
}

/// A differentiable scalar objective J(θ).
pub trait Objective: Send + Sync {
    fn n_params(&self) -> usize;

    fn value(&self, params: &ParamVector) -> f64;

    fn gradient(&self, params: &ParamVector) -> ParamVector;

    /// KL divergence from the generating distribution, when the objective
    /// knows it.
    fn kl_to_truth(&self, _params: &ParamVector) -> Option<f64> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn value(&self, params: &ParamVector) -> f64 {
        (**self).value(params)
    }
    fn gradient(&self, params: &ParamVector) -> ParamVector {
        (**self).gradient(params)
    }
    fn kl_to_truth(&self, params: &ParamVector) -> Option<f64> {
        (**self).kl_to_truth(params)
    }
}

impl<T: ProbModel + ?Sized> ProbModel for &T {
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }
    fn log_q(&self, x: &[f64], params: &ParamVector) -> f64 {
        (**self).log_q(x, params)
    }
    fn grad_log_q(&self, x: &[f64], params: &ParamVector) -> ParamVector {
        (**self).grad_log_q(x, params)
    }
    fn sample(&self, params: &ParamVector, n: usize, seed: u64) -> Result<DataSet> {
        (**self).sample(params, n, seed)
    }
}

// ---------------------------------------------------------------------------
// 2D Gaussian with a poorly scaled, coupled mean parameterization.

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// ∂μ/∂θ for the 2D Gaussian example. Gradients, the analytic Fisher and the
/// population objective all derive from this one constant.
pub const GAUSS2D_MEAN_JACOBIAN: [[f64; 2]; 2] = [[3.0, 1.0 / 3.0], [1.0 / 3.0, 0.0]];

/// μ(θ) = J_μ·θ = [3θ₁ + θ₂/3, θ₁/3].
pub fn gauss2d_mean(params: &[f64]) -> [f64; 2] {
    let j = GAUSS2D_MEAN_JACOBIAN;
    [
        j[0][0] * params[0] + j[0][1] * params[1],
        j[1][0] * params[0] + j[1][1] * params[1],
    ]
}

fn mean_jacobian_transpose_times(r: [f64; 2]) -> [f64; 2] {
    let j = GAUSS2D_MEAN_JACOBIAN;
    [
        j[0][0] * r[0] + j[1][0] * r[1],
        j[0][1] * r[0] + j[1][1] * r[1],
    ]
}

pub fn gauss2d_log_q(x: &[f64], params: &[f64]) -> f64 {
    let mu = gauss2d_mean(params);
    let d0 = x[0] - mu[0];
    let d1 = x[1] - mu[1];
    -LN_2PI - 0.5 * d0 * d0 - 0.5 * d1 * d1
}

pub fn gauss2d_grad_log_q(x: &[f64], params: &[f64]) -> ParamVector {
    let mu = gauss2d_mean(params);
    mean_jacobian_transpose_times([x[0] - mu[0], x[1] - mu[1]])
        .to_vec()
        .into()
}

/// `n` unit-covariance draws centered at μ(θ), reproducible per seed.
pub fn gauss2d_sample(params: &[f64], n: usize, seed: u64) -> Result<DataSet> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let mu = gauss2d_mean(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        values.push(mu[0] + a);
        values.push(mu[1] + b);
    }
    DataSet::new(2, values)
}

/// KL between two unit-covariance Gaussians: ½‖μ(θ) − μ(θ_true)‖².
pub fn gauss2d_kl(params: &[f64], truth: &[f64]) -> f64 {
    let a = gauss2d_mean(params);
    let b = gauss2d_mean(truth);
    0.5 * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
}

/// The 2D Gaussian q(x;θ) with means [3θ₁ + θ₂/3, θ₁/3] and unit covariance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gauss2d;

impl ProbModel for Gauss2d {
    fn n_params(&self) -> usize {
        2
    }

    fn data_dim(&self) -> usize {
        2
    }

    fn log_q(&self, x: &[f64], params: &ParamVector) -> f64 {
        gauss2d_log_q(x, params)
    }

    fn grad_log_q(&self, x: &[f64], params: &ParamVector) -> ParamVector {
        gauss2d_grad_log_q(x, params)
    }

    fn sample(&self, params: &ParamVector, n: usize, seed: u64) -> Result<DataSet> {
        gauss2d_sample(params, n, seed)
    }
}

/// Negative log likelihood under the exact generating distribution for
/// [`Gauss2d`], computed in closed form.
#[derive(Debug, Clone)]
pub struct Gauss2dPopulation {
    truth: ParamVector,
}

pub fn gauss2d_population_nll(truth: ParamVector) -> Gauss2dPopulation {
    Gauss2dPopulation { truth }
}

impl Gauss2dPopulation {
    pub fn truth(&self) -> &ParamVector {
        &self.truth
    }
}

impl Objective for Gauss2dPopulation {
    fn n_params(&self) -> usize {
        2
    }

    fn value(&self, params: &ParamVector) -> f64 {
        LN_2PI + 1.0 + gauss2d_kl(params, &self.truth)
    }

    fn gradient(&self, params: &ParamVector) -> ParamVector {
        let a = gauss2d_mean(params);
        let b = gauss2d_mean(&self.truth);
        mean_jacobian_transpose_times([a[0] - b[0], a[1] - b[1]])
            .to_vec()
            .into()
    }

    fn kl_to_truth(&self, params: &ParamVector) -> Option<f64> {
        Some(gauss2d_kl(params, &self.truth))
    }
}

// ---------------------------------------------------------------------------
// Finite-sample negative log likelihood.

type KlFn = Arc<dyn Fn(&ParamVector) -> f64 + Send + Sync>;

/// J(θ) = −⟨log q(x;θ)⟩ over a data set.
#[derive(Clone)]
pub struct NllObjective<M> {
    model: M,
    data: DataSet,
    kl: Option<KlFn>,
}

impl<M> fmt::Debug for NllObjective<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NllObjective")
            .field("n_points", &self.data.len())
            .field("has_kl", &self.kl.is_some())
            .finish()
    }
}

pub fn nll_objective<M: ProbModel>(model: M, data: DataSet) -> Result<NllObjective<M>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.dim() != model.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.data_dim(),
            found: data.dim(),
        });
    }
    Ok(NllObjective {
        model,
        data,
        kl: None,
    })
}

impl<M: ProbModel> NllObjective<M> {
    /// Attaches a ground-truth KL used for trace bookkeeping.
    pub fn with_kl(mut self, kl: impl Fn(&ParamVector) -> f64 + Send + Sync + 'static) -> Self {
        self.kl = Some(Arc::new(kl));
        self
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }
}

impl<M: ProbModel> Objective for NllObjective<M> {
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    fn value(&self, params: &ParamVector) -> f64 {
        let total: f64 = self.data.iter().map(|x| self.model.log_q(x, params)).sum();
        -total / self.data.len() as f64
    }

    fn gradient(&self, params: &ParamVector) -> ParamVector {
        let mut acc = vec![0.0; self.model.n_params()];
        for x in self.data.iter() {
            for (a, g) in acc.iter_mut().zip(self.model.grad_log_q(x, params).iter()) {
                *a += g;
            }
        }
        let n = self.data.len() as f64;
        acc.into_iter().map(|a| -a / n).collect::<Vec<_>>().into()
    }

    fn kl_to_truth(&self, params: &ParamVector) -> Option<f64> {
        self.kl.as_ref().map(|f| f(params))
    }
}

// ---------------------------------------------------------------------------
// L2 regression as a conditional Gaussian.

/// A map f(x; θ) with its parameter Jacobian.
pub trait ParametricMap: Send + Sync {
    fn n_params(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value(&self, x: &[f64], params: &[f64]) -> Vec<f64>;
    /// ∂f/∂θ, `output_dim × n_params`.
    fn jacobian(&self, x: &[f64], params: &[f64]) -> Matrix;
}

/// f(x; Θ) = Θ·x with Θ stored row-major as `output_dim × input_dim`.
#[derive(Debug, Clone, Copy)]
pub struct LinearMap {
    pub input_dim: usize,
    pub output_dim: usize,
}

impl LinearMap {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
        }
    }
}

impl ParametricMap for LinearMap {
    fn n_params(&self) -> usize {
        self.input_dim * self.output_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn value(&self, x: &[f64], params: &[f64]) -> Vec<f64> {
        params
            .chunks_exact(self.input_dim)
            .map(|row| crate::linalg::dot(row, x))
            .collect()
    }

    fn jacobian(&self, x: &[f64], _params: &[f64]) -> Matrix {
        let n = self.input_dim;
        Matrix::from_fn(self.output_dim, self.n_params(), |k, p| {
            if p / n == k {
                x[p % n]
            } else {
                0.0
            }
        })
    }
}

/// q(y | x; θ) ∝ exp(−½‖y − f(x;θ)‖²). Data points are `x ++ y` rows.
#[derive(Debug, Clone)]
pub struct L2Regression<F> {
    map: F,
    pairs: DataSet,
}

impl<F: ParametricMap> L2Regression<F> {
    pub fn map(&self) -> &F {
        &self.map
    }

    pub fn pairs(&self) -> &DataSet {
        &self.pairs
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.map.input_dim();
        self.pairs.iter().map(move |p| &p[..d])
    }

    fn split<'a>(&self, point: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        point.split_at(self.map.input_dim())
    }
}

/// Builds the conditional-Gaussian model and its averaged objective over
/// the observed pairs.
pub fn l2_regression_model<F: ParametricMap + Clone>(
    map: F,
    pairs: DataSet,
) -> Result<(L2Regression<F>, NllObjective<L2Regression<F>>)> {
    let expected = map.input_dim() + map.output_dim();
    if pairs.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: pairs.dim(),
        });
    }
    let model = L2Regression { map, pairs };
    let objective = nll_objective(model.clone(), model.pairs.clone())?;
    Ok((model, objective))
}

impl<F: ParametricMap> ProbModel for L2Regression<F> {
    fn n_params(&self) -> usize {
        self.map.n_params()
    }

    fn data_dim(&self) -> usize {
        self.map.input_dim() + self.map.output_dim()
    }

    fn log_q(&self, point: &[f64], params: &ParamVector) -> f64 {
        let (x, y) = self.split(point);
        let f = self.map.value(x, params);
        let sq: f64 = y.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * sq - 0.5 * self.map.output_dim() as f64 * LN_2PI
    }

    fn grad_log_q(&self, point: &[f64], params: &ParamVector) -> ParamVector {
        let (x, y) = self.split(point);
        let f = self.map.value(x, params);
        let residual: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
        self.map
            .jacobian(x, params)
            .transpose()
            .matvec(&residual)
            .expect("jacobian rows match output_dim")
            .into()
    }

    /// Inputs are resampled from the observed pairs; responses are drawn
    /// from the model, y ~ N(f(x;θ), I).
    fn sample(&self, params: &ParamVector, n: usize, seed: u64) -> Result<DataSet> {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.pairs.len();
        let mut values = Vec::with_capacity(n * self.data_dim());
        for _ in 0..n {
            let x = &self.pairs.point(rng.random_range(0..m))[..self.map.input_dim()];
            let f = self.map.value(x, params);
            values.extend_from_slice(x);
            for mean in f {
                let z: f64 = rng.sample(StandardNormal);
                values.push(mean + z);
            }
        }
        DataSet::new(self.data_dim(), values)
    }
}

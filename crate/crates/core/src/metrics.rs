//! Metric providers G(θ) and the matrix-parameter natural update.
//!
//! A provider turns a parameter point into a [`Metric`]: a symmetric PSD
//! matrix, stored densely or as its diagonal. Providers never rank each
//! other; choosing one is the caller's job.

use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SymMatrix};
use crate::models::{DataSet, L2Regression, ParamVector, ParametricMap, ProbModel};

/// Metrics whose smallest eigenvalue is above `-PSD_REL_TOL * largest` are accepted.
pub const PSD_REL_TOL: f64 = 1e-10;

/// Default Monte-Carlo sample count for [`MonteCarloFisher`].
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Storage layout of a metric. Block-diagonal layouts would slot in here as
/// an additional variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Dense,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricMatrix {
    Dense(SymMatrix),
    Diagonal(Vec<f64>),
}

/// G(θ) together with the point it was evaluated at.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    matrix: MetricMatrix,
    at_params: ParamVector,
}

impl Metric {
    /// Dense metric; rejects matrices that are not PSD within [`PSD_REL_TOL`].
    pub fn dense(matrix: SymMatrix, at_params: ParamVector) -> Result<Self> {
        let eig = linalg::sym_eig(&matrix)?;
        if eig.min() < -PSD_REL_TOL * eig.max().abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveSemidefinite {
                eigenvalue: eig.min(),
            });
        }
        Ok(Self {
            matrix: MetricMatrix::Dense(matrix),
            at_params,
        })
    }

    pub fn diagonal(values: Vec<f64>, at_params: ParamVector) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("metric dimension must be >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diagonal metric"));
        }
        let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(&neg) = values.iter().find(|&&v| v < -PSD_REL_TOL * max) {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: neg });
        }
        Ok(Self {
            matrix: MetricMatrix::Diagonal(values),
            at_params,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: MetricMatrix::Dense(SymMatrix::identity(dim)),
            at_params: ParamVector::zeros(dim),
        }
    }

    pub fn matrix(&self) -> &MetricMatrix {
        &self.matrix
    }

    pub fn at_params(&self) -> &ParamVector {
        &self.at_params
    }

    pub fn representation(&self) -> Representation {
        match self.matrix {
            MetricMatrix::Dense(_) => Representation::Dense,
            MetricMatrix::Diagonal(_) => Representation::Diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.matrix {
            MetricMatrix::Dense(m) => m.dim(),
            MetricMatrix::Diagonal(d) => d.len(),
        }
    }

    /// The metric as a dense matrix, expanding diagonal storage.
    pub fn to_sym(&self) -> SymMatrix {
        match &self.matrix {
            MetricMatrix::Dense(m) => m.clone(),
            MetricMatrix::Diagonal(d) => SymMatrix::diag(d),
        }
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        match &self.matrix {
            MetricMatrix::Dense(m) => m.diagonal(),
            MetricMatrix::Diagonal(d) => d.clone(),
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        match &self.matrix {
            MetricMatrix::Dense(m) => linalg::is_positive_definite(m),
            MetricMatrix::Diagonal(d) => d.iter().all(|&v| v > 0.0),
        }
    }

    /// G·v
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.matrix {
            MetricMatrix::Dense(m) => m.matvec(v),
            MetricMatrix::Diagonal(d) => {
                if d.len() != v.len() {
                    return Err(Error::DimensionMismatch {
                        expected: d.len(),
                        found: v.len(),
                    });
                }
                Ok(d.iter().zip(v).map(|(a, b)| a * b).collect())
            }
        }
    }

    pub fn to_json(&self) -> MetricJson {
        let entries = match &self.matrix {
            MetricMatrix::Dense(m) => m.entries().to_vec(),
            MetricMatrix::Diagonal(d) => d.clone(),
        };
        MetricJson {
            dim: self.dim(),
            representation: self.representation(),
            entries,
            at_params: self.at_params.to_vec(),
        }
    }

    pub fn from_json(json: &MetricJson) -> Result<Self> {
        let at = ParamVector::new(json.at_params.clone())?;
        match json.representation {
            Representation::Dense => {
                Metric::dense(SymMatrix::new(json.dim, json.entries.clone())?, at)
            }
            Representation::Diagonal => {
                if json.entries.len() != json.dim {
                    return Err(Error::DimensionMismatch {
                        expected: json.dim,
                        found: json.entries.len(),
                    });
                }
                Metric::diagonal(json.entries.clone(), at)
            }
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Wire format: `{"dim", "representation", "entries", "at_params"}`.
/// Dense entries are row-major `dim²`; diagonal entries have length `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricJson {
    pub dim: usize,
    pub representation: Representation,
    pub entries: Vec<f64>,
    pub at_params: Vec<f64>,
}

/// What evaluating a provider costs, roughly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostClass {
    Analytic,
    MonteCarlo,
    Empirical,
    Energy,
    DiagonalOf(Box<CostClass>),
}

pub trait MetricProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn cost_class(&self) -> CostClass;

    fn evaluate(&self, params: &ParamVector) -> Result<Metric>;
}

impl<T: MetricProvider + ?Sized> MetricProvider for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn cost_class(&self) -> CostClass {
        (**self).cost_class()
    }
    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        (**self).evaluate(params)
    }
}

impl<T: MetricProvider + ?Sized> MetricProvider for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn cost_class(&self) -> CostClass {
        (**self).cost_class()
    }
    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        (**self).evaluate(params)
    }
}

fn check_dim(expected: usize, params: &ParamVector) -> Result<()> {
    if params.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            found: params.len(),
        })
    }
}

// ---------------------------------------------------------------------------

/// The Fisher information of the 2D Gaussian example, `[[3²+1/3², 1], [1, 1/3²]]`.
/// It does not depend on θ; the returned metric is tagged with θ = 0.
pub fn fisher_analytic_gauss2d() -> Metric {
    Metric {
        matrix: MetricMatrix::Dense(gauss2d_fisher_matrix()),
        at_params: ParamVector::zeros(2),
    }
}

fn gauss2d_fisher_matrix() -> SymMatrix {
    SymMatrix::from_upper(2, |i, j| match (i, j) {
        (0, 0) => 82.0 / 9.0,
        (1, 1) => 1.0 / 9.0,
        _ => 1.0,
    })
}

/// Provider form of [`fisher_analytic_gauss2d`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Gauss2dFisher;

impl MetricProvider for Gauss2dFisher {
    fn dim(&self) -> usize {
        2
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Analytic
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        check_dim(2, params)?;
        Ok(Metric {
            matrix: MetricMatrix::Dense(gauss2d_fisher_matrix()),
            at_params: params.clone(),
        })
    }
}

/// A θ-independent metric, e.g. the identity or a fixed preconditioner.
#[derive(Debug, Clone)]
pub struct ConstantMetric {
    metric: Metric,
}

impl ConstantMetric {
    pub fn new(metric: Metric) -> Self {
        Self { metric }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Metric::identity(dim))
    }
}

impl MetricProvider for ConstantMetric {
    fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Analytic
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        check_dim(self.dim(), params)?;
        Ok(Metric {
            matrix: self.metric.matrix.clone(),
            at_params: params.clone(),
        })
    }
}

// ---------------------------------------------------------------------------

fn score_outer_mean<M: ProbModel>(model: &M, params: &ParamVector, data: &DataSet) -> Result<Metric> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.dim() != model.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.data_dim(),
            found: data.dim(),
        });
    }
    check_dim(model.n_params(), params)?;
    let scores: Vec<ParamVector> = data.iter().map(|x| model.grad_log_q(x, params)).collect();
    let g = SymMatrix::outer_product_mean(model.n_params(), scores.iter().map(|s| s.as_slice()))?;
    Ok(Metric {
        matrix: MetricMatrix::Dense(g),
        at_params: params.clone(),
    })
}

/// G_ij = ⟨∂_i log q · ∂_j log q⟩ averaged over `n_samples` draws from q(·;θ).
pub fn fisher_monte_carlo<M: ProbModel>(
    model: &M,
    params: &ParamVector,
    n_samples: usize,
    seed: u64,
) -> Result<Metric> {
    if n_samples == 0 {
        return Err(Error::EmptyData);
    }
    let samples = model.sample(params, n_samples, seed)?;
    score_outer_mean(model, params, &samples)
}

/// The same outer-product average, taken over observed data instead of the model.
pub fn fisher_empirical<M: ProbModel>(model: &M, params: &ParamVector, data: &DataSet) -> Result<Metric> {
    score_outer_mean(model, params, data)
}

/// Outer-product average of a user-supplied energy gradient ∂E/∂θ. The
/// log-partition term is ignored entirely.
pub fn energy_metric<F>(energy_grad: F, data: &DataSet, params: &ParamVector) -> Result<Metric>
where
    F: Fn(&[f64], &ParamVector) -> ParamVector,
{
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = params.len();
    let grads: Vec<ParamVector> = data.iter().map(|x| energy_grad(x, params)).collect();
    let g = SymMatrix::outer_product_mean(n, grads.iter().map(|s| s.as_slice()))?;
    Ok(Metric {
        matrix: MetricMatrix::Dense(g),
        at_params: params.clone(),
    })
}

/// Fisher of an L2 regression model with the response integrated out
/// analytically and inputs averaged over the observed pairs: ⟨J_fᵀ J_f⟩.
pub fn fisher_conditional<F: ParametricMap>(model: &L2Regression<F>, params: &ParamVector) -> Result<Metric> {
    let map = model.map();
    check_dim(map.n_params(), params)?;
    let n = map.n_params();
    let mut acc = vec![0.0; n * n];
    let mut count = 0usize;
    for x in model.inputs() {
        let jac = map.jacobian(x, params);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..jac.rows() {
                    s += jac.get(k, i) * jac.get(k, j);
                }
                acc[i * n + j] += s;
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyData);
    }
    let c = count as f64;
    Ok(Metric {
        matrix: MetricMatrix::Dense(SymMatrix::from_upper(n, |i, j| acc[i * n + j] / c)),
        at_params: params.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct MonteCarloFisher<M> {
    model: M,
    n_samples: usize,
    seed: u64,
}

impl<M: ProbModel> MonteCarloFisher<M> {
    pub fn new(model: M, n_samples: usize, seed: u64) -> Self {
        Self {
            model,
            n_samples,
            seed,
        }
    }
}

impl<M: ProbModel> MetricProvider for MonteCarloFisher<M> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn cost_class(&self) -> CostClass {
        CostClass::MonteCarlo
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        fisher_monte_carlo(&self.model, params, self.n_samples, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct EmpiricalFisher<M> {
    model: M,
    data: DataSet,
}

impl<M: ProbModel> EmpiricalFisher<M> {
    pub fn new(model: M, data: DataSet) -> Self {
        Self { model, data }
    }
}

impl<M: ProbModel> MetricProvider for EmpiricalFisher<M> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Empirical
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        fisher_empirical(&self.model, params, &self.data)
    }
}

pub struct EnergyMetric<F> {
    energy_grad: F,
    data: DataSet,
    dim: usize,
}

impl<F> EnergyMetric<F>
where
    F: Fn(&[f64], &ParamVector) -> ParamVector + Send + Sync,
{
    pub fn new(energy_grad: F, data: DataSet, dim: usize) -> Self {
        Self {
            energy_grad,
            data,
            dim,
        }
    }
}

impl<F> MetricProvider for EnergyMetric<F>
where
    F: Fn(&[f64], &ParamVector) -> ParamVector + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Energy
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        check_dim(self.dim, params)?;
        energy_metric(&self.energy_grad, &self.data, params)
    }
}

/// Provider form of [`fisher_conditional`].
#[derive(Debug, Clone)]
pub struct ConditionalFisher<F> {
    model: L2Regression<F>,
}

impl<F: ParametricMap> ConditionalFisher<F> {
    pub fn new(model: L2Regression<F>) -> Self {
        Self { model }
    }
}

impl<F: ParametricMap> MetricProvider for ConditionalFisher<F> {
    fn dim(&self) -> usize {
        self.model.map().n_params()
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Empirical
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        fisher_conditional(&self.model, params)
    }
}

/// Keeps only the diagonal of the wrapped provider's metric.
#[derive(Debug, Clone)]
pub struct Diagonal<P> {
    inner: P,
}

pub fn diagonal_of<P: MetricProvider>(provider: P) -> Diagonal<P> {
    Diagonal { inner: provider }
}

impl<P: MetricProvider> MetricProvider for Diagonal<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn cost_class(&self) -> CostClass {
        CostClass::DiagonalOf(Box::new(self.inner.cost_class()))
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        let m = self.inner.evaluate(params)?;
        Ok(Metric {
            matrix: MetricMatrix::Diagonal(m.diagonal_entries()),
            at_params: m.at_params,
        })
    }
}

/// Memoizes a provider per exact θ (bitwise key).
pub struct Cached<P> {
    inner: P,
    cache: RwLock<HashMap<Vec<u64>, Metric>>,
}

impl<P: MetricProvider> Cached<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<P: MetricProvider> MetricProvider for Cached<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn cost_class(&self) -> CostClass {
        self.inner.cost_class()
    }

    fn evaluate(&self, params: &ParamVector) -> Result<Metric> {
        let key = params.bits_key();
        if let Some(m) = self.cache.read().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(m);
        }
        let m = self.inner.evaluate(params)?;
        if let Ok(mut c) = self.cache.write() {
            c.entry(key).or_insert_with(|| m.clone());
        }
        Ok(m)
    }
}

// ---------------------------------------------------------------------------

/// The relative-gradient update for a square matrix parameter: (∂J/∂W)·Wᵀ·W.
pub fn matrix_natural_update(grad: &Matrix, w: &Matrix) -> Result<Matrix> {
    if !w.is_square() {
        return Err(Error::NonSquare {
            rows: w.rows(),
            cols: w.cols(),
        });
    }
    if grad.rows() != w.rows() || grad.cols() != w.cols() {
        return Err(Error::DimensionMismatch {
            expected: w.rows() * w.cols(),
            found: grad.rows() * grad.cols(),
        });
    }
    grad.matmul(&w.transpose())?.matmul(w)
}

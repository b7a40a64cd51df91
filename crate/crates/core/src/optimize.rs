//! Descent loops: steepest descent, natural-gradient descent, and descent in
//! the whitened parameter space φ = G^{1/2}(θ_fixed)·θ.
//!
//! Every loop takes steps of the form θ ← θ − η·direction. The metric is
//! re-evaluated only every `refresh_interval` steps, never mid-step. A
//! non-finite objective or gradient ends the run with a partial trace
//! flagged [`Termination::Diverged`] rather than an error.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix, DEFAULT_EPS_FLOOR};
use crate::metrics::{Metric, MetricMatrix, MetricProvider};
use crate::models::{Objective, ParamVector};
use crate::regularize::{apply_inverse_metric, RegularizationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Steepest,
    Natural,
    Whitened,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steepest" => Ok(Self::Steepest),
            "natural" => Ok(Self::Natural),
            "whitened" => Ok(Self::Whitened),
            other => Err(Error::InvalidConfig(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Steps between metric re-evaluations.
    pub refresh_interval: usize,
    /// Stop once ‖∇J‖ falls below this.
    pub stop_tol: f64,
    pub regularization: RegularizationConfig,
    pub seed: u64,
    /// Check ∇Jᵀ·direction > 0 on every natural step.
    #[serde(default)]
    pub debug_checks: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            max_steps: 2000,
            refresh_interval: 10,
            stop_tol: 1e-10,
            regularization: RegularizationConfig::default(),
            seed: 0,
            debug_checks: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        if self.refresh_interval == 0 {
            return Err(Error::InvalidConfig("refresh_interval must be >= 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stop_tol must be >= 0, got {}",
                self.stop_tol
            )));
        }
        self.regularization.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxSteps,
    StopTol,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub params: ParamVector,
    pub objective: f64,
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    pub records: Vec<TraceRecord>,
    pub terminated_by: Termination,
}

impl DescentTrace {
    pub fn diverged(&self) -> bool {
        self.terminated_by == Termination::Diverged
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_params(&self) -> Option<&ParamVector> {
        self.last().map(|r| &r.params)
    }

    pub fn kl_curve(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.kl).collect()
    }

    /// First recorded step whose KL is at or below `threshold`.
    pub fn steps_to_kl(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.kl.is_some_and(|k| k <= threshold))
            .map(|r| r.step)
    }

    /// CSV with columns `step, theta_0..theta_{N-1}, objective, kl`.
    /// Missing KL values are left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.records.first().map_or(0, |r| r.params.len());
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string()];
        header.extend((0..n).map(|i| format!("theta_{i}")));
        header.push("objective".into());
        header.push("kl".into());
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.step.to_string()];
            row.extend(r.params.iter().map(|v| v.to_string()));
            row.push(r.objective.to_string());
            row.push(r.kl.map(|k| k.to_string()).unwrap_or_default());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// JSON export with the config embedded alongside the records.
    pub fn to_json(&self, method: Method, config: &OptimizerConfig) -> serde_json::Value {
        serde_json::json!({
            "method": method,
            "config": config,
            "terminated_by": self.terminated_by,
            "records": self.records,
        })
    }
}

fn descend<O, F>(obj: &O, theta0: &ParamVector, config: &OptimizerConfig, mut next: F) -> Result<DescentTrace>
where
    O: Objective + ?Sized,
    F: FnMut(usize, &ParamVector, &ParamVector) -> Result<ParamVector>,
{
    config.validate()?;
    if theta0.len() != obj.n_params() {
        return Err(Error::DimensionMismatch {
            expected: obj.n_params(),
            found: theta0.len(),
        });
    }
    let mut theta = ParamVector::new(theta0.to_vec())?;
    let mut records = Vec::new();
    let finish = |records, terminated_by| Ok(DescentTrace { records, terminated_by });

    let value = obj.value(&theta);
    if !value.is_finite() {
        return finish(records, Termination::Diverged);
    }
    records.push(TraceRecord {
        step: 0,
        kl: obj.kl_to_truth(&theta),
        params: theta.clone(),
        objective: value,
    });

    for t in 0..config.max_steps {
        let grad = obj.gradient(&theta);
        if !grad.is_finite() {
            return finish(records, Termination::Diverged);
        }
        if grad.norm() < config.stop_tol {
            return finish(records, Termination::StopTol);
        }
        let candidate = next(t, &theta, &grad)?;
        if !candidate.is_finite() {
            return finish(records, Termination::Diverged);
        }
        let value = obj.value(&candidate);
        if !value.is_finite() {
            return finish(records, Termination::Diverged);
        }
        records.push(TraceRecord {
            step: t + 1,
            kl: obj.kl_to_truth(&candidate),
            params: candidate.clone(),
            objective: value,
        });
        theta = candidate;
    }
    finish(records, Termination::MaxSteps)
}

/// θ ← θ − η·∇J(θ)
pub fn steepest_descent<O: Objective + ?Sized>(
    obj: &O,
    theta0: &ParamVector,
    config: &OptimizerConfig,
) -> Result<DescentTrace> {
    let eta = config.learning_rate;
    descend(obj, theta0, config, |_, theta, grad| Ok(theta.axpy(-eta, grad)))
}

/// θ ← θ − η·G⁻¹(θ_fixed)·∇J(θ), with θ_fixed refreshed every
/// `refresh_interval` steps.
pub fn natural_descent<O, P>(
    obj: &O,
    provider: &P,
    theta0: &ParamVector,
    config: &OptimizerConfig,
) -> Result<DescentTrace>
where
    O: Objective + ?Sized,
    P: MetricProvider + ?Sized,
{
    check_provider(obj.n_params(), provider.dim())?;
    let eta = config.learning_rate;
    let mut metric: Option<Metric> = None;
    descend(obj, theta0, config, |t, theta, grad| {
        if t % config.refresh_interval == 0 || metric.is_none() {
            metric = Some(provider.evaluate(theta)?);
        }
        let g = metric.as_ref().expect("metric set above");
        let dir = apply_inverse_metric(g, grad, &config.regularization)?;
        if config.debug_checks && linalg::dot(grad, &dir) <= 0.0 {
            return Err(Error::NotDescent { step: t });
        }
        Ok(theta.axpy(-eta, &dir))
    })
}

/// W = G^{1/2}(θ_fixed) and its inverse, defining φ = W·θ.
#[derive(Debug, Clone)]
pub struct WhitenedState {
    pub theta_fixed: ParamVector,
    pub w: SymMatrix,
    pub w_inv: SymMatrix,
}

impl WhitenedState {
    pub fn new(metric: &Metric) -> Result<Self> {
        if !metric.is_positive_definite() {
            return Err(Error::Singular(
                "metric is not positive definite; cannot form G^(1/2)".into(),
            ));
        }
        let (w, w_inv) = match metric.matrix() {
            MetricMatrix::Dense(g) => (linalg::sym_sqrt(g)?, linalg::sym_inv_sqrt(g, DEFAULT_EPS_FLOOR)?),
            MetricMatrix::Diagonal(d) => (
                SymMatrix::diag(&d.iter().map(|v| v.sqrt()).collect::<Vec<_>>()),
                SymMatrix::diag(&d.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>()),
            ),
        };
        Ok(Self {
            theta_fixed: metric.at_params().clone(),
            w,
            w_inv,
        })
    }

    pub fn to_phi(&self, theta: &[f64]) -> Result<ParamVector> {
        Ok(self.w.matvec(theta)?.into())
    }

    pub fn to_theta(&self, phi: &[f64]) -> Result<ParamVector> {
        Ok(self.w_inv.matvec(phi)?.into())
    }

    /// ∇_φ J = W⁻¹·∇_θ J (W is symmetric).
    pub fn phi_gradient(&self, theta_grad: &[f64]) -> Result<ParamVector> {
        Ok(self.w_inv.matvec(theta_grad)?.into())
    }

    /// J expressed over φ, for handing to an optimizer that knows nothing
    /// about metrics.
    pub fn objective<'a, O: Objective + ?Sized>(&'a self, obj: &'a O) -> PhiObjective<'a, O> {
        PhiObjective { state: self, obj }
    }
}

/// J(W⁻¹·φ) as an [`Objective`] over φ.
pub struct PhiObjective<'a, O: ?Sized> {
    state: &'a WhitenedState,
    obj: &'a O,
}

impl<O: Objective + ?Sized> Objective for PhiObjective<'_, O> {
    fn n_params(&self) -> usize {
        self.obj.n_params()
    }

    fn value(&self, phi: &ParamVector) -> f64 {
        match self.state.to_theta(phi) {
            Ok(theta) => self.obj.value(&theta),
            Err(_) => f64::NAN,
        }
    }

    fn gradient(&self, phi: &ParamVector) -> ParamVector {
        self.state
            .to_theta(phi)
            .and_then(|theta| self.state.phi_gradient(&self.obj.gradient(&theta)))
            .unwrap_or_else(|_| vec![f64::NAN; phi.len()].into())
    }

    fn kl_to_truth(&self, phi: &ParamVector) -> Option<f64> {
        self.state
            .to_theta(phi)
            .ok()
            .and_then(|theta| self.obj.kl_to_truth(&theta))
    }
}

/// Steepest descent in φ = G^{1/2}(θ_fixed)·θ:
/// φ_t = W·θ_t, Δφ = −η·∇_φ J, θ_{t+1} = W⁻¹(φ_t + Δφ).
/// θ_fixed (and W) move to the current θ every `refresh_interval` steps.
pub fn whitened_descent<O, P>(
    obj: &O,
    provider: &P,
    theta0: &ParamVector,
    config: &OptimizerConfig,
) -> Result<DescentTrace>
where
    O: Objective + ?Sized,
    P: MetricProvider + ?Sized,
{
    check_provider(obj.n_params(), provider.dim())?;
    let eta = config.learning_rate;
    let mut state: Option<WhitenedState> = None;
    descend(obj, theta0, config, |t, theta, grad| {
        if t % config.refresh_interval == 0 || state.is_none() {
            state = Some(WhitenedState::new(&provider.evaluate(theta)?)?);
        }
        let s = state.as_ref().expect("state set above");
        let phi = s.to_phi(theta)?;
        let phi_grad = s.phi_gradient(grad)?;
        s.to_theta(&phi.axpy(-eta, &phi_grad))
    })
}

/// True iff ∇J(θ)ᵀ·H·∇J(θ) > 0, i.e. −H·∇J descends J for a small enough step.
pub fn descent_direction_holds<O: Objective + ?Sized>(obj: &O, h: &SymMatrix, theta: &ParamVector) -> bool {
    let g = obj.gradient(theta);
    match h.matvec(&g) {
        Ok(hg) => linalg::dot(&g, &hg) > 0.0,
        Err(_) => false,
    }
}

fn check_provider(n_params: usize, dim: usize) -> Result<()> {
    if n_params == dim {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: n_params,
            found: dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ConstantMetric, Gauss2dFisher};
    use crate::models::gauss2d_population_nll;

    struct Quadratic1d;

    impl Objective for Quadratic1d {
        fn n_params(&self) -> usize {
            1
        }
        fn value(&self, p: &ParamVector) -> f64 {
            0.5 * p[0] * p[0]
        }
        fn gradient(&self, p: &ParamVector) -> ParamVector {
            vec![p[0]].into()
        }
    }

    fn cfg(lr: f64, steps: usize) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: lr,
            max_steps: steps,
            ..Default::default()
        }
    }

    #[test]
    fn zero_gradient_stops_immediately() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let t = steepest_descent(&pop, &[0.0, 0.0].into(), &cfg(0.1, 10)).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.terminated_by, Termination::StopTol);
    }

    #[test]
    fn quadratic_converges_in_one_step() {
        let t = steepest_descent(&Quadratic1d, &[3.0].into(), &cfg(1.0, 10)).unwrap();
        assert_eq!(t.records[1].params.as_slice(), &[0.0]);
        assert_eq!(t.terminated_by, Termination::StopTol);
        assert_eq!(t.records.len(), 2);
    }

    #[test]
    fn first_steepest_step_follows_negative_gradient() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let t = steepest_descent(&pop, &[1.0, -1.0].into(), &cfg(0.02, 1)).unwrap();
        let step = t.records[1].params.sub(&t.records[0].params);
        let expected = [-0.02 * 73.0 / 9.0, -0.02 * 8.0 / 9.0];
        assert!((step[0] - expected[0]).abs() < 1e-15 && (step[1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn one_step_natural_convergence() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let t = natural_descent(&pop, &Gauss2dFisher, &[1.0, -1.0].into(), &cfg(1.0, 5)).unwrap();
        assert!(t.records[1].params.norm() < 1e-12);
    }

    #[test]
    fn identity_metric_matches_steepest() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let c = cfg(0.02, 300);
        let s = steepest_descent(&pop, &[1.0, -1.0].into(), &c).unwrap();
        let n = natural_descent(&pop, &ConstantMetric::identity(2), &[1.0, -1.0].into(), &c).unwrap();
        let w = whitened_descent(&pop, &ConstantMetric::identity(2), &[1.0, -1.0].into(), &c).unwrap();
        assert_eq!(s.records.len(), n.records.len());
        for ((a, b), c) in s.records.iter().zip(&n.records).zip(&w.records) {
            for i in 0..2 {
                assert!((a.params[i] - b.params[i]).abs() <= 1e-15);
                assert!((a.params[i] - c.params[i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn divergence_is_flagged_not_raised() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let t = steepest_descent(&pop, &[1.0, -1.0].into(), &cfg(0.5, 5000)).unwrap();
        assert!(t.diverged());
        assert!(t.records.iter().all(|r| r.objective.is_finite()));
        let steps: Vec<usize> = t.records.iter().map(|r| r.step).collect();
        assert!(steps.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn refresh_interval_controls_metric_evaluations() {
        use crate::metrics::{CostClass, MetricProvider};
        use std::sync::atomic::{AtomicUsize, Ordering};

        struct Counting(AtomicUsize);
        impl MetricProvider for Counting {
            fn dim(&self) -> usize {
                2
            }
            fn cost_class(&self) -> CostClass {
                CostClass::Analytic
            }
            fn evaluate(&self, p: &ParamVector) -> Result<Metric> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Gauss2dFisher.evaluate(p)
            }
        }
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let counter = Counting(AtomicUsize::new(0));
        let c = OptimizerConfig {
            refresh_interval: 7,
            ..cfg(0.01, 50)
        };
        natural_descent(&pop, &counter, &[1.0, -1.0].into(), &c).unwrap();
        // steps 0, 7, ..., 49
        assert_eq!(counter.0.load(Ordering::SeqCst), 8);
    }

    #[test]
    fn debug_checks_pass_on_positive_definite_metric() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let c = OptimizerConfig {
            debug_checks: true,
            ..cfg(0.05, 100)
        };
        let diag = crate::metrics::diagonal_of(Gauss2dFisher);
        assert!(natural_descent(&pop, &diag, &[1.0, -1.0].into(), &c).is_ok());
        assert!(natural_descent(&pop, &Gauss2dFisher, &[1.0, -1.0].into(), &c).is_ok());
    }

    #[test]
    fn descent_direction_examples() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        assert!(descent_direction_holds(&pop, &SymMatrix::identity(2), &[1.0, 2.0].into()));

        struct Fixed(Vec<f64>);
        impl Objective for Fixed {
            fn n_params(&self) -> usize {
                2
            }
            fn value(&self, _: &ParamVector) -> f64 {
                0.0
            }
            fn gradient(&self, _: &ParamVector) -> ParamVector {
                self.0.clone().into()
            }
        }
        let obj = Fixed(vec![0.0, 1.0]);
        assert!(!descent_direction_holds(&obj, &SymMatrix::diag(&[1.0, -1.0]), &[0.0, 0.0].into()));
    }

    #[test]
    fn phi_objective_gradient_is_whitened() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let state = WhitenedState::new(&Gauss2dFisher.evaluate(&[0.0, 0.0].into()).unwrap()).unwrap();
        let phi_obj = state.objective(&pop);
        let theta: ParamVector = [0.7, -0.2].into();
        let phi = state.to_phi(&theta).unwrap();
        assert!((phi_obj.value(&phi) - pop.value(&theta)).abs() < 1e-12);
        // in φ the gradient is φ − φ_true
        let g = phi_obj.gradient(&phi);
        assert!((g[0] - phi[0]).abs() < 1e-12 && (g[1] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn whitened_rejects_singular_metric() {
        let singular = ConstantMetric::new(Metric::dense(SymMatrix::diag(&[1.0, 0.0]), ParamVector::zeros(2)).unwrap());
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        assert!(whitened_descent(&pop, &singular, &[1.0, -1.0].into(), &cfg(0.1, 3)).is_err());
    }

    #[test]
    fn config_validation() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let bad = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(steepest_descent(&pop, &[1.0, 1.0].into(), &bad).is_err());
        let bad = OptimizerConfig {
            refresh_interval: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(steepest_descent(&pop, &[1.0].into(), &Default::default()).is_err());
    }

    #[test]
    fn csv_layout() {
        let pop = gauss2d_population_nll([0.0, 0.0].into());
        let t = steepest_descent(&pop, &[1.0, -1.0].into(), &cfg(0.02, 2)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,theta_0,theta_1,objective,kl"));
        assert_eq!(lines.count(), 3);
        let json = t.to_json(Method::Steepest, &cfg(0.02, 2));
        assert_eq!(json["config"]["learning_rate"], 0.02);
        assert_eq!(json["terminated_by"], "max_steps");
    }
}

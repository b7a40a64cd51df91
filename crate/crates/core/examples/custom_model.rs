// Plugging in a model of your own: a 1D Gaussian with parameters (μ, log σ).
// Its Fisher metric diag(1/σ², 2) is estimated by Monte Carlo from the sampler.

use natgrad::metrics::MonteCarloFisher;
use natgrad::models::{nll_objective, DataSet, ProbModel};
use natgrad::optimize::natural_descent;
use natgrad::{OptimizerConfig, ParamVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Gauss1d;

impl ProbModel for Gauss1d {
    fn n_params(&self) -> usize {
        2
    }

    fn data_dim(&self) -> usize {
        1
    }

    fn log_q(&self, x: &[f64], p: &ParamVector) -> f64 {
        let z = (x[0] - p[0]) * (-p[1]).exp();
        -0.5 * z * z - p[1] - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    fn grad_log_q(&self, x: &[f64], p: &ParamVector) -> ParamVector {
        let inv_var = (-2.0 * p[1]).exp();
        let r = x[0] - p[0];
        ParamVector::from([r * inv_var, r * r * inv_var - 1.0])
    }

    fn sample(&self, p: &ParamVector, n: usize, seed: u64) -> natgrad::Result<DataSet> {
        let normal = Normal::new(p[0], p[1].exp()).map_err(|e| natgrad::Error::InvalidConfig(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataSet::new(1, (0..n).map(|_| normal.sample(&mut rng)).collect())
    }
}

pub fn run_example() -> natgrad::Result<()> {
    let data = Gauss1d.sample(&ParamVector::from([4.0, 0.5]), 2_000, 11)?;
    let objective = nll_objective(Gauss1d, data)?;
    let config = OptimizerConfig {
        learning_rate: 0.3,
        max_steps: 200,
        ..Default::default()
    };
    let trace = natural_descent(&objective, &MonteCarloFisher::new(Gauss1d, 2_000, 5), &ParamVector::zeros(2), &config)?;
    let last = trace.last().expect("non-empty trace");
    println!(
        "after {} steps: μ = {:.3}, σ = {:.3}",
        last.step,
        last.params[0],
        last.params[1].exp()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

// Linear regression with strongly correlated inputs. The Fisher metric of
// the conditional Gaussian model is E[xxᵀ], so natural descent is
// insensitive to the correlation that slows steepest descent.

use natgrad::metrics::ConditionalFisher;
use natgrad::models::{l2_regression_model, DataSet, LinearMap};
use natgrad::optimize::{natural_descent, steepest_descent};
use natgrad::{OptimizerConfig, ParamVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> natgrad::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            let b = 0.95 * a + 0.3 * e;
            vec![a, b, 2.0 * a - b]
        })
        .collect();
    let (model, objective) = l2_regression_model(LinearMap::new(2, 1), DataSet::from_points(&rows)?)?;

    let theta0 = ParamVector::zeros(2);
    let natural = natural_descent(
        &objective,
        &ConditionalFisher::new(model),
        &theta0,
        &OptimizerConfig {
            learning_rate: 0.5,
            ..Default::default()
        },
    )?;
    let steepest = steepest_descent(
        &objective,
        &theta0,
        &OptimizerConfig {
            learning_rate: 0.1,
            max_steps: 20_000,
            ..Default::default()
        },
    )?;
    for (name, trace) in [("natural", &natural), ("steepest", &steepest)] {
        let last = trace.last().expect("non-empty trace");
        println!("{name:>8}: {} steps, θ = {:?}", last.step, last.params.as_slice());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

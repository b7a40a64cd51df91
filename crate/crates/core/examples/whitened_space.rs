// In φ = G^{1/2}θ the metric is the identity, so a plain gradient step in φ
// is the natural-gradient step in θ.

use natgrad::metrics::fisher_analytic_gauss2d;
use natgrad::models::{gauss2d_population_nll, Objective};
use natgrad::optimize::{whitened_descent, WhitenedState};
use natgrad::metrics::Gauss2dFisher;
use natgrad::regularize::apply_inverse_metric;
use natgrad::{OptimizerConfig, ParamVector};

pub fn run_example() -> natgrad::Result<()> {
    let obj = gauss2d_population_nll(ParamVector::zeros(2));
    let theta = ParamVector::from([1.0, -1.0]);
    let eta = 0.1;

    let metric = fisher_analytic_gauss2d();
    let natural_dir = apply_inverse_metric(&metric, &obj.gradient(&theta), &Default::default())?;
    let via_theta = theta.axpy(-eta, &natural_dir);

    let state = WhitenedState::new(&metric)?;
    let phi = state.to_phi(&theta)?;
    let phi_grad = state.phi_gradient(&obj.gradient(&theta))?;
    let via_phi = state.to_theta(&phi.axpy(-eta, &phi_grad))?;
    println!("natural step in θ: {:?}", via_theta.as_slice());
    println!("plain step in φ:   {:?}", via_phi.as_slice());

    let config = OptimizerConfig {
        learning_rate: 0.1,
        max_steps: 300,
        ..Default::default()
    };
    let trace = whitened_descent(&obj, &Gauss2dFisher, &theta, &config)?;
    let last = trace.last().expect("non-empty trace");
    println!("whitened descent after {} steps: θ = {:?}", last.step, last.params.as_slice());
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

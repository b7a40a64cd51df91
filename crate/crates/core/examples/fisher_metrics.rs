// Four estimates of the Fisher metric for the 2D Gaussian model, evaluated at θ = 0.

use natgrad::metrics::{
    diagonal_of, fisher_analytic_gauss2d, EmpiricalFisher, Gauss2dFisher, MetricProvider, MonteCarloFisher,
};
use natgrad::models::{gauss2d_sample, Gauss2d};
use natgrad::{Metric, ParamVector};

fn show(name: &str, m: &Metric) {
    let g = m.to_sym();
    println!(
        "{name:>12}: [[{:8.4}, {:8.4}], [{:8.4}, {:8.4}]]",
        g.get(0, 0),
        g.get(0, 1),
        g.get(1, 0),
        g.get(1, 1)
    );
}

pub fn run_example() -> natgrad::Result<()> {
    let theta = ParamVector::zeros(2);
    let analytic = fisher_analytic_gauss2d();
    show("analytic", &analytic);

    let mc = MonteCarloFisher::new(Gauss2d, 10_000, 7).evaluate(&theta)?;
    show("monte carlo", &mc);

    let data = gauss2d_sample(&theta, 10_000, 8)?;
    let empirical = EmpiricalFisher::new(Gauss2d, data).evaluate(&theta)?;
    show("empirical", &empirical);

    let diagonal = diagonal_of(Gauss2dFisher).evaluate(&theta)?;
    show("diagonal", &diagonal);

    let gap = analytic.to_sym().to_matrix().sub(&mc.to_sym().to_matrix())?.max_abs();
    println!("max |analytic - mc| = {gap:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

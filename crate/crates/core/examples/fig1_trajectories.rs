// Steepest vs natural descent from θ = (1, -1) toward θ* = 0 on the
// population objective. Natural descent walks the straight line; steepest
// descent crawls along the poorly scaled direction.

use natgrad::experiments::{max_perpendicular_deviation, run_fig1_trajectories, THETA_TRUE};
use natgrad::OptimizerConfig;

pub fn run_example() -> natgrad::Result<()> {
    let config = OptimizerConfig::default();
    let runs = run_fig1_trajectories(&config)?;
    for (name, trace) in [("steepest", &runs.steepest), ("natural", &runs.natural)] {
        let last = trace.last().expect("non-empty trace");
        println!(
            "{name:>8}: final θ = {:?}, KL = {:.3e}, off-line deviation = {:.3}, steps to KL<=1e-6: {:?}",
            last.params.as_slice(),
            last.kl.unwrap_or(f64::NAN),
            max_perpendicular_deviation(trace, &THETA_TRUE),
            trace.steps_to_kl(1e-6),
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

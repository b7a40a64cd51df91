// Applying G⁻¹ to a gradient when G is nearly singular.

use natgrad::regularize::{apply_inverse_metric, robust_inverse, InverseMode, RegularizationConfig};
use natgrad::{Metric, ParamVector, SymMatrix};

pub fn run_example() -> natgrad::Result<()> {
    let g = SymMatrix::diag(&[2.0, 1e-9]);
    let grad = [1.0, 1.0];
    let metric = Metric::dense(g.clone(), ParamVector::zeros(2))?;

    for mode in [InverseMode::Exact, InverseMode::Ridge, InverseMode::Robust] {
        let cfg = RegularizationConfig {
            mode,
            ridge_lambda: 0.01,
            ..Default::default()
        };
        let dir = apply_inverse_metric(&metric, &grad, &cfg)?;
        println!("{mode:?}: {:?}", dir.as_slice());
    }

    let r = robust_inverse(&g, 0.01)?;
    println!("(GᵀG + 0.01 I)⁻¹Gᵀ diagonal: [{:.6}, {:.3e}]", r.get(0, 0), r.get(1, 1));
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

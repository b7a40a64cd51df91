// The natural-gradient step for a square matrix parameter W is (∂J/∂W)·WᵀW.
// For J(W) = ½‖W − I‖² it converges to the identity.

use natgrad::metrics::matrix_natural_update;
use natgrad::Matrix;

pub fn run_example() -> natgrad::Result<()> {
    let eye = Matrix::identity(2);
    let mut w = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.3, 1.5]])?;
    for step in 0..=40 {
        let grad = w.sub(&eye)?;
        if step % 10 == 0 {
            println!("step {step:>2}: ‖W − I‖ = {:.3e}", grad.frobenius_norm());
        }
        let update = matrix_natural_update(&grad, &w)?;
        w = w.sub(&update.scale(0.1))?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

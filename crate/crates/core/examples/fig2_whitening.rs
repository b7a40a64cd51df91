// Zero-phase whitening W = Σ̂^{-1/2} of correlated Gaussian samples.

use natgrad::experiments::{max_abs_deviation_from_identity, run_fig2_whitening, DEFAULT_FIG2_COVARIANCE};
use natgrad::SymMatrix;

pub fn run_example() -> natgrad::Result<()> {
    let covariance = SymMatrix::from_rows(&DEFAULT_FIG2_COVARIANCE.map(|r| r.to_vec()))?;
    let report = run_fig2_whitening(10_000, 0, &covariance)?;
    println!("sample covariance:   {:?}", report.raw_covariance.entries());
    println!("whitening matrix W:  {:?}", report.whitening_matrix.entries());
    println!(
        "max |cov(Wx) - I|: samples {:.2e}, generating distribution {:.2e}",
        max_abs_deviation_from_identity(&report.whitened_covariance),
        max_abs_deviation_from_identity(&report.population_whitened_covariance),
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> natgrad::Result<()> {
    run_example()
}

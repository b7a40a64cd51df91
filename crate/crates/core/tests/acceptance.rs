//! The thirteen acceptance criteria, one test each. Every test prints a
//! `PASS`/`FAIL` line before asserting so `--nocapture` gives a summary.

use std::time::{Duration, Instant};

use natgrad::cli::{run_settings, Settings};
use natgrad::experiments::{
    collinearity_residual, max_abs_deviation_from_identity, max_perpendicular_deviation, run_fig1_trajectories,
    run_fig1_vector_fields, run_fig2_whitening, GridSpec, DEFAULT_FIG2_COVARIANCE, THETA_INIT, THETA_TRUE,
};
use natgrad::linalg::{self, Matrix, SymMatrix};
use natgrad::metrics::{
    diagonal_of, fisher_analytic_gauss2d, fisher_monte_carlo, matrix_natural_update, Gauss2dFisher,
};
use natgrad::models::{
    gauss2d_grad_log_q, gauss2d_log_q, gauss2d_population_nll, gauss2d_sample, l2_regression_model, nll_objective,
    DataSet, Gauss2d, LinearMap, Objective, ProbModel,
};
use natgrad::optimize::{descent_direction_holds, natural_descent, steepest_descent, whitened_descent, WhitenedState};
use natgrad::regularize::robust_inverse;
use natgrad::{OptimizerConfig, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(id: u32, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
        Err(why) => {
            println!("FAIL {id:>2} {name}: {why}");
            panic!("criterion {id} ({name}) failed: {why}");
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn population() -> natgrad::models::Gauss2dPopulation {
    gauss2d_population_nll(ParamVector::from(THETA_TRUE))
}

fn config(lr: f64, steps: usize) -> OptimizerConfig {
    OptimizerConfig {
        learning_rate: lr,
        max_steps: steps,
        stop_tol: 0.0,
        ..Default::default()
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n);
    let s = SymMatrix::symmetrize(&a.transpose().matmul(&a).unwrap()).unwrap();
    linalg::sym_eig(&s).unwrap().eigenvectors
}

fn spd_with_spectrum(rng: &mut ChaCha8Rng, eigenvalues: &[f64]) -> SymMatrix {
    let q = random_orthogonal(rng, eigenvalues.len());
    let d = SymMatrix::diag(eigenvalues).to_matrix();
    SymMatrix::symmetrize(&q.matmul(&d).unwrap().matmul(&q.transpose()).unwrap()).unwrap()
}

#[test]
fn c01_fisher_oracle() {
    let run = || -> Result<String, String> {
        let start = Instant::now();
        let analytic = fisher_analytic_gauss2d().to_sym();
        let expected = [82.0 / 9.0, 1.0, 1.0, 1.0 / 9.0];
        check(analytic.entries() == expected, || format!("analytic = {:?}", analytic.entries()))?;

        let mc = fisher_monte_carlo(&Gauss2d, &ParamVector::zeros(2), 100_000, 20_240_501).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let largest = analytic.max_abs();
        let worst = mc
            .to_sym()
            .entries()
            .iter()
            .zip(analytic.entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        check(worst < 0.05 * largest, || {
            format!("Monte-Carlo error {worst:.4} exceeds 5% of {largest:.4}")
        })?;
        check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
        Ok(format!("analytic exact, MC max error {worst:.4} (limit {:.4}), {elapsed:?}", 0.05 * largest))
    };
    report(1, "Fisher oracle", run());
}

#[test]
fn c02_one_step_natural_convergence() {
    let run = || -> Result<String, String> {
        let trace = natural_descent(&population(), &Gauss2dFisher, &ParamVector::from(THETA_INIT), &config(1.0, 1))
            .map_err(|e| e.to_string())?;
        let theta1 = &trace.records[1].params;
        check(theta1.norm() < 1e-12, || format!("‖θ₁‖ = {:e}", theta1.norm()))?;
        Ok(format!("‖θ₁‖ = {:.1e}", theta1.norm()))
    };
    report(2, "one-step natural convergence", run());
}

#[test]
fn c03_fig1a_geometry() {
    let run = || -> Result<String, String> {
        let runs = run_fig1_trajectories(&OptimizerConfig::default()).map_err(|e| e.to_string())?;
        let natural_dev = max_perpendicular_deviation(&runs.natural, &THETA_TRUE);
        let steepest_dev = max_perpendicular_deviation(&runs.steepest, &THETA_TRUE);
        check(natural_dev < 1e-8, || format!("natural deviation {natural_dev:e}"))?;
        check(steepest_dev > 0.1, || format!("steepest deviation {steepest_dev}"))?;

        let obj = population();
        let theta0 = ParamVector::from(THETA_INIT);
        let step: Vec<f64> = obj.gradient(&theta0).iter().map(|g| -g).collect();
        let target: Vec<f64> = THETA_TRUE.iter().zip(THETA_INIT).map(|(t, s)| t - s).collect();
        let cos = linalg::dot(&step, &target) / (linalg::norm(&step) * linalg::norm(&target));
        let angle = cos.clamp(-1.0, 1.0).acos().to_degrees();
        check(angle > 75.0, || {
            format!(
                "initial steepest step makes {angle:.2}° with θ_true − θ0 (needs > 75°); natural deviation {natural_dev:.1e}, steepest deviation {steepest_dev:.3} both hold"
            )
        })?;
        Ok(format!(
            "natural deviation {natural_dev:.1e}, steepest deviation {steepest_dev:.3}, initial angle {angle:.2}°"
        ))
    };
    report(3, "Fig 1a geometry", run());
}

#[test]
fn c04_fig1b_ordering() {
    let run = || -> Result<String, String> {
        let start = Instant::now();
        let obj = population();
        let theta0 = ParamVector::from(THETA_INIT);
        let cfg = config(0.02, 200_000);
        let natural = natural_descent(&obj, &Gauss2dFisher, &theta0, &cfg).map_err(|e| e.to_string())?;
        let steepest = steepest_descent(&obj, &theta0, &cfg).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let n_steps = natural.steps_to_kl(1e-6);
        let s_steps = steepest.steps_to_kl(1e-6);
        match (n_steps, s_steps) {
            (Some(n), Some(s)) => check(n < s, || format!("natural {n} steps, steepest {s}"))?,
            (Some(_), None) => {}
            _ => return Err(format!("natural never reached KL ≤ 1e-6 ({n_steps:?})")),
        }
        let nk = natural.kl_curve();
        let sk = steepest.kl_curve();
        let violations: Vec<usize> = (1..nk.len().min(sk.len()))
            .filter(|&t| nk[t].unwrap() > sk[t].unwrap())
            .collect();
        check(violations.is_empty(), || {
            let t = violations[0];
            format!(
                "steps to KL ≤ 1e-6 hold (natural {n_steps:?}, steepest {s_steps:?}) but natural KL exceeds steepest at {} steps, first t = {t}: {:.4} > {:.4}",
                violations.len(),
                nk[t].unwrap(),
                sk[t].unwrap()
            )
        })?;
        check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
        Ok(format!("natural {n_steps:?} vs steepest {s_steps:?} steps, {elapsed:?}"))
    };
    report(4, "Fig 1b ordering", run());
}

#[test]
fn c05_whitened_space_equivalence() {
    let run = || -> Result<String, String> {
        let obj = population();
        let theta0 = ParamVector::from(THETA_INIT);
        let cfg = config(0.02, 500);
        let nat = natural_descent(&obj, &Gauss2dFisher, &theta0, &cfg).map_err(|e| e.to_string())?;
        let wht = whitened_descent(&obj, &Gauss2dFisher, &theta0, &cfg).map_err(|e| e.to_string())?;
        check(nat.records.len() == 501 && wht.records.len() == 501, || "trace lengths differ from 501".into())?;
        let worst = nat
            .records
            .iter()
            .zip(&wht.records)
            .flat_map(|(a, b)| a.params.iter().zip(b.params.iter()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        check(worst < 1e-10, || format!("max entrywise gap {worst:e}"))?;
        Ok(format!("max entrywise gap {worst:.1e} over 500 steps"))
    };
    report(5, "whitened-space equivalence", run());
}

#[test]
fn c06_fig1d_isotropy() {
    let run = || -> Result<String, String> {
        let fields = run_fig1_vector_fields(&GridSpec::default()).map_err(|e| e.to_string())?;
        let w = &fields.whitened;
        check(w.points.len() == 169, || format!("{} grid points", w.points.len()))?;
        let mut worst = 0.0f64;
        for (p, d) in w.points.iter().zip(&w.directions) {
            let to_truth: Vec<f64> = fields.phi_true.iter().zip(p.iter()).map(|(t, x)| t - x).collect();
            worst = worst.max(collinearity_residual(d, &to_truth));
        }
        check(worst < 1e-10, || format!("max residual {worst:e}"))?;
        Ok(format!("max residual {worst:.1e} at 169 points"))
    };
    report(6, "Fig 1d isotropy", run());
}

#[test]
fn c07_fig2_whitening() {
    let run = || -> Result<String, String> {
        let cov = SymMatrix::from_rows(&DEFAULT_FIG2_COVARIANCE.map(|r| r.to_vec())).unwrap();
        let r = run_fig2_whitening(10_000, 0, &cov).map_err(|e| e.to_string())?;
        let dev = max_abs_deviation_from_identity(&r.whitened_covariance);
        check(dev <= 0.05, || format!("whitened covariance off identity by {dev}"))?;
        let w = &r.whitening_matrix;
        let asym = (w.to_matrix().sub(&w.to_matrix().transpose()).unwrap()).max_abs();
        check(asym <= 1e-12, || format!("W asymmetry {asym:e}"))?;
        Ok(format!("deviation {dev:.1e}, asymmetry {asym:.1e}"))
    };
    report(7, "Fig 2 whitening", run());
}

#[test]
fn c08_regularized_inverse() {
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst_rel = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(2..=5);
            let spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
            let g = spd_with_spectrum(&mut rng, &spectrum);
            let exact = linalg::solve_spd_matrix(&g, &Matrix::identity(n)).map_err(|e| e.to_string())?;
            let robust = robust_inverse(&g, 1e-12).map_err(|e| e.to_string())?;
            worst_rel = worst_rel.max(linalg::relative_frobenius_error(&robust, &exact));
        }
        check(worst_rel < 1e-8, || format!("relative error {worst_rel:e}"))?;

        let eps: f64 = 1e-4;
        let bound = 1.0 / (2.0 * eps.sqrt());
        let mut worst_sv = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(2..=5);
            let mut spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
            spectrum[0] = 10f64.powf(rng.random_range(-12.0..-2.0));
            let g = spd_with_spectrum(&mut rng, &spectrum);
            let r = robust_inverse(&g, eps).map_err(|e| e.to_string())?;
            let top = linalg::singular_values(&r).map_err(|e| e.to_string())?.into_iter().fold(0.0, f64::max);
            worst_sv = worst_sv.max(top);
        }
        check(worst_sv <= bound, || format!("singular value {worst_sv} > {bound}"))?;
        Ok(format!(
            "relative error {worst_rel:.1e}; largest singular value {worst_sv:.3} ≤ {bound}"
        ))
    };
    report(8, "regularized inverse", run());
}

/// J(V) = ½‖V·C − D‖² + ¼·a·Σ V_ij⁴, gradient (V·C − D)·Cᵀ + a·V³.
struct SmoothJ {
    c: Matrix,
    d: Matrix,
    a: f64,
}

impl SmoothJ {
    fn grad(&self, v: &Matrix) -> Matrix {
        let r = v.matmul(&self.c).unwrap().sub(&self.d).unwrap();
        let quad = r.matmul(&self.c.transpose()).unwrap();
        let cubic = Matrix::from_fn(v.rows(), v.cols(), |i, j| self.a * v.get(i, j).powi(3));
        quad.add(&cubic).unwrap()
    }
}

#[test]
fn c09_wtw_equivariance() {
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let eta = 1e-3;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let n = rng.random_range(2..=4);
            let j = SmoothJ {
                c: random_matrix(&mut rng, n),
                d: random_matrix(&mut rng, n),
                a: rng.random_range(0.0..0.5),
            };
            let y = random_matrix(&mut rng, n).add(&Matrix::identity(n).scale(2.0)).unwrap();
            let w0 = random_matrix(&mut rng, n).scale(0.5).add(&Matrix::identity(n)).unwrap();

            // A: minimize K(W) = J(W·Y), whose gradient is J'(W·Y)·Yᵀ.
            // B: minimize J directly from W₀·Y.
            let mut wa = w0.clone();
            let mut wb = w0.matmul(&y).unwrap();
            for _ in 0..50 {
                let ga = j.grad(&wa.matmul(&y).unwrap()).matmul(&y.transpose()).unwrap();
                wa = wa.sub(&matrix_natural_update(&ga, &wa).unwrap().scale(eta)).unwrap();
                let gb = j.grad(&wb);
                wb = wb.sub(&matrix_natural_update(&gb, &wb).unwrap().scale(eta)).unwrap();
                let gap = wa.matmul(&y).unwrap().sub(&wb).unwrap().max_abs();
                worst = worst.max(gap);
            }
        }
        check(worst < 1e-8, || format!("max entrywise gap {worst:e}"))?;
        Ok(format!("max entrywise gap {worst:.1e} over 20 instances × 50 steps"))
    };
    report(9, "WᵀW equivariance", run());
}

#[test]
fn c10_wrong_h_descent() {
    let run = || -> Result<String, String> {
        let obj = population();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for trial in 0..100 {
            let theta = ParamVector::from([rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
            let spectrum = [10f64.powf(rng.random_range(-3.0..2.0)), 10f64.powf(rng.random_range(-3.0..2.0))];
            let h = spd_with_spectrum(&mut rng, &spectrum);
            let dir = h.matvec(&obj.gradient(&theta)).unwrap();
            let alpha = 1e-4 / linalg::norm(&dir).max(1e-300);
            let next = theta.axpy(-alpha, &dir);
            let (before, after) = (obj.value(&theta), obj.value(&next));
            check(after < before, || format!("trial {trial}: J rose from {before} to {after}"))?;
            check(descent_direction_holds(&obj, &h, &theta), || format!("trial {trial}: PD H rejected"))?;
        }
        let indefinite = SymMatrix::diag(&[-1.0, 1.0]);
        let theta = ParamVector::from(THETA_INIT);
        check(!descent_direction_holds(&obj, &indefinite, &theta), || {
            "indefinite H at θ0 accepted".into()
        })?;
        let dir = indefinite.matvec(&obj.gradient(&theta)).unwrap();
        let next = theta.axpy(-1e-4, &dir);
        check(obj.value(&next) > obj.value(&theta), || "counterexample step did not ascend".into())?;
        Ok("100/100 PD steps descend; diag(−1, 1) at θ0 detected".into())
    };
    report(10, "wrong-H descent", run());
}

fn fd_relative_error(f: &dyn Fn(&[f64]) -> f64, grad: &[f64], x: &[f64]) -> f64 {
    let h = 1e-6;
    let fd: Vec<f64> = (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect();
    let diff: Vec<f64> = fd.iter().zip(grad).map(|(a, b)| a - b).collect();
    linalg::norm(&diff) / linalg::norm(grad).max(linalg::norm(&fd)).max(1e-8)
}

#[test]
fn c11_gradient_hygiene() {
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut point = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let mut worst: Vec<(&str, f64)> = Vec::new();
        let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
            Some((_, w)) => *w = w.max(e),
            None => worst.push((name, e)),
        };

        let pop = population();
        let sample = gauss2d_sample(&[0.3, -0.2], 200, 1).unwrap();
        let nll = nll_objective(Gauss2d, sample).unwrap();
        let pairs: Vec<Vec<f64>> = (0..50).map(|_| point(5)).collect();
        let (reg, reg_obj) = l2_regression_model(LinearMap::new(3, 2), DataSet::from_points(&pairs).unwrap()).unwrap();
        let state = WhitenedState::new(&fisher_analytic_gauss2d()).unwrap();
        let phi_obj = state.objective(&pop);

        for _ in 0..25 {
            let theta = point(2);
            let x = point(2);
            let g = gauss2d_grad_log_q(&x, &theta);
            record("gauss2d score", fd_relative_error(&|t| gauss2d_log_q(&x, t), &g, &theta));

            let t = ParamVector::from(theta.clone());
            record("population NLL", fd_relative_error(&|p| pop.value(&p.to_vec().into()), &pop.gradient(&t), &theta));
            record("sampled NLL", fd_relative_error(&|p| nll.value(&p.to_vec().into()), &nll.gradient(&t), &theta));
            record("φ objective", fd_relative_error(&|p| phi_obj.value(&p.to_vec().into()), &phi_obj.gradient(&t), &theta));

            let rt = point(6);
            let rp = ParamVector::from(rt.clone());
            let xy = point(5);
            record(
                "L2 score",
                fd_relative_error(&|p| reg.log_q(&xy, &p.to_vec().into()), &reg.grad_log_q(&xy, &rp), &rt),
            );
            record(
                "L2 objective",
                fd_relative_error(&|p| reg_obj.value(&p.to_vec().into()), &reg_obj.gradient(&rp), &rt),
            );
        }
        let bad: Vec<_> = worst.iter().filter(|(_, e)| *e >= 1e-5).collect();
        check(bad.is_empty(), || format!("relative errors too large: {bad:?}"))?;
        Ok(worst
            .iter()
            .map(|(n, e)| format!("{n} {e:.1e}"))
            .collect::<Vec<_>>()
            .join(", "))
    };
    report(11, "gradient hygiene", run());
}

#[test]
fn c12_diagonal_approximation_utility() {
    let run = || -> Result<String, String> {
        let obj = population();
        let theta0 = ParamVector::from(THETA_INIT);
        let cfg = config(0.02, 200_000);
        let diag = natural_descent(&obj, &diagonal_of(Gauss2dFisher), &theta0, &cfg).map_err(|e| e.to_string())?;
        let steep = steepest_descent(&obj, &theta0, &cfg).map_err(|e| e.to_string())?;
        let d = diag.steps_to_kl(1e-6).ok_or("diagonal never reached KL ≤ 1e-6")?;
        let s = steep.steps_to_kl(1e-6).unwrap_or(usize::MAX);
        check(d < s, || format!("diagonal {d} steps, steepest {s}"))?;
        Ok(format!("diagonal {d} steps vs steepest {s} at η = 0.02"))
    };
    report(12, "diagonal approximation utility", run());
}

#[test]
fn c13_empirical_fisher_fit() {
    let run = || -> Result<String, String> {
        let start = Instant::now();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let truth = [1.5, -0.5, 2.0, 0.25, -1.0, 0.75];
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = 0.9 * a + 0.4 * rng.sample::<f64, _>(StandardNormal);
                let c: f64 = rng.sample(StandardNormal);
                let x = [a, b, c];
                let y0 = linalg::dot(&truth[..3], &x);
                let y1 = linalg::dot(&truth[3..], &x);
                vec![a, b, c, y0, y1]
            })
            .collect();
        let data_path = dir.path().join("data.csv");
        DataSet::from_points(&rows).unwrap().save_csv(&data_path).map_err(|e| e.to_string())?;

        let settings = Settings {
            out: Some(dir.path().join("fit")),
            data: Some(data_path),
            y_cols: Some(2),
            optimizer: Some("natural".into()),
            metric: Some("empirical".into()),
            ..Default::default()
        };
        let report = run_settings("fit", settings).map_err(|e| e.to_string())?;
        check(report.failure.is_none(), || format!("{:?}", report.failure))?;
        let text = std::fs::read_to_string(dir.path().join("fit/fit_result.json")).map_err(|e| e.to_string())?;
        let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let theta: Vec<f64> = serde_json::from_value(json["theta"].clone()).map_err(|e| e.to_string())?;
        let worst = theta.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let elapsed = start.elapsed();
        check(worst < 1e-6, || format!("max parameter error {worst:e}"))?;
        check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
        Ok(format!("max parameter error {worst:.1e} after {} steps, {elapsed:?}", json["steps"]))
    };
    report(13, "empirical-Fisher fit", run());
}

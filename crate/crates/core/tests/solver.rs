//! Solver correctness: gradients, optimality, monotone descent and
//! agreement with an independent reference minimizer.

mod common;

use approx::assert_relative_eq;
use knockoff_core::logit::{self, FitOptions, Penalty, PenaltyScale};
use knockoff_core::LabelVector;
use nalgebra::{DMatrix, DVector};

use common::{random_problem, reference_minimize};

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..20 {
        let (x, y) = random_problem(10, 6, seed);
        let b0 = 0.3;
        let beta = DVector::from_fn(6, |j, _| 0.2 * j as f64 - 0.5);
        let (g0, g) = logit::gradient(&x, &y, b0, &beta).unwrap();
        let h = 1e-6;
        let f = |b0: f64, beta: &DVector<f64>| logit::smooth_loss(&x, &y, b0, beta).unwrap();
        let fd0 = (f(b0 + h, &beta) - f(b0 - h, &beta)) / (2.0 * h);
        assert_relative_eq!(g0, fd0, max_relative = 1e-5, epsilon = 1e-9);
        for j in 0..6 {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (f(b0, &up) - f(b0, &dn)) / (2.0 * h);
            assert_relative_eq!(g[j], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }
}

#[test]
fn matches_reference_minimizer() {
    let (x, y) = random_problem(50, 10, 42);
    for c in [0.05, 0.2, 1.0] {
        let penalty = Penalty::new(c, PenaltyScale::PerSample);
        let opts = FitOptions { penalty, ..FitOptions::default() };
        let model = logit::fit(&x, &y, &opts).unwrap();
        assert!(model.converged);
        let (rb0, rbeta) = reference_minimize(&x, &y, penalty.strength(50), 1e-12);
        let reference = logit::objective(&x, &y, rb0, &rbeta, penalty).unwrap();
        assert_relative_eq!(model.final_objective, reference, max_relative = 1e-6);
        let recomputed = logit::objective(&x, &y, model.intercept, &model.coefficients, penalty).unwrap();
        assert!((recomputed - model.final_objective).abs() <= 1e-12);
    }
}

#[test]
fn converged_fits_satisfy_kkt() {
    for seed in 0..10 {
        let (x, y) = random_problem(60, 12, 100 + seed);
        for scale in [PenaltyScale::PerSample, PenaltyScale::Unscaled] {
            let opts = FitOptions {
                penalty: Penalty::new(0.5, scale),
                ..FitOptions::default()
            };
            let m = logit::fit(&x, &y, &opts).unwrap();
            assert!(m.converged, "seed {seed} {scale:?}");
            let kkt = logit::kkt_residual(&x, &y, &m).unwrap();
            assert!(kkt <= opts.tol, "kkt {kkt}");
        }
    }
}

#[test]
fn objective_never_increases() {
    for seed in 0..5 {
        let (x, y) = random_problem(80, 20, 7 + seed);
        for accelerate in [true, false] {
            let opts = FitOptions { accelerate, max_iter: 500, ..FitOptions::default() };
            let (_, trace) = logit::fit_traced(&x, &y, &opts).unwrap();
            assert!(!trace.is_empty());
            let start = std::f64::consts::LN_2;
            assert!(trace[0] <= start + 1e-12);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn iteration_cap_reports_not_converged() {
    let (x, y) = random_problem(50, 10, 3);
    let opts = FitOptions { max_iter: 1, ..FitOptions::default() };
    let m = logit::fit(&x, &y, &opts).unwrap();
    assert_eq!(m.iterations, 1);
    assert!(!m.converged);
}

#[test]
fn separated_one_dimensional_data() {
    // x = ±1 matching the label. By symmetry β₀ = 0 and every margin equals
    // β, so optimality reads σ(-β) = λ = 1/(nC) = 0.01, i.e. β = ln 99.
    let n = 100;
    let x = DMatrix::from_fn(n, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let y = LabelVector::new((0..n).map(|i| u8::from(i % 2 == 0)).collect()).unwrap();
    let opts = FitOptions::default();
    let m = logit::fit(&x, &y, &opts).unwrap();
    assert!(m.converged);
    assert!(m.coefficients[0] > 0.0 && m.coefficients[0].is_finite());
    assert!(m.kkt_residual <= opts.tol);
    // a gradient residual of tol moves β by at most tol over the curvature
    let curvature = 0.01 * 0.99;
    assert!((m.coefficients[0] - 99f64.ln()).abs() <= 2.0 * opts.tol / curvature);
    assert!(m.intercept.abs() < 1e-6);
    let (rb0, rbeta) = reference_minimize(&x, &y, 0.01, 1e-13);
    let reference = logit::objective(&x, &y, rb0, &rbeta, opts.penalty).unwrap();
    assert_relative_eq!(m.final_objective, reference, max_relative = 1e-10);
}

#[test]
fn unscaled_penalty_zeroes_weak_signal() {
    // with λ = 1/C = 1 the largest possible |∂ⱼ| (0.5 here) is below λ
    let n = 100;
    let x = DMatrix::from_fn(n, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let y = LabelVector::new((0..n).map(|i| u8::from(i % 2 == 0)).collect()).unwrap();
    let opts = FitOptions {
        penalty: Penalty::new(1.0, PenaltyScale::Unscaled),
        ..FitOptions::default()
    };
    let m = logit::fit(&x, &y, &opts).unwrap();
    assert_eq!(m.coefficients[0], 0.0);
    assert!(m.converged);
}

#[test]
fn duplicated_column_shares_mass() {
    let (x1, y) = random_problem(60, 1, 11);
    let x2 = DMatrix::from_fn(60, 2, |i, _| x1[(i, 0)]);
    let opts = FitOptions::default();
    let single = logit::fit(&x1, &y, &opts).unwrap();
    let double = logit::fit(&x2, &y, &opts).unwrap();
    assert!(single.converged && double.converged);
    let total = double.coefficients[0] + double.coefficients[1];
    assert!((total - single.coefficients[0]).abs() <= 1e-5, "{total} vs {}", single.coefficients[0]);
    assert!((double.final_objective - single.final_objective).abs() <= 1e-7);
}

#[test]
fn l1_norm_grows_with_c() {
    let (x, y) = random_problem(80, 15, 5);
    let mut prev = 0.0;
    for c in [0.01, 0.02, 0.04, 0.08, 0.16] {
        let opts = FitOptions {
            penalty: Penalty::new(c, PenaltyScale::PerSample),
            ..FitOptions::default()
        };
        let m = logit::fit(&x, &y, &opts).unwrap();
        let norm: f64 = m.coefficients.iter().map(|b| b.abs()).sum();
        assert!(norm >= prev - 1e-6, "C = {c}: {norm} < {prev}");
        prev = norm;
    }
    assert!(prev > 0.0);
}

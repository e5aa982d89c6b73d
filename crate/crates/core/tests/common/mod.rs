#![allow(dead_code)]

use knockoff_core::rng;
use knockoff_core::LabelVector;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Gaussian design with labels from a sparse logistic model.
pub fn random_problem(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, LabelVector) {
    let mut r = rng::seeded(seed, 99);
    let x = DMatrix::from_fn(n, d, |_, _| rng::standard_normal(&mut r));
    let truth: Vec<f64> = (0..d).map(|j| if j % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let mut labels: Vec<u8> = (0..n)
        .map(|i| {
            let eta: f64 = (0..d).map(|j| x[(i, j)] * truth[j]).sum();
            u8::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    labels[0] = 0;
    labels[1] = 1;
    (x, LabelVector::new(labels).unwrap())
}

fn sigma(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        t.exp() / (1.0 + t.exp())
    }
}

/// Reference minimizer for `mean logistic loss + λ‖β‖₁`, independent of the
/// proximal-gradient solver: cyclic coordinate descent in which every
/// one-dimensional subproblem is solved exactly by safeguarded Newton steps
/// on its subgradient optimality condition. Runs until no coordinate moves
/// by more than `tol`.
pub fn reference_minimize(x: &DMatrix<f64>, labels: &LabelVector, lambda: f64, tol: f64) -> (f64, DVector<f64>) {
    let (n, d) = x.shape();
    let y: Vec<f64> = labels.values().iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let mut b0 = 0.0;
    let mut beta = DVector::zeros(d);
    let mut m = vec![0.0; n];
    // column d stands for the intercept
    let col = |j: usize, i: usize| if j == d { 1.0 } else { x[(i, j)] };
    // first and second derivative of the smooth loss along coordinate j,
    // at a shift t from the current value
    let derivs = |m: &[f64], j: usize, t: f64| {
        let mut g = 0.0;
        let mut h = 0.0;
        for i in 0..n {
            let xij = col(j, i);
            let s = sigma(-y[i] * (m[i] + t * xij));
            g -= y[i] * xij * s;
            h += xij * xij * s * (1.0 - s);
        }
        (g / n as f64, h / n as f64)
    };
    for _sweep in 0..100_000 {
        let mut max_move: f64 = 0.0;
        for j in 0..=d {
            let cur = if j == d { b0 } else { beta[j] };
            let pen = if j == d { 0.0 } else { lambda };
            // φ'(b) on either side, as a function of the new value b
            let dphi = |b: f64, side: f64| derivs(&m, j, b - cur).0 + pen * side;
            let new = if pen > 0.0 && dphi(0.0, 1.0) >= 0.0 && dphi(0.0, -1.0) <= 0.0 {
                0.0
            } else {
                let side = if pen == 0.0 {
                    0.0
                } else if dphi(0.0, 1.0) < 0.0 {
                    1.0
                } else {
                    -1.0
                };
                // bracket the root of φ' on the chosen side
                let (mut lo, mut hi) = if side > 0.0 {
                    (0.0, 1.0)
                } else if side < 0.0 {
                    (-1.0, 0.0)
                } else {
                    (cur - 1.0, cur + 1.0)
                };
                while dphi(hi, side) < 0.0 {
                    hi += 2.0 * (hi - lo);
                }
                while dphi(lo, side) > 0.0 {
                    lo -= 2.0 * (hi - lo);
                }
                let mut b = cur.clamp(lo, hi);
                for _ in 0..200 {
                    let (g, h) = derivs(&m, j, b - cur);
                    let f1 = g + pen * side;
                    if f1 > 0.0 {
                        hi = b;
                    } else {
                        lo = b;
                    }
                    let mut next = if h > 0.0 { b - f1 / h } else { 0.5 * (lo + hi) };
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - b).abs() <= 1e-16 * (1.0 + b.abs()) || hi - lo <= 1e-16 {
                        b = next;
                        break;
                    }
                    b = next;
                }
                b
            };
            let delta = new - cur;
            if delta != 0.0 {
                for (i, mi) in m.iter_mut().enumerate() {
                    *mi += delta * col(j, i);
                }
                if j == d {
                    b0 = new;
                } else {
                    beta[j] = new;
                }
            }
            max_move = max_move.max(delta.abs());
        }
        if max_move <= tol {
            break;
        }
    }
    (b0, beta)
}

/// Sparse non-negative activations shaped like SAE latents: each latent
/// fires with its own rate and exponential magnitude. Labels follow a
/// logistic model on `n_signal` randomly placed latents.
pub fn sae_like(
    n: usize,
    m: usize,
    n_signal: usize,
    amplitude: f64,
    seed: u64,
) -> (knockoff_core::FeatureMatrix, LabelVector, Vec<usize>) {
    let mut r = rng::seeded(seed, 7);
    let rate: Vec<f64> = (0..m).map(|_| r.random_range(0.01..0.3)).collect();
    let scale: Vec<f64> = (0..m).map(|_| r.random_range(0.5..3.0)).collect();
    let z = DMatrix::from_fn(n, m, |_, j| {
        if r.random::<f64>() < rate[j] {
            -scale[j] * (1.0 - r.random::<f64>()).ln()
        } else {
            0.0
        }
    });
    let signal = rand::seq::index::sample(&mut r, m, n_signal).into_vec();
    let labels = (0..n)
        .map(|i| {
            let eta: f64 = signal
                .iter()
                .enumerate()
                .map(|(k, &j)| {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    sign * amplitude * (z[(i, j)] - rate[j] * scale[j]) / scale[j]
                })
                .sum();
            u8::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    let ids = (0..m).map(|j| 1000 + 3 * j).collect();
    (
        knockoff_core::FeatureMatrix::new(z, ids).unwrap(),
        LabelVector::new(labels).unwrap(),
        signal,
    )
}

//! L1-regularized logistic regression.
//!
//! Minimizes
//!
//! ```text
//! F(β₀, β) = (1/n) Σᵢ log(1 + exp(-yᵢ (β₀ + xᵢᵀβ))) + λ ‖β‖₁,   yᵢ ∈ {-1, +1}
//! ```
//!
//! with the intercept unpenalized. `λ` is derived from the inverse penalty
//! `C` through [`PenaltyScale`].
//!
//! The solver is an accelerated proximal gradient method (FISTA) with a
//! monotone safeguard: a candidate that does not decrease `F` is rejected and
//! momentum is reset, so the accepted objective sequence never increases.
//! Step sizes come from backtracking on the smooth part, seeded by a power
//! iteration estimate of the Lipschitz constant and allowed to shrink again
//! between iterations. The iteration is fully deterministic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_finite, LabelVector};

/// How the inverse penalty `C` maps to the L1 weight `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyScale {
    /// `λ = 1 / (n C)`: the liblinear / scikit-learn convention
    /// `min ‖β‖₁ + C Σ loss`, divided through by `n C`.
    #[default]
    PerSample,
    /// `λ = 1 / C`, independent of the sample count.
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub c: f64,
    pub scale: PenaltyScale,
}

impl Penalty {
    pub fn new(c: f64, scale: PenaltyScale) -> Self {
        Self { c, scale }
    }

    /// L1 weight for a problem with `n` samples.
    pub fn strength(&self, n: usize) -> f64 {
        match self.scale {
            PenaltyScale::PerSample => 1.0 / (n as f64 * self.c),
            PenaltyScale::Unscaled => 1.0 / self.c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub penalty: Penalty,
    pub max_iter: usize,
    /// Bound on the KKT residual that counts as converged.
    pub tol: f64,
    /// Nesterov momentum. Off gives plain ISTA with backtracking.
    pub accelerate: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            penalty: Penalty::new(1.0, PenaltyScale::PerSample),
            max_iter: 4000,
            tol: 1e-7,
            accelerate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    /// L1 weight the model was fit with.
    pub l1_strength: f64,
    pub kkt_residual: f64,
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn margins(x: &DMatrix<f64>, intercept: f64, beta: &DVector<f64>) -> DVector<f64> {
    let mut m = x * beta;
    m.add_scalar_mut(intercept);
    m
}

fn smooth_from_margins(y: &[f64], m: &DVector<f64>) -> f64 {
    let s: f64 = y.iter().zip(m.iter()).map(|(yi, mi)| softplus(-yi * mi)).sum();
    s / y.len() as f64
}

/// Derivative of the smooth loss with respect to each margin.
fn margin_residual(y: &[f64], m: &DVector<f64>) -> DVector<f64> {
    let n = y.len() as f64;
    DVector::from_iterator(
        y.len(),
        y.iter().zip(m.iter()).map(|(yi, mi)| -yi * sigmoid(-yi * mi) / n),
    )
}

fn l1(beta: &DVector<f64>) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

fn check_shapes(x: &DMatrix<f64>, labels: &LabelVector, beta_len: Option<usize>) -> Result<()> {
    labels.check_aligned(x.nrows())?;
    if let Some(len) = beta_len {
        if len != x.ncols() {
            return Err(Error::Dimension(format!(
                "{len} coefficients for a design with {} columns",
                x.ncols()
            )));
        }
    }
    Ok(())
}

/// Mean logistic loss (no penalty).
pub fn smooth_loss(x: &DMatrix<f64>, labels: &LabelVector, intercept: f64, beta: &DVector<f64>) -> Result<f64> {
    check_shapes(x, labels, Some(beta.len()))?;
    Ok(smooth_from_margins(&labels.signed(), &margins(x, intercept, beta)))
}

/// Gradient of the mean logistic loss: `(∂/∂β₀, ∇_β)`.
pub fn gradient(
    x: &DMatrix<f64>,
    labels: &LabelVector,
    intercept: f64,
    beta: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    check_shapes(x, labels, Some(beta.len()))?;
    let r = margin_residual(&labels.signed(), &margins(x, intercept, beta));
    Ok((r.sum(), x.tr_mul(&r)))
}

/// Full penalized objective.
pub fn objective(
    x: &DMatrix<f64>,
    labels: &LabelVector,
    intercept: f64,
    beta: &DVector<f64>,
    penalty: Penalty,
) -> Result<f64> {
    Ok(smooth_loss(x, labels, intercept, beta)? + penalty.strength(x.nrows()) * l1(beta))
}

fn kkt_from_grad(g0: f64, g: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let coord = g.iter().zip(beta.iter()).map(|(&gj, &bj)| {
        if bj == 0.0 {
            (gj.abs() - lambda).max(0.0)
        } else {
            (gj + lambda * bj.signum()).abs()
        }
    });
    coord.fold(g0.abs(), f64::max)
}

/// Largest violation of the optimality conditions: `|∂₀|`, `(|∂ⱼ| - λ)₊`
/// at zero coefficients and `|∂ⱼ + λ sign βⱼ|` elsewhere.
pub fn kkt_residual(x: &DMatrix<f64>, labels: &LabelVector, model: &LogisticModel) -> Result<f64> {
    let (g0, g) = gradient(x, labels, model.intercept, &model.coefficients)?;
    Ok(kkt_from_grad(g0, &g, &model.coefficients, model.l1_strength))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Power-iteration estimate of `‖[1 X]‖₂² / (4n)`, the Lipschitz constant
/// of the smooth loss gradient.
fn lipschitz_estimate(x: &DMatrix<f64>) -> f64 {
    let (n, d) = x.shape();
    let mut v0: f64 = 1.0;
    let mut v: DVector<f64> = DVector::from_element(d, 1.0);
    let mut sq = 0.0;
    for _ in 0..30 {
        let norm = (v0 * v0 + v.norm_squared()).sqrt();
        if norm == 0.0 {
            break;
        }
        v0 /= norm;
        v /= norm;
        let mut u = x * &v;
        u.add_scalar_mut(v0);
        sq = u.norm_squared();
        v0 = u.sum();
        v = x.tr_mul(&u);
    }
    (sq / (4.0 * n as f64)).max(1e-12)
}

struct Iterate {
    b0: f64,
    beta: DVector<f64>,
    m: DVector<f64>,
}

impl Iterate {
    fn combine(&self, a: f64, other: &Iterate, b: f64) -> Iterate {
        Iterate {
            b0: a * self.b0 + b * other.b0,
            beta: &self.beta * a + &other.beta * b,
            m: &self.m * a + &other.m * b,
        }
    }
}

pub fn fit(x: &DMatrix<f64>, labels: &LabelVector, opts: &FitOptions) -> Result<LogisticModel> {
    fit_inner(x, labels, opts, None)
}

/// Like [`fit`], also returning the accepted objective after every iteration.
pub fn fit_traced(x: &DMatrix<f64>, labels: &LabelVector, opts: &FitOptions) -> Result<(LogisticModel, Vec<f64>)> {
    let mut trace = Vec::new();
    let model = fit_inner(x, labels, opts, Some(&mut trace))?;
    Ok((model, trace))
}

fn fit_inner(
    x: &DMatrix<f64>,
    labels: &LabelVector,
    opts: &FitOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<LogisticModel> {
    check_shapes(x, labels, None)?;
    if x.nrows() == 0 {
        return Err(Error::NoRows);
    }
    check_finite(x)?;
    if !labels.has_both_classes() {
        return Err(Error::InvalidInput("labels contain a single class".into()));
    }
    if !(opts.penalty.c > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("C and tol must be positive".into()));
    }
    let (n, d) = x.shape();
    let y = labels.signed();
    let lambda = opts.penalty.strength(n);
    let objective_of = |it: &Iterate| smooth_from_margins(&y, &it.m) + lambda * l1(&it.beta);

    let mut cur = Iterate {
        b0: 0.0,
        beta: DVector::zeros(d),
        m: DVector::zeros(n),
    };
    let mut f_cur = objective_of(&cur);
    let mut look = Iterate {
        b0: 0.0,
        beta: DVector::zeros(d),
        m: DVector::zeros(n),
    };
    let mut momentum = 1.0;
    let mut lip = lipschitz_estimate(x);
    let mut iterations = 0;
    let mut converged = false;

    let kkt_at = |it: &Iterate| {
        let r = margin_residual(&y, &it.m);
        kkt_from_grad(r.sum(), &x.tr_mul(&r), &it.beta, lambda)
    };
    if kkt_at(&cur) <= opts.tol {
        converged = true;
    }

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        if iterations % 100 == 0 {
            look.m = margins(x, look.b0, &look.beta);
        }
        let r = margin_residual(&y, &look.m);
        let g0 = r.sum();
        let g = x.tr_mul(&r);
        let f_look = smooth_from_margins(&y, &look.m);

        let lip_prev = lip;
        lip *= 0.8;
        let cand = loop {
            let step = 1.0 / lip;
            let b0 = look.b0 - step * g0;
            let beta = DVector::from_iterator(
                d,
                look.beta
                    .iter()
                    .zip(g.iter())
                    .map(|(b, gj)| soft_threshold(b - step * gj, step * lambda)),
            );
            let m = margins(x, b0, &beta);
            let f = smooth_from_margins(&y, &m);
            let db0 = b0 - look.b0;
            let dbeta = &beta - &look.beta;
            let model_bound =
                f_look + g0 * db0 + g.dot(&dbeta) + 0.5 * lip * (db0 * db0 + dbeta.norm_squared());
            if f <= model_bound + 1e-14 * f_look.abs() || lip > 1e30 {
                break Iterate { b0, beta, m };
            }
            lip *= 2.0;
        };

        let f_cand = objective_of(&cand);
        let momentum_next = if opts.accelerate {
            0.5 * (1.0 + (1.0 + 4.0 * (lip / lip_prev) * momentum * momentum).sqrt())
        } else {
            1.0
        };
        if f_cand <= f_cur {
            let prev = std::mem::replace(&mut cur, cand);
            f_cur = f_cand;
            look = if opts.accelerate {
                let w = (momentum - 1.0) / momentum_next;
                cur.combine(1.0 + w, &prev, -w)
            } else {
                Iterate {
                    b0: cur.b0,
                    beta: cur.beta.clone(),
                    m: cur.m.clone(),
                }
            };
            momentum = momentum_next;
        } else {
            let restarted = look.b0 == cur.b0 && look.beta == cur.beta;
            look = Iterate {
                b0: cur.b0,
                beta: cur.beta.clone(),
                m: cur.m.clone(),
            };
            momentum = 1.0;
            if restarted {
                // a plain proximal step from the current point failed to
                // descend: the objective is flat to machine precision
                if let Some(t) = trace.as_deref_mut() {
                    t.push(f_cur);
                }
                break;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(f_cur);
        }
        if iterations % 5 == 0 || iterations == opts.max_iter {
            converged = kkt_at(&cur) <= opts.tol;
        }
    }

    // recompute margins exactly so the reported objective matches a fresh
    // evaluation
    cur.m = margins(x, cur.b0, &cur.beta);
    let final_objective = objective_of(&cur);
    let kkt_residual = kkt_at(&cur);
    Ok(LogisticModel {
        intercept: cur.b0,
        coefficients: cur.beta,
        converged: kkt_residual <= opts.tol,
        iterations,
        final_objective,
        l1_strength: lambda,
        kkt_residual,
    })
}

pub fn predict_proba(model: &LogisticModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.coefficients.len() {
        return Err(Error::Dimension(format!(
            "model has {} coefficients, design has {} columns",
            model.coefficients.len(),
            x.ncols()
        )));
    }
    let hi = 1.0 - f64::EPSILON / 2.0;
    Ok(margins(x, model.intercept, &model.coefficients)
        .iter()
        .map(|&m| sigmoid(m).clamp(f64::MIN_POSITIVE, hi))
        .collect())
}

/// Accuracy (probability ≥ 0.5 counts as class 1) and clamped log-loss.
pub fn score_probabilities(proba: &[f64], labels: &LabelVector) -> Result<(f64, f64)> {
    labels.check_aligned(proba.len())?;
    let n = proba.len() as f64;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (&p, &y) in proba.iter().zip(labels.values()) {
        if u8::from(p >= 0.5) == y {
            correct += 1;
        }
        let pc = p.clamp(1e-15, 1.0 - 1e-15);
        loss -= if y == 1 { pc.ln() } else { (1.0 - pc).ln() };
    }
    Ok((correct as f64 / n, loss / n))
}

pub fn evaluate(model: &LogisticModel, x: &DMatrix<f64>, labels: &LabelVector) -> Result<(f64, f64)> {
    score_probabilities(&predict_proba(model, x)?, labels)
}

/// Scales each column to unit sample standard deviation (constant columns
/// are left alone). Returns the divisors used.
pub fn standardize_columns(x: &mut DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    x.column_iter_mut()
        .map(|mut c| {
            let mean = c.mean();
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
            let sd = var.sqrt();
            if sd > 0.0 {
                c /= sd;
                sd
            } else {
                1.0
            }
        })
        .collect()
}

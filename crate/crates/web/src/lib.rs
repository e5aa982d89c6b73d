//! Browser bindings for the interactive knockoff demo.
//!
//! Each export returns a JSON string consumed by `www/index.html`. The
//! `*_json` functions hold the logic and are callable natively.

use knockoff_core::filter;
use knockoff_core::knockoff;
use knockoff_core::sim::{self, CovarianceFamily, PipelineParams, SimDesign};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct ReplicateView {
    w: Vec<f64>,
    truth: Vec<bool>,
    tau: Option<f64>,
    selected: Vec<usize>,
    fdp: f64,
    power: f64,
    s: f64,
}

#[derive(Serialize)]
struct PairView {
    x1: Vec<f64>,
    x2: Vec<f64>,
    k1: Vec<f64>,
    /// Empirical covariance of `[X1, X2, X̃1, X̃2]`, row major.
    empirical: Vec<f64>,
    target: Vec<f64>,
    s: f64,
}

#[derive(Serialize)]
struct CurvePoint {
    t: f64,
    fdp: f64,
    n_selected: usize,
}

#[derive(Serialize)]
struct CurveView {
    points: Vec<CurvePoint>,
    tau: Option<f64>,
    n_selected: usize,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo views serialize")
}

/// Simulates one design, draws knockoffs, fits and selects.
pub fn replicate_json(
    n: usize,
    p: usize,
    n_nonnull: usize,
    amplitude: f64,
    rho: f64,
    q: f64,
    seed: u64,
) -> Result<String, String> {
    let covariance = if rho == 0.0 {
        CovarianceFamily::Identity
    } else {
        CovarianceFamily::Ar1(rho)
    };
    let d = SimDesign {
        n,
        p,
        covariance,
        n_nonnull,
        amplitude,
        sign_mix: 0.5,
        seed,
    };
    let data = sim::generate_design(&d).map_err(|e| e.to_string())?;
    let params = PipelineParams::default();
    let model = knockoff::fit_knockoff_model(&data.x, params.ridge, params.s_max).map_err(|e| e.to_string())?;
    let (stats, sel) = sim::knockoff_select(&data.x, &data.y, q, &params, seed).map_err(|e| e.to_string())?;
    let (_, fdp, power) = sim::score_selection(&sel.selected, &data.support, n_nonnull);
    let truth = (0..p).map(|j| data.beta[j] != 0.0).collect();
    Ok(to_json(&ReplicateView {
        w: stats.w,
        truth,
        tau: sel.tau_finite(),
        selected: sel.selected,
        fdp,
        power,
        s: model.s,
    }))
}

/// Two AR(1) features and their knockoffs, for a scatter plot and a
/// covariance comparison.
pub fn pair_json(n: usize, rho: f64, seed: u64) -> Result<String, String> {
    let d = SimDesign {
        n,
        p: 2,
        covariance: CovarianceFamily::Ar1(rho),
        n_nonnull: 0,
        amplitude: 0.0,
        sign_mix: 0.5,
        seed,
    };
    let data = sim::generate_design(&d).map_err(|e| e.to_string())?;
    let model = knockoff::fit_knockoff_model(&data.x, 0.002, 0.95).map_err(|e| e.to_string())?;
    let aug = knockoff::sample_knockoffs(&data.x, &model, seed)
        .map_err(|e| e.to_string())?
        .augmented();
    let mean = aug.row_mean();
    let mut centered = aug.clone();
    for (mut col, mu) in centered.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-mu);
    }
    let emp = centered.transpose() * &centered / (n as f64 - 1.0);
    let sig = &model.sigma;
    let target: Vec<f64> = (0..4)
        .flat_map(|a| (0..4).map(move |b| (a, b)))
        .map(|(a, b)| {
            let v = sig[(a % 2, b % 2)];
            if a / 2 != b / 2 && a % 2 == b % 2 {
                v - model.s
            } else {
                v
            }
        })
        .collect();
    Ok(to_json(&PairView {
        x1: aug.column(0).iter().copied().collect(),
        x2: aug.column(1).iter().copied().collect(),
        k1: aug.column(2).iter().copied().collect(),
        empirical: emp.transpose().iter().copied().collect(),
        target,
        s: model.s,
    }))
}

/// Estimated FDP at every candidate threshold of `w` (a JSON array), and
/// the knockoff+ threshold at `q`.
pub fn curve_json(w_json: &str, q: f64) -> Result<String, String> {
    let w: Vec<f64> = serde_json::from_str(w_json).map_err(|e| e.to_string())?;
    if !(q > 0.0 && q < 1.0) {
        return Err(format!("q must lie in (0, 1), got {q}"));
    }
    let mut ts: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&t| t > 0.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let points = ts
        .into_iter()
        .map(|t| CurvePoint {
            t,
            fdp: filter::estimated_fdp(&w, t),
            n_selected: w.iter().filter(|&&v| v >= t).count(),
        })
        .collect();
    let tau = filter::knockoff_plus_threshold(&w, q);
    Ok(to_json(&CurveView {
        points,
        tau: tau.is_finite().then_some(tau),
        n_selected: w.iter().filter(|&&v| v >= tau).count(),
    }))
}

#[wasm_bindgen]
pub fn replicate(
    n: usize,
    p: usize,
    n_nonnull: usize,
    amplitude: f64,
    rho: f64,
    q: f64,
    seed: u32,
) -> Result<String, JsError> {
    replicate_json(n, p, n_nonnull, amplitude, rho, q, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn knockoff_pair(n: usize, rho: f64, seed: u32) -> Result<String, JsError> {
    pair_json(n, rho, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fdp_curve(w_json: &str, q: f64) -> Result<String, JsError> {
    curve_json(w_json, q).map_err(|e| JsError::new(&e))
}

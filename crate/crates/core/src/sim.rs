//! Monte-Carlo harness: synthetic Gaussian designs with a known support,
//! pushed through the full knockoff pipeline to measure FDP and power.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{self, KnockoffStatistics};
use crate::knockoff;
use crate::logit::{self, FitOptions};
use crate::matrix::{FeatureMatrix, LabelVector};
use crate::rng::{self, STREAM_DESIGN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family", content = "rho")]
pub enum CovarianceFamily {
    Identity,
    /// `(1-ρ) I + ρ 11ᵀ`.
    Equicorrelated(f64),
    /// `Σ_ij = ρ^|i-j|`.
    Ar1(f64),
}

impl CovarianceFamily {
    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            CovarianceFamily::Identity => Ok(()),
            CovarianceFamily::Ar1(rho) if rho > -1.0 && rho < 1.0 => Ok(()),
            CovarianceFamily::Equicorrelated(rho)
                if rho < 1.0 && (p < 2 || rho > -1.0 / (p as f64 - 1.0)) =>
            {
                Ok(())
            }
            other => Err(Error::config(format!(
                "covariance {other} is not positive definite for p = {p}"
            ))),
        }
    }

    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        match *self {
            CovarianceFamily::Identity => DMatrix::identity(p, p),
            CovarianceFamily::Equicorrelated(rho) => {
                DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
            }
            CovarianceFamily::Ar1(rho) => {
                DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
            }
        }
    }
}

impl fmt::Display for CovarianceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceFamily::Identity => f.write_str("identity"),
            CovarianceFamily::Equicorrelated(r) => write!(f, "equicorrelated({r})"),
            CovarianceFamily::Ar1(r) => write!(f, "ar1({r})"),
        }
    }
}

impl FromStr for CovarianceFamily {
    type Err = Error;

    /// Accepts `identity`, `ar1(0.3)`, `ar1:0.3`, `equicorrelated(0.5)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(CovarianceFamily::Identity);
        }
        let bad = || Error::config(format!("unrecognized covariance {s:?}"));
        let (name, arg) = s
            .split_once('(')
            .map(|(n, a)| (n, a.trim_end_matches(')')))
            .or_else(|| s.split_once(':'))
            .ok_or_else(bad)?;
        let rho: f64 = arg.trim().parse().map_err(|_| bad())?;
        match name.trim() {
            "ar1" => Ok(CovarianceFamily::Ar1(rho)),
            "equicorrelated" | "equi" => Ok(CovarianceFamily::Equicorrelated(rho)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub covariance: CovarianceFamily,
    pub n_nonnull: usize,
    /// Magnitude of each non-null coefficient on the log-odds scale.
    pub amplitude: f64,
    /// Fraction of non-null coefficients that are negative.
    pub sign_mix: f64,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n < 2 {
            errs.push(format!("n must be at least 2, got {}", self.n));
        }
        if self.p == 0 {
            errs.push("p must be positive".to_string());
        }
        if self.n_nonnull > self.p {
            errs.push(format!("n_nonnull = {} exceeds p = {}", self.n_nonnull, self.p));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            errs.push(format!("amplitude must be non-negative, got {}", self.amplitude));
        }
        if !(0.0..=1.0).contains(&self.sign_mix) {
            errs.push(format!("sign_mix must lie in [0, 1], got {}", self.sign_mix));
        }
        if let Err(Error::Config(e)) = self.covariance.validate(self.p) {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Knockoff-stage and classifier settings shared by the pipeline and the
/// simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub ridge: f64,
    pub s_max: f64,
    pub fit: FitOptions,
    pub standardize: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            ridge: 0.002,
            s_max: 0.95,
            fit: FitOptions::default(),
            standardize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub x: FeatureMatrix,
    pub y: LabelVector,
    /// Non-null positions, ascending.
    pub support: Vec<usize>,
    pub beta: Vec<f64>,
}

pub fn generate_design(d: &SimDesign) -> Result<GeneratedData> {
    d.validate()?;
    let mut rng = rng::seeded(d.seed, STREAM_DESIGN);
    let picked = rand::seq::index::sample(&mut rng, d.p, d.n_nonnull).into_vec();
    let n_neg = (d.sign_mix * d.n_nonnull as f64).round() as usize;
    let mut beta = vec![0.0; d.p];
    for (k, &j) in picked.iter().enumerate() {
        beta[j] = if k < n_neg { -d.amplitude } else { d.amplitude };
    }
    let mut support = picked;
    support.sort_unstable();

    let mut z = DMatrix::zeros(d.n, d.p);
    for i in 0..d.n {
        for j in 0..d.p {
            z[(i, j)] = rng::standard_normal(&mut rng);
        }
    }
    let x = match d.covariance {
        CovarianceFamily::Identity => z,
        family => {
            let chol = Cholesky::new(family.matrix(d.p))
                .ok_or_else(|| Error::config(format!("covariance {family} is not positive definite")))?;
            z * chol.l().transpose()
        }
    };
    let eta = &x * nalgebra::DVector::from_column_slice(&beta);
    let y = LabelVector::from_bools(eta.iter().map(|&e| rng.random::<f64>() < logit::sigmoid(e)));
    Ok(GeneratedData {
        x: FeatureMatrix::with_default_ids(x)?,
        y,
        support,
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub fdp: f64,
    pub power: f64,
    pub n_selected: usize,
    pub n_false: usize,
    pub tau: f64,
}

/// Knockoffs, augmented fit and knockoff+ selection on a single design.
/// Returns the statistics and the selection.
pub fn knockoff_select(
    x: &FeatureMatrix,
    y: &LabelVector,
    q: f64,
    params: &PipelineParams,
    seed: u64,
) -> Result<(KnockoffStatistics, filter::SelectionResult)> {
    let model = knockoff::fit_knockoff_model(x, params.ridge, params.s_max)?;
    let pair = knockoff::sample_knockoffs(x, &model, seed)?;
    let mut design = pair.augmented();
    if params.standardize {
        logit::standardize_columns(&mut design);
    }
    let fit = logit::fit(&design, y, &params.fit)?;
    let stats = filter::knockoff_statistics(&fit, x.column_ids())?;
    let sel = filter::select(&stats, q)?;
    Ok((stats, sel))
}

pub fn score_selection(selected: &[usize], support: &[usize], n_nonnull: usize) -> (usize, f64, f64) {
    let true_hits = selected.iter().filter(|j| support.binary_search(j).is_ok()).count();
    let false_hits = selected.len() - true_hits;
    let fdp = false_hits as f64 / selected.len().max(1) as f64;
    let power = if n_nonnull == 0 {
        0.0
    } else {
        true_hits as f64 / n_nonnull as f64
    };
    (false_hits, fdp, power)
}

pub fn run_replicate(d: &SimDesign, q: f64, params: &PipelineParams) -> Result<SimOutcome> {
    let data = generate_design(d)?;
    let (_, sel) = knockoff_select(&data.x, &data.y, q, params, d.seed)?;
    let (n_false, fdp, power) = score_selection(&sel.selected, &data.support, d.n_nonnull);
    Ok(SimOutcome {
        fdp,
        power,
        n_selected: sel.selected.len(),
        n_false,
        tau: sel.tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub outcome: SimOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub q: f64,
    pub mean_fdp: f64,
    /// Standard error of the mean FDP; `None` for a single replicate.
    pub fdp_se: Option<f64>,
    /// Normal-approximation 95% half-width; `None` for a single replicate.
    pub fdp_ci_halfwidth: Option<f64>,
    pub mean_power: f64,
    /// Fraction of replicates with at least one selection.
    pub any_selection_rate: f64,
    pub records: Vec<ReplicateRecord>,
}

impl StudyResult {
    /// `mean FDP ≤ q + 2·SE`.
    pub fn fdr_controlled(&self) -> bool {
        self.mean_fdp <= self.q + 2.0 * self.fdp_se.unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,seed,tau,n_selected,fdp,power\n");
        for r in &self.records {
            let o = &r.outcome;
            let tau = if o.tau.is_finite() {
                o.tau.to_string()
            } else {
                "inf".to_string()
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.replicate, r.seed, tau, o.n_selected, o.fdp, o.power
            ));
        }
        out
    }

    pub fn summary_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("null".to_string(), |x| format!("{x:.6}"));
        format!(
            "replicates={} q={} mean_fdp={:.6} fdp_se={} ci_halfwidth={} mean_power={:.6} any_selection_rate={:.6} FDR controlled: {}",
            self.records.len(),
            self.q,
            self.mean_fdp,
            opt(self.fdp_se),
            opt(self.fdp_ci_halfwidth),
            self.mean_power,
            self.any_selection_rate,
            if self.fdr_controlled() { "yes" } else { "no" }
        )
    }
}

/// Replicate `r` uses seed `d.seed + r`; results are keyed by replicate
/// index so they do not depend on `workers`.
pub fn run_study(
    d: &SimDesign,
    q: f64,
    replicates: usize,
    workers: usize,
    params: &PipelineParams,
) -> Result<StudyResult> {
    if replicates == 0 {
        return Err(Error::config("replicates must be at least 1"));
    }
    d.validate()?;
    let one = |r: usize| -> Result<ReplicateRecord> {
        let seed = d.seed.wrapping_add(r as u64);
        let design = SimDesign { seed, ..*d };
        Ok(ReplicateRecord {
            replicate: r,
            seed,
            outcome: run_replicate(&design, q, params)?,
        })
    };
    let records = run_indexed(replicates, workers.max(1), one)?;
    Ok(aggregate(q, records))
}

#[cfg(feature = "parallel")]
fn run_indexed<T: Send>(
    count: usize,
    workers: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    #[allow(clippy::redundant_closure)]
    pool.install(|| (0..count).into_par_iter().map(|r| f(r)).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_indexed<T>(count: usize, _workers: usize, f: impl Fn(usize) -> Result<T>) -> Result<Vec<T>> {
    (0..count).map(f).collect()
}

fn aggregate(q: f64, records: Vec<ReplicateRecord>) -> StudyResult {
    let r = records.len() as f64;
    let fdps: Vec<f64> = records.iter().map(|x| x.outcome.fdp).collect();
    let mean_fdp = fdps.iter().sum::<f64>() / r;
    let fdp_se = (records.len() > 1).then(|| {
        let var = fdps.iter().map(|f| (f - mean_fdp).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    });
    StudyResult {
        q,
        mean_fdp,
        fdp_se,
        fdp_ci_halfwidth: fdp_se.map(|se| 1.96 * se),
        mean_power: records.iter().map(|x| x.outcome.power).sum::<f64>() / r,
        any_selection_rate: records.iter().filter(|x| x.outcome.n_selected > 0).count() as f64 / r,
        records,
    }
}

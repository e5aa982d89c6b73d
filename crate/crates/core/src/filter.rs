//! Knockoff statistics, the knockoff+ threshold, and selection summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit::LogisticModel;

/// Per-feature contrasts `W_j = |β_j| - |β_{p+j}|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoffStatistics {
    pub w: Vec<f64>,
    pub column_ids: Vec<usize>,
}

impl KnockoffStatistics {
    pub fn new(w: Vec<f64>, column_ids: Vec<usize>) -> Result<Self> {
        if w.len() != column_ids.len() {
            return Err(Error::Dimension(format!(
                "{} statistics for {} column ids",
                w.len(),
                column_ids.len()
            )));
        }
        Ok(Self { w, column_ids })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Contrasts from augmented-design coefficients `[originals | knockoffs]`.
pub fn statistics_from_coefficients(beta: &[f64]) -> Result<Vec<f64>> {
    if !beta.len().is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "augmented coefficient vector has odd length {}",
            beta.len()
        )));
    }
    let p = beta.len() / 2;
    Ok((0..p).map(|j| beta[j].abs() - beta[p + j].abs()).collect())
}

pub fn knockoff_statistics(model: &LogisticModel, column_ids: &[usize]) -> Result<KnockoffStatistics> {
    let w = statistics_from_coefficients(model.coefficients.as_slice())?;
    KnockoffStatistics::new(w, column_ids.to_vec())
}

/// `(1 + #{W ≤ -t}) / max(1, #{W ≥ t})`.
pub fn estimated_fdp(w: &[f64], t: f64) -> f64 {
    let neg = w.iter().filter(|&&v| v <= -t).count();
    let pos = w.iter().filter(|&&v| v >= t).count();
    (1 + neg) as f64 / pos.max(1) as f64
}

/// Smallest nonzero `|W_j|` whose estimated FDP is at most `q`, or `+∞`.
///
/// Runs in `O(p log p)`: both counts are read off the sorted statistics
/// with binary searches.
pub fn knockoff_plus_threshold(w: &[f64], q: f64) -> f64 {
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&a| a > 0.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let p = sorted.len();
    for t in candidates {
        let neg = sorted.partition_point(|&v| v <= -t);
        let pos = p - sorted.partition_point(|&v| v < t);
        if (1 + neg) as f64 / pos.max(1) as f64 <= q {
            return t;
        }
    }
    f64::INFINITY
}

/// Sample mean and standard deviation; `None` for too few values.
fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_var(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v)?;
    Some(v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    Some(if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    })
}

/// Cohen's d with pooled sample standard deviation. `None` when either group
/// has fewer than two members or the pooled deviation is zero.
pub fn cohens_d(selected: &[f64], rejected: &[f64]) -> Option<f64> {
    let (n1, n2) = (selected.len(), rejected.len());
    let v1 = sample_var(selected)?;
    let v2 = sample_var(rejected)?;
    let pooled = (((n1 - 1) as f64 * v1 + (n2 - 1) as f64 * v2) / (n1 + n2 - 2) as f64).sqrt();
    if pooled == 0.0 {
        return None;
    }
    Some((mean(selected)? - mean(rejected)?) / pooled)
}

/// Mean selected statistic over mean absolute rejected statistic.
pub fn signal_to_noise(mean_w_selected: f64, mean_abs_w_rejected: f64) -> Option<f64> {
    (mean_abs_w_rejected > 0.0).then(|| mean_w_selected / mean_abs_w_rejected)
}

/// Undefined quantities (empty groups, zero denominators) are `None` and
/// serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub n_features: usize,
    pub n_selected: usize,
    pub mean_w_selected: Option<f64>,
    pub sd_w_selected: Option<f64>,
    pub mean_w_rejected: Option<f64>,
    pub sd_w_rejected: Option<f64>,
    pub mean_abs_w_rejected: Option<f64>,
    pub snr: Option<f64>,
    pub cohens_d: Option<f64>,
    pub positive_fraction: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub w_mean: f64,
    pub w_median: f64,
}

impl SummaryMetrics {
    pub fn compute(w: &[f64], tau: f64) -> Self {
        let (sel, rej): (Vec<f64>, Vec<f64>) = w.iter().partition(|&&v| v >= tau);
        let abs_rej: Vec<f64> = rej.iter().map(|v| v.abs()).collect();
        let mean_w_selected = mean(&sel);
        let mean_abs_w_rejected = mean(&abs_rej);
        let snr = match (mean_w_selected, mean_abs_w_rejected) {
            (Some(a), Some(b)) => signal_to_noise(a, b),
            _ => None,
        };
        let p = w.len();
        Self {
            n_features: p,
            n_selected: sel.len(),
            mean_w_selected,
            sd_w_selected: sample_var(&sel).map(f64::sqrt),
            mean_w_rejected: mean(&rej),
            sd_w_rejected: sample_var(&rej).map(f64::sqrt),
            mean_abs_w_rejected,
            snr,
            cohens_d: cohens_d(&sel, &rej),
            positive_fraction: if p == 0 {
                0.0
            } else {
                w.iter().filter(|&&v| v > 0.0).count() as f64 / p as f64
            },
            w_min: w.iter().cloned().fold(f64::INFINITY, f64::min),
            w_max: w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            w_mean: mean(w).unwrap_or(f64::NAN),
            w_median: median(w).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// `+∞` when nothing qualifies.
    pub tau: f64,
    /// Positions into the statistics vector, ascending.
    pub selected: Vec<usize>,
    /// Latent ids of the selected positions.
    pub selected_ids: Vec<usize>,
    pub q: f64,
    pub summary: SummaryMetrics,
}

impl SelectionResult {
    pub fn tau_finite(&self) -> Option<f64> {
        self.tau.is_finite().then_some(self.tau)
    }
}

pub fn select(stats: &KnockoffStatistics, q: f64) -> Result<SelectionResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("q must lie in (0, 1), got {q}")));
    }
    if let Some(j) = stats.w.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("statistic {j} is not finite")));
    }
    let tau = knockoff_plus_threshold(&stats.w, q);
    let selected: Vec<usize> = (0..stats.len()).filter(|&j| stats.w[j] >= tau).collect();
    let selected_ids = selected.iter().map(|&j| stats.column_ids[j]).collect();
    Ok(SelectionResult {
        tau,
        selected,
        selected_ids,
        q,
        summary: SummaryMetrics::compute(&stats.w, tau),
    })
}

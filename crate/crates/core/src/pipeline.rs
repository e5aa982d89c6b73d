//! End-to-end run: reduce, knock off, fit, filter, and write artifacts.
//!
//! Output files in the run directory:
//!
//! | file                  | contents                                          |
//! |-----------------------|---------------------------------------------------|
//! | `artifact.json`       | config echo, statistics, selection, summary       |
//! | `timings.json`        | wall-clock seconds per stage (not deterministic)  |
//! | `histogram.csv`       | `bin_left,bin_right,count` (50 equal-width bins)  |
//! | `waterfall.csv`       | `rank,latent,w,selected` sorted by descending `w` |
//! | `cdf.csv`             | `w,fraction` sorted ascending                     |
//! | `top_features.csv`    | top-N table by `w`                                |
//! | `bottom_features.csv` | most negative statistics                          |

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result, StageExt};
use crate::filter::{self, SummaryMetrics};
use crate::io::{self, MatrixFormat};
use crate::knockoff;
use crate::logit;
use crate::reduce;

pub const ARTIFACT_FILE: &str = "artifact.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub features: String,
    pub labels: String,
    pub format: MatrixFormat,
    pub rows_in_file: usize,
    pub rows_used: usize,
    pub latents_in_file: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoffInfo {
    pub s: f64,
    pub lambda_min: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierInfo {
    pub accuracy: f64,
    pub logloss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    pub kkt_residual: f64,
    pub l1_strength: f64,
    /// Threads used for linear algebra inside the fit.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub rank: usize,
    pub latent: usize,
    pub w: f64,
    pub activation_rate: f64,
    pub energy: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: RunConfig,
    pub input: InputInfo,
    pub effective_top_k: usize,
    pub knockoff: KnockoffInfo,
    pub classifier: ClassifierInfo,
    pub q: f64,
    /// `null` when no threshold qualifies (nothing selected).
    pub tau: Option<f64>,
    pub latent_ids: Vec<usize>,
    pub w: Vec<f64>,
    pub energy: Vec<f64>,
    pub activation_rate: Vec<f64>,
    pub selected: Vec<usize>,
    pub summary: SummaryMetrics,
    pub top: Vec<FeatureRow>,
    pub bottom: Vec<FeatureRow>,
}

impl RunArtifact {
    pub fn tau_value(&self) -> f64 {
        self.tau.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

pub struct PipelineRun {
    pub artifact: RunArtifact,
    pub timings: Timings,
    pub written: Vec<PathBuf>,
}

pub struct PipelineInputs<'a> {
    pub features: &'a Path,
    pub labels: &'a Path,
    /// Inferred from the features file extension when `None`.
    pub format: Option<MatrixFormat>,
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Runs every stage and computes the artifact without touching the
/// filesystem beyond reading inputs.
pub fn compute(config: &RunConfig, inputs: &PipelineInputs<'_>) -> Result<(RunArtifact, Timings)> {
    config.validate()?;
    let mut timings = Timings::default();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Timings| {
        timings.stages.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let format = inputs.format.unwrap_or_else(|| MatrixFormat::from_path(inputs.features));
    let z_all = io::load_matrix(inputs.features, format).stage("load")?;
    let labels_all = io::load_labels(inputs.labels).stage("load")?;
    labels_all.check_aligned(z_all.nrows()).stage("load")?;
    let rows_used = config.n_samples.min(z_all.nrows());
    if rows_used < z_all.nrows() {
        info!("using the first {rows_used} of {} rows", z_all.nrows());
    }
    let z = z_all.truncate_rows(rows_used).stage("load")?;
    let labels = labels_all.truncate(rows_used);
    lap("load", &mut timings);

    let m = z.ncols();
    let k = if config.top_k > m {
        warn!("top_k = {} exceeds the {m} available latents; keeping all", config.top_k);
        m
    } else {
        config.top_k
    };
    if k > rows_used {
        return Err(Error::config(format!(
            "top_k = {k} exceeds the {rows_used} rows in use"
        )));
    }
    let energy = reduce::compute_energy(&z);
    let x = reduce::select_top_k(&z, &energy, k).stage("reduce")?;
    let selected_energy: Vec<f64> = {
        let pos: std::collections::HashMap<usize, usize> =
            z.column_ids().iter().enumerate().map(|(j, &id)| (id, j)).collect();
        x.column_ids().iter().map(|id| energy.energies[pos[id]]).collect()
    };
    lap("reduce", &mut timings);

    let params = config.pipeline_params();
    let model = knockoff::fit_knockoff_model(&x, params.ridge, params.s_max).stage("knockoff")?;
    let pair = knockoff::sample_knockoffs(&x, &model, config.seed).stage("knockoff")?;
    lap("knockoff", &mut timings);

    let mut design = pair.augmented();
    if params.standardize {
        logit::standardize_columns(&mut design);
    }
    let fit = logit::fit(&design, &labels, &params.fit).stage("fit")?;
    let (accuracy, logloss) = logit::evaluate(&fit, &design, &labels).stage("fit")?;
    if !fit.converged {
        warn!(
            "classifier stopped after {} iterations with KKT residual {:e}",
            fit.iterations, fit.kkt_residual
        );
    }
    lap("fit", &mut timings);

    let stats = filter::knockoff_statistics(&fit, x.column_ids()).stage("filter")?;
    let sel = filter::select(&stats, config.q).stage("filter")?;
    lap("filter", &mut timings);

    let activation_rate = x.activation_rates();
    let tau = sel.tau;
    let row = |rank: usize, j: usize| FeatureRow {
        rank,
        latent: stats.column_ids[j],
        w: stats.w[j],
        activation_rate: activation_rate[j],
        energy: selected_energy[j],
        selected: stats.w[j] >= tau,
    };
    let desc = descending_order(&stats.w);
    let top = desc.iter().take(config.top_n).enumerate().map(|(r, &j)| row(r + 1, j)).collect();
    let bottom = desc
        .iter()
        .rev()
        .take(config.bottom_n)
        .enumerate()
        .map(|(r, &j)| row(r + 1, j))
        .collect();

    let artifact = RunArtifact {
        config: config.clone(),
        input: InputInfo {
            features: file_name(inputs.features),
            labels: file_name(inputs.labels),
            format,
            rows_in_file: z_all.nrows(),
            rows_used,
            latents_in_file: m,
        },
        effective_top_k: k,
        knockoff: KnockoffInfo {
            s: model.s,
            lambda_min: model.lambda_min,
            jitter: model.jitter,
        },
        classifier: ClassifierInfo {
            accuracy,
            logloss,
            converged: fit.converged,
            iterations: fit.iterations,
            final_objective: fit.final_objective,
            kkt_residual: fit.kkt_residual,
            l1_strength: fit.l1_strength,
            threads: 1,
        },
        q: config.q,
        tau: sel.tau_finite(),
        latent_ids: stats.column_ids.clone(),
        w: stats.w.clone(),
        energy: selected_energy,
        activation_rate,
        selected: sel.selected_ids,
        summary: sel.summary,
        top,
        bottom,
    };
    Ok((artifact, timings))
}

/// Runs the pipeline and writes all artifacts into `out_dir`. Files written
/// by a failed run are removed.
pub fn run_pipeline(config: &RunConfig, inputs: &PipelineInputs<'_>, out_dir: &Path) -> Result<PipelineRun> {
    let (artifact, timings) = compute(config, inputs)?;
    let mut written = Vec::new();
    let result = (|| {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        write_tracked(&out_dir.join(ARTIFACT_FILE), artifact_json(&artifact)?.as_bytes(), &mut written)?;
        write_tracked(
            &out_dir.join(TIMINGS_FILE),
            serde_json::to_string_pretty(&timings).expect("timings serialize").as_bytes(),
            &mut written,
        )?;
        emit_report_tracked(&artifact, out_dir, &mut written)
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        return Err(e.in_stage("write"));
    }
    Ok(PipelineRun {
        artifact,
        timings,
        written,
    })
}

fn write_tracked(path: &Path, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    io::write_file(path, bytes)?;
    written.push(path.to_path_buf());
    Ok(())
}

pub fn artifact_json(a: &RunArtifact) -> Result<String> {
    let mut s = serde_json::to_string_pretty(a)
        .map_err(|e| Error::InvalidInput(format!("artifact serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn load_artifact(path: &Path) -> Result<RunArtifact> {
    let path = if path.is_dir() {
        path.join(ARTIFACT_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        row: e.line(),
        col: Some(e.column()),
        msg: format!("artifact: {e}"),
    })
}

/// Positions sorted by descending statistic; ties keep input order.
fn descending_order(w: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width bins over `[min w, max w]`, last bin closed. A constant
/// vector gets the range `[v - 0.5, v + 0.5]`.
pub fn histogram(w: &[f64], bins: usize) -> Vec<HistogramBin> {
    if w.is_empty() || bins == 0 {
        return Vec::new();
    }
    let mut lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in w {
        let k = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            left: lo + k as f64 * width,
            right: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count,
        })
        .collect()
}

pub fn histogram_csv(w: &[f64]) -> String {
    let mut s = String::from("bin_left,bin_right,count\n");
    for b in histogram(w, HISTOGRAM_BINS) {
        s.push_str(&format!("{},{},{}\n", b.left, b.right, b.count));
    }
    s
}

pub fn waterfall_csv(latent_ids: &[usize], w: &[f64], tau: f64) -> String {
    let mut s = String::from("rank,latent,w,selected\n");
    for (r, j) in descending_order(w).into_iter().enumerate() {
        s.push_str(&format!("{},{},{},{}\n", r + 1, latent_ids[j], w[j], u8::from(w[j] >= tau)));
    }
    s
}

pub fn cdf_csv(w: &[f64]) -> String {
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = sorted.len();
    let mut s = String::from("w,fraction\n");
    for (i, v) in sorted.iter().enumerate() {
        s.push_str(&format!("{},{}\n", v, (i + 1) as f64 / p as f64));
    }
    s
}

fn table_csv(rows: &[FeatureRow], full: bool) -> String {
    let mut s = if full {
        String::from("rank,latent,w,activation_rate,energy,status\n")
    } else {
        String::from("rank,latent,w\n")
    };
    for r in rows {
        if full {
            let status = if r.selected { "Selected" } else { "Rejected" };
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.rank, r.latent, r.w, r.activation_rate, r.energy, status
            ));
        } else {
            s.push_str(&format!("{},{},{}\n", r.rank, r.latent, r.w));
        }
    }
    s
}

/// Writes the plot-data and table files for an artifact.
pub fn emit_report(artifact: &RunArtifact, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    emit_report_tracked(artifact, out_dir, &mut written)?;
    Ok(written)
}

fn emit_report_tracked(a: &RunArtifact, out_dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let tau = a.tau_value();
    let files = [
        ("histogram.csv", histogram_csv(&a.w)),
        ("waterfall.csv", waterfall_csv(&a.latent_ids, &a.w, tau)),
        ("cdf.csv", cdf_csv(&a.w)),
        ("top_features.csv", table_csv(&a.top, true)),
        ("bottom_features.csv", table_csv(&a.bottom, false)),
    ];
    for (name, body) in files {
        write_tracked(&out_dir.join(name), body.as_bytes(), written)?;
    }
    Ok(())
}

/// Re-derives threshold, selection and counts from the stored statistics.
/// Returns every inconsistency found; empty means the artifact is sound.
pub fn validate_artifact(a: &RunArtifact) -> Vec<String> {
    let mut problems = Vec::new();
    let p = a.latent_ids.len();
    for (name, len) in [
        ("w", a.w.len()),
        ("energy", a.energy.len()),
        ("activation_rate", a.activation_rate.len()),
    ] {
        if len != p {
            problems.push(format!("{name} has {len} entries, expected {p}"));
        }
    }
    if !problems.is_empty() {
        return problems;
    }
    if a.summary.n_features != p {
        problems.push(format!("summary.n_features = {} but {p} statistics", a.summary.n_features));
    }
    let tau = filter::knockoff_plus_threshold(&a.w, a.q);
    if tau != a.tau_value() {
        problems.push(format!("stored tau {:?} but statistics give {tau}", a.tau));
    }
    let expected: Vec<usize> = (0..p).filter(|&j| a.w[j] >= tau).map(|j| a.latent_ids[j]).collect();
    if expected != a.selected {
        problems.push("selected set differs from {latent : w >= tau}".into());
    }
    if a.selected.len() != a.summary.n_selected {
        problems.push(format!(
            "{} selected ids but summary.n_selected = {}",
            a.selected.len(),
            a.summary.n_selected
        ));
    }
    if a.selected.iter().any(|id| !a.latent_ids.contains(id)) {
        problems.push("selected ids are not all among the reduced latents".into());
    }
    if tau.is_finite() {
        let ratio = filter::estimated_fdp(&a.w, tau);
        if ratio > a.q {
            problems.push(format!("estimated FDP {ratio} at tau exceeds q = {}", a.q));
        }
    }
    if a.activation_rate.iter().any(|r| !(0.0..=1.0).contains(r)) {
        problems.push("activation rate outside [0, 1]".into());
    }
    if a.top.windows(2).any(|r| r[0].w < r[1].w) {
        problems.push("top table is not sorted by descending w".into());
    }
    problems
}

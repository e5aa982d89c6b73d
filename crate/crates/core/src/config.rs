//! Flat `key: value` configuration files for pipeline runs and simulation
//! studies. Blank lines and `#` comments are ignored. All problems in a file
//! are reported together.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit::{FitOptions, Penalty, PenaltyScale};
use crate::sim::{CovarianceFamily, PipelineParams, SimDesign};

/// Parses `key: value` lines. Keys are returned lowercased, in file order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut errs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once(':') {
            Some((k, v)) if !k.trim().is_empty() => {
                let v = v.trim().trim_matches('"').trim_matches('\'');
                out.push((k.trim().to_ascii_lowercase(), v.to_string()));
            }
            _ => errs.push(format!("line {}: expected `key: value`, got {raw:?}", i + 1)),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(Error::Config(errs))
    }
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text)
}

fn parse_into<T: FromStr>(key: &str, value: &str, slot: &mut T, errs: &mut Vec<String>) {
    match value.parse() {
        Ok(v) => *slot = v,
        Err(_) => errs.push(format!("{key}: cannot parse {value:?}")),
    }
}

fn parse_scale(key: &str, value: &str, slot: &mut PenaltyScale, errs: &mut Vec<String>) {
    match value {
        "per-sample" | "per_sample" | "sklearn" => *slot = PenaltyScale::PerSample,
        "unscaled" => *slot = PenaltyScale::Unscaled,
        _ => errs.push(format!("{key}: expected per-sample or unscaled, got {value:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Upper bound on rows used from the input (the first rows are kept).
    pub n_samples: usize,
    pub top_k: usize,
    pub ridge: f64,
    pub s_max: f64,
    pub c_inverse_penalty: f64,
    pub penalty_scale: PenaltyScale,
    pub max_iter: usize,
    pub tol: f64,
    pub q: f64,
    pub seed: u64,
    pub standardize: bool,
    pub top_n: usize,
    pub bottom_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_samples: 4096,
            top_k: 512,
            ridge: 0.002,
            s_max: 0.95,
            c_inverse_penalty: 1.0,
            penalty_scale: PenaltyScale::PerSample,
            max_iter: 4000,
            tol: 1e-7,
            q: 0.1,
            seed: 2025,
            standardize: false,
            top_n: 10,
            bottom_n: 5,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&read_kv(path)?)?;
        Ok(cfg)
    }

    /// Overlays parsed key/value pairs; unknown keys are errors.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut errs = Vec::new();
        for (k, v) in pairs {
            let e = &mut errs;
            match k.as_str() {
                "n_samples" => parse_into(k, v, &mut self.n_samples, e),
                "top_k" => parse_into(k, v, &mut self.top_k, e),
                "ridge" | "lambda_ridge" => parse_into(k, v, &mut self.ridge, e),
                "s_max" => parse_into(k, v, &mut self.s_max, e),
                "c" | "c_inverse_penalty" => parse_into(k, v, &mut self.c_inverse_penalty, e),
                "penalty_scale" => parse_scale(k, v, &mut self.penalty_scale, e),
                "max_iter" => parse_into(k, v, &mut self.max_iter, e),
                "tol" => parse_into(k, v, &mut self.tol, e),
                "q" => parse_into(k, v, &mut self.q, e),
                "seed" => parse_into(k, v, &mut self.seed, e),
                "standardize" => parse_into(k, v, &mut self.standardize, e),
                "top_n" => parse_into(k, v, &mut self.top_n, e),
                "bottom_n" => parse_into(k, v, &mut self.bottom_n, e),
                _ => errs.push(format!("unknown key {k:?}")),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_samples < 2 {
            errs.push(format!("n_samples must be at least 2, got {}", self.n_samples));
        }
        if self.top_k == 0 {
            errs.push("top_k must be positive".into());
        }
        if self.top_k > self.n_samples {
            errs.push(format!(
                "top_k = {} exceeds n_samples = {}",
                self.top_k, self.n_samples
            ));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            errs.push(format!("ridge must be non-negative, got {}", self.ridge));
        }
        if !(self.s_max > 0.0 && self.s_max < 1.0) {
            errs.push(format!("s_max must lie in (0, 1), got {}", self.s_max));
        }
        if !(self.c_inverse_penalty > 0.0 && self.c_inverse_penalty.is_finite()) {
            errs.push(format!("c must be positive, got {}", self.c_inverse_penalty));
        }
        if !(self.tol > 0.0) {
            errs.push(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            errs.push(format!("q must lie in (0, 1), got {}", self.q));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        PipelineParams {
            ridge: self.ridge,
            s_max: self.s_max,
            fit: FitOptions {
                penalty: Penalty::new(self.c_inverse_penalty, self.penalty_scale),
                max_iter: self.max_iter,
                tol: self.tol,
                accelerate: true,
            },
            standardize: self.standardize,
        }
    }
}

/// Everything a simulation study needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: SimDesign,
    pub q: f64,
    pub replicates: usize,
    pub workers: usize,
    pub params: PipelineParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            design: SimDesign {
                n: 1000,
                p: 200,
                covariance: CovarianceFamily::Ar1(0.3),
                n_nonnull: 30,
                amplitude: 2.0,
                sign_mix: 0.5,
                seed: 2025,
            },
            q: 0.1,
            replicates: 100,
            workers: 1,
            params: PipelineParams::default(),
        }
    }
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_pairs(&read_kv(path)?)
    }

    /// Builds and validates a study configuration, reporting every problem
    /// at once.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        let mut errs = Vec::new();
        for (k, v) in pairs {
            let e = &mut errs;
            let d = &mut cfg.design;
            match k.as_str() {
                "n" => parse_into(k, v, &mut d.n, e),
                "p" => parse_into(k, v, &mut d.p, e),
                "covariance" => parse_into(k, v, &mut d.covariance, e),
                "n_nonnull" => parse_into(k, v, &mut d.n_nonnull, e),
                "amplitude" => parse_into(k, v, &mut d.amplitude, e),
                "sign_mix" => parse_into(k, v, &mut d.sign_mix, e),
                "seed" => parse_into(k, v, &mut d.seed, e),
                "q" => parse_into(k, v, &mut cfg.q, e),
                "replicates" => parse_into(k, v, &mut cfg.replicates, e),
                "workers" => parse_into(k, v, &mut cfg.workers, e),
                "ridge" => parse_into(k, v, &mut cfg.params.ridge, e),
                "s_max" => parse_into(k, v, &mut cfg.params.s_max, e),
                "c" | "c_inverse_penalty" => parse_into(k, v, &mut cfg.params.fit.penalty.c, e),
                "penalty_scale" => parse_scale(k, v, &mut cfg.params.fit.penalty.scale, e),
                "max_iter" => parse_into(k, v, &mut cfg.params.fit.max_iter, e),
                "tol" => parse_into(k, v, &mut cfg.params.fit.tol, e),
                "standardize" => parse_into(k, v, &mut cfg.params.standardize, e),
                _ => errs.push(format!("unknown key {k:?}")),
            }
        }
        if cfg.replicates == 0 {
            errs.push("replicates must be at least 1".into());
        }
        if cfg.workers == 0 {
            errs.push("workers must be at least 1".into());
        }
        if !(cfg.q > 0.0 && cfg.q < 1.0) {
            errs.push(format!("q must lie in (0, 1), got {}", cfg.q));
        }
        if !(cfg.params.s_max > 0.0 && cfg.params.s_max < 1.0) {
            errs.push(format!("s_max must lie in (0, 1), got {}", cfg.params.s_max));
        }
        if !(cfg.params.fit.penalty.c > 0.0) {
            errs.push("c must be positive".into());
        }
        if let Err(Error::Config(e)) = cfg.design.validate() {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.top_k, 512);
        assert_eq!(c.ridge, 0.002);
        assert_eq!(c.s_max, 0.95);
        assert_eq!(c.c_inverse_penalty, 1.0);
        assert_eq!(c.max_iter, 4000);
        assert_eq!(c.q, 0.1);
        assert_eq!(c.seed, 2025);
        assert_eq!((c.top_n, c.bottom_n), (10, 5));
        c.validate().unwrap();
    }

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# comment\nq: 0.2\n\nTop_K: 8  # inline\n").unwrap();
        assert_eq!(kv, vec![("q".into(), "0.2".into()), ("top_k".into(), "8".into())]);
        assert!(parse_kv("just words\n").is_err());
    }

    #[test]
    fn run_config_overlay_and_errors() {
        let mut c = RunConfig::default();
        c.apply(&parse_kv("q: 0.2\ntop_k: 8\nseed: 7").unwrap()).unwrap();
        assert_eq!((c.q, c.top_k, c.seed), (0.2, 8, 7));
        let err = c.apply(&parse_kv("q: abc\nbogus: 1").unwrap()).unwrap_err();
        match err {
            Error::Config(v) => assert_eq!(v.len(), 2),
            e => panic!("{e}"),
        }
        let bad = RunConfig { q: 1.5, s_max: 1.0, top_k: 5000, ..RunConfig::default() };
        match bad.validate().unwrap_err() {
            Error::Config(v) => assert_eq!(v.len(), 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn sim_config_lists_all_errors() {
        let pairs = parse_kv("replicates: 0\nq: 2\ncovariance: ar1(1.5)\nn_nonnull: 500").unwrap();
        match SimConfig::from_pairs(&pairs).unwrap_err() {
            Error::Config(v) => assert_eq!(v.len(), 4, "{v:?}"),
            e => panic!("{e}"),
        }
        let ok = SimConfig::from_pairs(&parse_kv("covariance: identity\namplitude: 0").unwrap()).unwrap();
        assert_eq!(ok.design.covariance, CovarianceFamily::Identity);
        assert_eq!(ok.design.amplitude, 0.0);
    }
}

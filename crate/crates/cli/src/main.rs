use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use knockoff_core::pipeline::{self, PipelineInputs};
use knockoff_core::{sim, Error, ErrorKind, MatrixFormat, RunConfig, SimConfig};
use log::info;

/// Knockoff+ feature selection with false discovery rate control.
#[derive(Parser)]
#[command(name = "knockoff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selection pipeline on an activation matrix and labels.
    Run(RunArgs),
    /// Re-emit plot data and tables from a saved artifact.
    Report {
        /// Artifact file or run directory.
        #[arg(long)]
        artifact: PathBuf,
        /// Output directory (defaults to the artifact's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo FDR study on synthetic data.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Destination of the per-replicate csv.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the worker count from the config file.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-derive threshold and selection from an artifact and report
    /// inconsistencies.
    Validate {
        /// Artifact file or run directory.
        #[arg(long)]
        artifact: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    RawF32,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::RawF32 => MatrixFormat::RawF32,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Key/value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    /// Inverse L1 penalty strength.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Matrix format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.q {
            cfg.q = v;
        }
        if let Some(v) = self.top_k {
            cfg.top_k = v;
        }
        if let Some(v) = self.ridge {
            cfg.ridge = v;
        }
        if let Some(v) = self.s_max {
            cfg.s_max = v;
        }
        if let Some(v) = self.c {
            cfg.c_inverse_penalty = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let cfg = args.config()?;
    let inputs = PipelineInputs {
        features: &args.features,
        labels: &args.labels,
        format: args.format.map(Into::into),
    };
    let result = pipeline::run_pipeline(&cfg, &inputs, &args.out)?;
    let a = &result.artifact;
    for (stage, secs) in &result.timings.stages {
        info!("{stage}: {secs:.3}s");
    }
    let tau = a.tau.map_or("none".to_string(), |t| format!("{t:.6}"));
    println!(
        "selected {}/{} latents at q={} (tau={tau}); accuracy={:.4} logloss={:.4}",
        a.selected.len(),
        a.effective_top_k,
        a.q,
        a.classifier.accuracy,
        a.classifier.logloss
    );
    println!("wrote {} files to {}", result.written.len(), args.out.display());
    Ok(())
}

fn report(artifact: &Path, out: Option<&Path>) -> Result<(), Error> {
    let a = pipeline::load_artifact(artifact)?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None if artifact.is_dir() => artifact.to_path_buf(),
        None => artifact.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let written = pipeline::emit_report(&a, &dir)?;
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}

fn simulate(config: Option<&Path>, out: &Path, workers: Option<usize>) -> Result<(), Error> {
    let mut cfg = match config {
        Some(p) => SimConfig::from_file(p)?,
        None => SimConfig::default(),
    };
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let study = sim::run_study(&cfg.design, cfg.q, cfg.replicates, cfg.workers, &cfg.params)?;
    std::fs::write(out, study.to_csv()).map_err(|e| Error::io(out, e))?;
    println!("{}", study.summary_line());
    Ok(())
}

fn validate(artifact: &Path) -> Result<(), Error> {
    let a = pipeline::load_artifact(artifact)?;
    let problems = pipeline::validate_artifact(&a);
    if problems.is_empty() {
        println!("artifact ok: {} selected of {}", a.selected.len(), a.latent_ids.len());
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "artifact is inconsistent:\n  {}",
            problems.join("\n  ")
        )))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Report { artifact, out } => report(artifact, out.as_deref()),
        Command::Simulate { config, out, workers } => simulate(config.as_deref(), out, *workers),
        Command::Validate { artifact } => validate(artifact),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `voxeldim` — batch driver for the intrinsic-dimension pipeline.
//!
//! Every subcommand reads the same declarative JSON run configuration
//! (see `docs/config-schema.md`), optionally overridden by flags (flags
//! win), and writes its artifacts into a run directory named by the hash
//! of the effective configuration. Exit codes: 0 success, 1 some batch
//! instances failed, 2 invalid configuration, 3 I/O failure.

mod artifacts;
mod commands;
mod config;
mod pool;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artifacts::RunContext;
use commands::Outcome;
use config::{
    CliNonlinearity, FdConfig, FdInstance, IcaConfig, IngestConfig, RunConfig, SmoothConfig,
    SynthConfig,
};
use voxeldim::io::VolumeFormat;
use voxeldim::Method;

/// Errors surfaced to the shell.
#[derive(Debug)]
pub enum CliError {
    /// The configuration is invalid or incomplete (exit 2).
    Config(String),
    /// A file could not be read or written (exit 3).
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
        }
    }
}

#[derive(Parser)]
#[command(name = "voxeldim", version, about = "Intrinsic-dimension analysis of time x voxel data")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate simulated mixtures and their ground truth.
    Synth(SynthArgs),
    /// Convert 4-D volumes into analysis matrices.
    Ingest(IngestArgs),
    /// Gaussian-smooth volumes at one or more kernel widths.
    Smooth(SmoothArgs),
    /// Estimate the correlation fractal dimension of matrices.
    Fd(FdArgs),
    /// Unmix matrices with spatial fastICA.
    Ica(IcaArgs),
    /// Merge stage fragments into report.json and report.txt.
    Report,
}

#[derive(Args)]
struct SynthArgs {
    /// Seeds, one matrix per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Additive noise as a fraction of the mixture RMS.
    #[arg(long)]
    noise_level: Option<f64>,
}

#[derive(Args)]
struct IngestArgs {
    /// Input volumes.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Volume format: nifti1-uncompressed or raw-f32-4d.
    #[arg(long, value_parser = parse_format)]
    format: Option<VolumeFormat>,
    /// Mask volume; nonzero voxels are included.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Activity threshold relative to the maximum temporal stdev.
    #[arg(long)]
    threshold: Option<f64>,
    /// Spatial decimation stride.
    #[arg(long)]
    decimate: Option<usize>,
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<VolumeFormat>,
    /// Kernel FWHM in millimetres; repeat for a sweep.
    #[arg(long = "fwhm", value_delimiter = ',')]
    fwhm_mm: Vec<f64>,
}

#[derive(Args)]
struct FdArgs {
    /// Matrix instance, `path` or `path=label`.
    #[arg(long = "instance", value_parser = parse_instance)]
    instances: Vec<FdInstance>,
    /// pair-count or box-count.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Tukey taper parameter in [0, 1].
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Args)]
struct IcaArgs {
    #[arg(long = "instance")]
    instances: Vec<PathBuf>,
    /// Component counts to sweep; omit for the whitening auto rank.
    #[arg(long = "p", value_delimiter = ',')]
    p: Vec<usize>,
    /// tanh or cube.
    #[arg(long, value_parser = parse_nonlinearity)]
    nonlinearity: Option<CliNonlinearity>,
    /// Restart seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Ground-truth source JSON (as written by synth).
    #[arg(long)]
    truth_json: Option<PathBuf>,
    /// Ground-truth maps binary (as written by synth).
    #[arg(long)]
    truth_maps: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<VolumeFormat, String> {
    match s {
        "nifti1-uncompressed" => Ok(VolumeFormat::Nifti1Uncompressed),
        "raw-f32-4d" => Ok(VolumeFormat::RawF32_4d),
        other => Err(format!(
            "unknown format {other:?}; expected nifti1-uncompressed or raw-f32-4d"
        )),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "pair-count" => Ok(Method::PairCount),
        "box-count" => Ok(Method::BoxCount),
        other => Err(format!(
            "unknown method {other:?}; expected pair-count or box-count"
        )),
    }
}

fn parse_nonlinearity(s: &str) -> Result<CliNonlinearity, String> {
    match s {
        "tanh" => Ok(CliNonlinearity::Tanh),
        "cube" => Ok(CliNonlinearity::Cube),
        other => Err(format!("unknown nonlinearity {other:?}; expected tanh or cube")),
    }
}

fn parse_instance(s: &str) -> Result<FdInstance, String> {
    let (path, label) = match s.split_once('=') {
        Some((p, l)) => (p, l.to_string()),
        None => (s, "all".to_string()),
    };
    if path.is_empty() {
        return Err("instance path must not be empty".into());
    }
    Ok(FdInstance {
        path: PathBuf::from(path),
        label,
    })
}

/// Loads the config file (or starts from defaults) and applies flag
/// overrides; flags win over file values field by field.
fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(root) = &cli.output_root {
        cfg.output_root = root.clone();
    }
    match &cli.command {
        Command::Synth(a) => {
            let stage = cfg.synth.get_or_insert(SynthConfig {
                seeds: Vec::new(),
                noise_level: 0.0,
            });
            if !a.seeds.is_empty() {
                stage.seeds = a.seeds.clone();
            }
            if let Some(n) = a.noise_level {
                stage.noise_level = n;
            }
            if stage.seeds.is_empty() {
                return Err(CliError::Config(
                    "synth needs seeds (config synth.seeds or --seeds)".into(),
                ));
            }
        }
        Command::Ingest(a) => {
            let file_stage = cfg.ingest.take();
            let format = a
                .format
                .or(file_stage.as_ref().map(|s| s.format))
                .ok_or_else(|| {
                    CliError::Config("ingest needs a format (config ingest.format or --format)".into())
                })?;
            let mut stage = file_stage.unwrap_or(IngestConfig {
                inputs: Vec::new(),
                format,
                mask: None,
                threshold: 0.0,
                decimate: 1,
            });
            stage.format = format;
            if !a.inputs.is_empty() {
                stage.inputs = a.inputs.clone();
            }
            if let Some(m) = &a.mask {
                stage.mask = Some(m.clone());
            }
            if let Some(t) = a.threshold {
                stage.threshold = t;
            }
            if let Some(d) = a.decimate {
                stage.decimate = d;
            }
            if stage.inputs.is_empty() {
                return Err(CliError::Config(
                    "ingest needs inputs (config ingest.inputs or --input)".into(),
                ));
            }
            cfg.ingest = Some(stage);
        }
        Command::Smooth(a) => {
            let file_stage = cfg.smooth.take();
            let format = a
                .format
                .or(file_stage.as_ref().map(|s| s.format))
                .ok_or_else(|| {
                    CliError::Config("smooth needs a format (config smooth.format or --format)".into())
                })?;
            let mut stage = file_stage.unwrap_or(SmoothConfig {
                inputs: Vec::new(),
                format,
                fwhm_mm: Vec::new(),
            });
            stage.format = format;
            if !a.inputs.is_empty() {
                stage.inputs = a.inputs.clone();
            }
            if !a.fwhm_mm.is_empty() {
                stage.fwhm_mm = a.fwhm_mm.clone();
            }
            if stage.inputs.is_empty() || stage.fwhm_mm.is_empty() {
                return Err(CliError::Config(
                    "smooth needs inputs and fwhm values (config smooth.* or --input/--fwhm)".into(),
                ));
            }
            cfg.smooth = Some(stage);
        }
        Command::Fd(a) => {
            let stage = cfg.fd.get_or_insert(FdConfig {
                instances: Vec::new(),
                method: Method::PairCount,
                q: 0.75,
                r_policy: None,
            });
            if !a.instances.is_empty() {
                stage.instances = a.instances.clone();
            }
            if let Some(m) = a.method {
                stage.method = m;
            }
            if let Some(q) = a.q {
                stage.q = q;
            }
            if stage.instances.is_empty() {
                return Err(CliError::Config(
                    "fd needs instances (config fd.instances or --instance)".into(),
                ));
            }
        }
        Command::Ica(a) => {
            let stage = cfg.ica.get_or_insert(IcaConfig {
                instances: Vec::new(),
                p: Vec::new(),
                nonlinearity: CliNonlinearity::Tanh,
                seed: 7,
                truth_json: None,
                truth_maps: None,
            });
            if !a.instances.is_empty() {
                stage.instances = a.instances.clone();
            }
            if !a.p.is_empty() {
                stage.p = a.p.clone();
            }
            if let Some(n) = a.nonlinearity {
                stage.nonlinearity = n;
            }
            if let Some(s) = a.seed {
                stage.seed = s;
            }
            if let Some(p) = &a.truth_json {
                stage.truth_json = Some(p.clone());
            }
            if let Some(p) = &a.truth_maps {
                stage.truth_maps = Some(p.clone());
            }
            if stage.instances.is_empty() {
                return Err(CliError::Config(
                    "ica needs instances (config ica.instances or --instance)".into(),
                ));
            }
        }
        Command::Report => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = effective_config(cli)?;
    let ctx = RunContext::create(cfg)?;
    eprintln!("run directory: {}", ctx.dir.display());
    match &cli.command {
        Command::Synth(_) => commands::synth::run(&ctx),
        Command::Ingest(_) => commands::ingest::run(&ctx),
        Command::Smooth(_) => commands::smooth::run(&ctx),
        Command::Fd(_) => commands::fd::run(&ctx),
        Command::Ica(_) => commands::ica::run(&ctx),
        Command::Report => commands::report::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("warning: some instances failed; partial results written");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Declarative run configuration: a single versioned JSON file describing
//! every pipeline stage, with command-line flags overriding individual
//! fields (flags win).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxeldim::io::VolumeFormat;
use voxeldim::{Method, RadiusPolicy};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Full declarative configuration of one run. The SHA-256 of the effective
/// (post-override) serialized form names the run directory, so identical
/// configurations always map to the same artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Parent directory that run directories are created under.
    #[serde(default = "default_output_root")]
    pub output_root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth: Option<SmoothConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd: Option<FdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ica: Option<IcaConfig>,
}

fn default_output_root() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            output_root: default_output_root(),
            synth: None,
            ingest: None,
            smooth: None,
            fd: None,
            ica: None,
        }
    }
}

/// Simulated-mixture generation: one matrix (plus ground truth) per seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seeds: Vec<u64>,
    /// Additive white noise, as a fraction of the noiseless mixture RMS.
    #[serde(default)]
    pub noise_level: f64,
}

/// Volume-to-matrix conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub inputs: Vec<PathBuf>,
    pub format: VolumeFormat,
    /// Optional mask volume (same format, one time point); voxels with a
    /// nonzero value are included. Without it every voxel is included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Activity threshold relative to the maximum temporal standard
    /// deviation over the mask.
    #[serde(default)]
    pub threshold: f64,
    /// Spatial decimation stride (1 = keep everything).
    #[serde(default = "default_stride")]
    pub decimate: usize,
}

fn default_stride() -> usize {
    1
}

/// Gaussian smoothing of volumes at one or more kernel widths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothConfig {
    pub inputs: Vec<PathBuf>,
    pub format: VolumeFormat,
    pub fwhm_mm: Vec<f64>,
}

/// One matrix instance for FD estimation; the label groups instances in
/// the summary tables (typically the smoothing level).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdInstance {
    pub path: PathBuf,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "all".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub instances: Vec<FdInstance>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_q")]
    pub q: f64,
    /// Radius schedule; omitted means the method default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_policy: Option<RadiusPolicy>,
}

fn default_method() -> Method {
    Method::PairCount
}

fn default_q() -> f64 {
    0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CliNonlinearity {
    Tanh,
    Cube,
}

impl From<CliNonlinearity> for voxeldim::Nonlinearity {
    fn from(n: CliNonlinearity) -> Self {
        match n {
            CliNonlinearity::Tanh => voxeldim::Nonlinearity::Tanh,
            CliNonlinearity::Cube => voxeldim::Nonlinearity::Cube,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcaConfig {
    pub instances: Vec<PathBuf>,
    /// Component counts to sweep; empty means the whitening auto rank.
    #[serde(default)]
    pub p: Vec<usize>,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: CliNonlinearity,
    /// Restart seed for the fastICA initialization.
    #[serde(default = "default_ica_seed")]
    pub seed: u64,
    /// Optional ground truth (JSON + maps binary, as written by synth) to
    /// score the recovered components against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_maps: Option<PathBuf>,
}

fn default_nonlinearity() -> CliNonlinearity {
    CliNonlinearity::Tanh
}

fn default_ica_seed() -> u64 {
    7
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (this build reads version {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(s) = &self.synth {
            if s.seeds.is_empty() {
                return Err(CliError::Config("synth.seeds must not be empty".into()));
            }
            if !(s.noise_level >= 0.0) {
                return Err(CliError::Config(format!(
                    "synth.noise_level must be nonnegative, got {}",
                    s.noise_level
                )));
            }
        }
        if let Some(f) = &self.fd {
            if f.instances.is_empty() {
                return Err(CliError::Config("fd.instances must not be empty".into()));
            }
            if !(0.0..=1.0).contains(&f.q) {
                return Err(CliError::Config(format!(
                    "fd.q must be in [0, 1], got {}",
                    f.q
                )));
            }
        }
        if let Some(i) = &self.ica {
            if i.instances.is_empty() {
                return Err(CliError::Config("ica.instances must not be empty".into()));
            }
        }
        if let Some(i) = &self.ingest {
            if i.inputs.is_empty() {
                return Err(CliError::Config("ingest.inputs must not be empty".into()));
            }
            if i.decimate == 0 {
                return Err(CliError::Config("ingest.decimate must be >= 1".into()));
            }
        }
        if let Some(s) = &self.smooth {
            if s.inputs.is_empty() || s.fwhm_mm.is_empty() {
                return Err(CliError::Config(
                    "smooth.inputs and smooth.fwhm_mm must not be empty".into(),
                ));
            }
        }
        Ok(())
    }

    /// Canonical serialized form used for the run-directory hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

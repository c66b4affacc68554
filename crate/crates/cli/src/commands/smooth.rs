//! `smooth`: Gaussian smoothing sweep over volumes.

use serde::{Deserialize, Serialize};
use voxeldim::gaussian_smooth;
use voxeldim::io::{load_volume, write_nifti1, write_raw_f32, VolumeFormat};

use crate::artifacts::{hash_file, write_atomic_via, RunContext};
use crate::commands::{sanitize, stem_of, Outcome, Provenance};
use crate::pool::par_map;
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct SmoothEntry {
    pub input: String,
    pub fwhm_mm: f64,
    pub output: String,
    pub output_sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SmoothFragment {
    pub provenance: Provenance,
    pub entries: Vec<SmoothEntry>,
    pub errors: Vec<String>,
}

pub fn run(ctx: &RunContext) -> Result<Outcome, CliError> {
    let stage = ctx
        .config
        .smooth
        .as_ref()
        .ok_or_else(|| CliError::Config("no smooth stage configured".into()))?;

    // One job per (input, fwhm) pair; each loads its own volume so a
    // corrupt input only fails its own jobs.
    let jobs: Vec<(usize, f64)> = (0..stage.inputs.len())
        .flat_map(|i| stage.fwhm_mm.iter().map(move |&w| (i, w)))
        .collect();
    let results = par_map(&jobs, |_, &(i, fwhm)| one_job(ctx, i, fwhm, stage.format));

    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (&(i, fwhm), r) in jobs.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => errors.push(format!(
                "{} at fwhm {fwhm}: {e}",
                stage.inputs[i].display()
            )),
        }
    }
    for e in &errors {
        eprintln!("smooth: {e}");
    }
    let outcome = Outcome::from_errors(errors.len());
    let fragment = SmoothFragment {
        provenance: Provenance::for_run(ctx),
        entries,
        errors,
    };
    ctx.write_json("smooth_fragment.json", &fragment)?;
    Ok(outcome)
}

fn one_job(
    ctx: &RunContext,
    input_idx: usize,
    fwhm: f64,
    format: VolumeFormat,
) -> Result<SmoothEntry, CliError> {
    let stage = ctx.config.smooth.as_ref().expect("checked by caller");
    let input = &stage.inputs[input_idx];
    let path = ctx.resolve(input);
    let volume = load_volume(&path, format)
        .map_err(|e| CliError::Io(format!("cannot load volume: {e}")))?;
    let smoothed =
        gaussian_smooth(&volume, fwhm).map_err(|e| CliError::Config(format!("smoothing: {e}")))?;

    let ext = match format {
        VolumeFormat::Nifti1Uncompressed => "nii",
        VolumeFormat::RawF32_4d => "bin",
    };
    let output = format!(
        "{}_fwhm{}.{ext}",
        stem_of(&path),
        sanitize(&format!("{fwhm}"))
    );
    let out_path = ctx.dir.join(&output);
    write_atomic_via(&out_path, |p| match format {
        VolumeFormat::Nifti1Uncompressed => write_nifti1(p, &smoothed),
        VolumeFormat::RawF32_4d => write_raw_f32(p, &smoothed),
    })?;
    let output_sha256 = hash_file(&out_path)?;
    Ok(SmoothEntry {
        input: input.display().to_string(),
        fwhm_mm: fwhm,
        output,
        output_sha256,
    })
}

//! `ingest`: volume -> mask -> threshold -> decimate -> analysis matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};
use voxeldim::io::{load_volume, write_matrix, VolumeFormat};
use voxeldim::{apply_mask_and_threshold, decimate, VoxelMask};

use crate::artifacts::{hash_file, write_atomic_via, RunContext};
use crate::commands::{stem_of, Outcome, Provenance};
use crate::pool::par_map;
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestEntry {
    pub input: String,
    pub input_sha256: String,
    pub matrix_bin: String,
    pub matrix_sha256: String,
    pub t: usize,
    pub n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestFragment {
    pub provenance: Provenance,
    pub threshold: f64,
    pub decimate: usize,
    pub mask: Option<String>,
    pub entries: Vec<IngestEntry>,
    pub errors: Vec<String>,
}

pub fn run(ctx: &RunContext) -> Result<Outcome, CliError> {
    let stage = ctx
        .config
        .ingest
        .as_ref()
        .ok_or_else(|| CliError::Config("no ingest stage configured".into()))?;

    // The mask volume (if any) is shared by every input; a nonzero value
    // at the first time point includes the voxel.
    let mask = match &stage.mask {
        Some(path) => {
            let p = ctx.resolve(path);
            let v = load_volume(&p, stage.format)
                .map_err(|e| CliError::Io(format!("cannot load mask {}: {e}", p.display())))?;
            let (nx, ny, nz, _) = v.dims();
            let mut included = Vec::with_capacity(nx * ny * nz);
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        included.push(v.get(x, y, z, 0) != 0.0);
                    }
                }
            }
            Some(
                VoxelMask::new((nx, ny, nz), included)
                    .map_err(|e| CliError::Config(format!("invalid mask: {e}")))?,
            )
        }
        None => None,
    };

    let results = par_map(&stage.inputs, |_, input| {
        one_input(ctx, input, stage.format, mask.as_ref(), stage.threshold, stage.decimate)
    });

    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (input, r) in stage.inputs.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => errors.push(format!("{}: {e}", input.display())),
        }
    }
    for e in &errors {
        eprintln!("ingest: {e}");
    }
    let outcome = Outcome::from_errors(errors.len());
    let fragment = IngestFragment {
        provenance: Provenance::for_run(ctx),
        threshold: stage.threshold,
        decimate: stage.decimate,
        mask: stage.mask.as_ref().map(|p| p.display().to_string()),
        entries,
        errors,
    };
    ctx.write_json("ingest_fragment.json", &fragment)?;
    Ok(outcome)
}

fn one_input(
    ctx: &RunContext,
    input: &Path,
    format: VolumeFormat,
    mask: Option<&VoxelMask>,
    threshold: f64,
    stride: usize,
) -> Result<IngestEntry, CliError> {
    let path = ctx.resolve(input);
    let input_sha256 = hash_file(&path)?;
    let volume = load_volume(&path, format)
        .map_err(|e| CliError::Io(format!("cannot load volume: {e}")))?;
    let (nx, ny, nz, _) = volume.dims();
    let full;
    let mask = match mask {
        Some(m) => m,
        None => {
            full = VoxelMask::all((nx, ny, nz));
            &full
        }
    };
    let matrix = apply_mask_and_threshold(&volume, mask, threshold)
        .and_then(|m| decimate(&m, stride))
        .map_err(|e| CliError::Io(format!("cannot build matrix: {e}")))?;

    let matrix_bin = format!("matrix_{}.bin", stem_of(&path));
    let out = ctx.dir.join(&matrix_bin);
    write_atomic_via(&out, |p| write_matrix(p, &matrix))?;
    let matrix_sha256 = hash_file(&out)?;
    Ok(IngestEntry {
        input: input.display().to_string(),
        input_sha256,
        matrix_bin,
        matrix_sha256,
        t: matrix.t(),
        n: matrix.n(),
    })
}

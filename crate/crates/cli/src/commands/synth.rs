//! `synth`: one simulated mixture (plus ground truth) per seed.

use serde::{Deserialize, Serialize};
use voxeldim::io::write_matrix;
use voxeldim::{export_sources, generate_sources, mix};

use crate::artifacts::{hash_file, write_atomic_via, RunContext};
use crate::commands::{Outcome, Provenance};
use crate::pool::par_map;
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthEntry {
    pub seed: u64,
    pub sources_json: String,
    pub maps_bin: String,
    pub matrix_bin: String,
    pub matrix_sha256: String,
    pub t: usize,
    pub n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthFragment {
    pub provenance: Provenance,
    pub noise_level: f64,
    pub entries: Vec<SynthEntry>,
    pub errors: Vec<String>,
}

pub fn run(ctx: &RunContext) -> Result<Outcome, CliError> {
    let stage = ctx
        .config
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config("no synth stage configured".into()))?;

    let results = par_map(&stage.seeds, |_, &seed| one_seed(ctx, seed, stage.noise_level));

    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (seed, r) in stage.seeds.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    for e in &errors {
        eprintln!("synth: {e}");
    }
    let outcome = Outcome::from_errors(errors.len());
    let fragment = SynthFragment {
        provenance: Provenance::for_run(ctx),
        noise_level: stage.noise_level,
        entries,
        errors,
    };
    ctx.write_json("synth_fragment.json", &fragment)?;
    Ok(outcome)
}

fn one_seed(ctx: &RunContext, seed: u64, noise_level: f64) -> Result<SynthEntry, CliError> {
    let sources = generate_sources(seed);
    let matrix = mix(&sources, noise_level, seed)
        .map_err(|e| CliError::Io(format!("mixing failed: {e}")))?;

    let json_name = format!("sources_{seed}.json");
    let maps_name = format!("maps_{seed}.bin");
    let matrix_name = format!("matrix_{seed}.bin");

    // export_sources writes two files, so stage both under temp names and
    // rename each into place.
    let tmp_json = ctx.dir.join(format!("{json_name}.tmp"));
    let tmp_maps = ctx.dir.join(format!("{maps_name}.tmp"));
    export_sources(&sources, &tmp_json, &tmp_maps)
        .map_err(|e| CliError::Io(format!("cannot export sources for seed {seed}: {e}")))?;
    for (tmp, name) in [(&tmp_json, &json_name), (&tmp_maps, &maps_name)] {
        let dst = ctx.dir.join(name);
        std::fs::rename(tmp, &dst)
            .map_err(|e| CliError::Io(format!("cannot rename into {}: {e}", dst.display())))?;
    }

    let matrix_path = ctx.dir.join(&matrix_name);
    write_atomic_via(&matrix_path, |p| write_matrix(p, &matrix))?;
    let matrix_sha256 = hash_file(&matrix_path)?;

    Ok(SynthEntry {
        seed,
        sources_json: json_name,
        maps_bin: maps_name,
        matrix_bin: matrix_name,
        matrix_sha256,
        t: matrix.t(),
        n: matrix.n(),
    })
}

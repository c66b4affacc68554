//! `ica`: spatial fastICA over a batch of matrices, with optional
//! ground-truth matching.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use voxeldim::io::load_matrix;
use voxeldim::{
    fastica, load_sources, match_sources, whiten, DataMatrix, SourceMatch, SourceSet, TargetDim,
};

use crate::artifacts::RunContext;
use crate::commands::{stem_of, Outcome, Provenance};
use crate::pool::par_map;
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct IcaEntry {
    pub input: String,
    pub p: usize,
    pub converged: bool,
    pub achieved_tol: f64,
    pub iterations: usize,
    /// Component order by ascending rank-1 reconstruction RMSE.
    pub order: Vec<usize>,
    /// RMSE of reconstruction from 0..p ordered components.
    pub rmse_curve: Vec<f64>,
    /// Exported model: `<prefix>.json`, `<prefix>_t.bin`, `<prefix>_s.bin`.
    pub model_prefix: String,
    pub match_csv: Option<String>,
    pub matches: Option<SourceMatch>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IcaFragment {
    pub provenance: Provenance,
    pub nonlinearity: crate::config::CliNonlinearity,
    pub seed: u64,
    pub entries: Vec<IcaEntry>,
    pub errors: Vec<String>,
}

pub fn run(ctx: &RunContext) -> Result<Outcome, CliError> {
    let stage = ctx
        .config
        .ica
        .as_ref()
        .ok_or_else(|| CliError::Config("no ica stage configured".into()))?;

    let truth = match (&stage.truth_json, &stage.truth_maps) {
        (Some(j), Some(m)) => Some(
            load_sources(&ctx.resolve(j), &ctx.resolve(m))
                .map_err(|e| CliError::Io(format!("cannot load ground truth: {e}")))?,
        ),
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "ground truth needs both truth_json and truth_maps".into(),
            ))
        }
    };

    let jobs: Vec<(PathBuf, Option<usize>)> = stage
        .instances
        .iter()
        .flat_map(|input| {
            if stage.p.is_empty() {
                vec![(input.clone(), None)]
            } else {
                stage.p.iter().map(|&p| (input.clone(), Some(p))).collect()
            }
        })
        .collect();
    let results = par_map(&jobs, |_, (input, p)| one_job(ctx, input, *p, truth.as_ref()));

    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for ((input, p), r) in jobs.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => {
                let p_desc = p.map_or("auto".to_string(), |p| p.to_string());
                errors.push(format!("{} at p={p_desc}: {e}", input.display()));
            }
        }
    }
    for e in &errors {
        eprintln!("ica: {e}");
    }
    let outcome = Outcome::from_errors(errors.len());
    let fragment = IcaFragment {
        provenance: Provenance::for_run(ctx),
        nonlinearity: stage.nonlinearity,
        seed: stage.seed,
        entries,
        errors,
    };
    ctx.write_json("ica_fragment.json", &fragment)?;
    Ok(outcome)
}

fn one_job(
    ctx: &RunContext,
    input: &PathBuf,
    p: Option<usize>,
    truth: Option<&SourceSet>,
) -> Result<IcaEntry, CliError> {
    let stage = ctx.config.ica.as_ref().expect("checked by caller");
    let path = ctx.resolve(input);
    let matrix = load_matrix(&path).map_err(|e| CliError::Io(format!("cannot load matrix: {e}")))?;
    let p = match p {
        Some(p) => p,
        None => auto_rank(&matrix)?,
    };
    let model = fastica(&matrix, p, stage.nonlinearity.into(), stage.seed)
        .map_err(|e| CliError::Io(format!("fastica failed: {e}")))?;

    let prefix = format!("ica_{}_p{p}", stem_of(&path));
    export_model(ctx, &prefix, &model, matrix.n())?;

    let (match_csv, matches) = match truth {
        Some(truth) => {
            let m = match_sources(&model, truth)
                .map_err(|e| CliError::Io(format!("source matching failed: {e}")))?;
            let csv = format!("{prefix}_matches.csv");
            ctx.write_atomic(&csv, match_csv_text(&m).as_bytes())?;
            (Some(csv), Some(m))
        }
        None => (None, None),
    };

    Ok(IcaEntry {
        input: input.display().to_string(),
        p,
        converged: model.converged,
        achieved_tol: model.achieved_tol,
        iterations: model.iterations,
        order: model.order.clone(),
        rmse_curve: model.rmse_curve.clone(),
        model_prefix: prefix,
        match_csv,
        matches,
    })
}

/// Whitening auto rank: the model dimension used when no p is requested.
fn auto_rank(m: &DataMatrix) -> Result<usize, CliError> {
    let (w, _) = whiten(m, TargetDim::Auto)
        .map_err(|e| CliError::Io(format!("whitening failed: {e}")))?;
    Ok(w.k())
}

/// Atomic model export: write under a temp prefix, then rename the three
/// files into place.
fn export_model(
    ctx: &RunContext,
    prefix: &str,
    model: &voxeldim::UnmixingModel,
    n: usize,
) -> Result<(), CliError> {
    let tmp_prefix = format!("{prefix}-part");
    voxeldim::ica::export_unmixing(&ctx.dir.join(&tmp_prefix), model, n)
        .map_err(|e| CliError::Io(format!("cannot export model: {e}")))?;
    for suffix in [".json", "_t.bin", "_s.bin"] {
        let from = ctx.dir.join(format!("{tmp_prefix}{suffix}"));
        let to = ctx.dir.join(format!("{prefix}{suffix}"));
        std::fs::rename(&from, &to)
            .map_err(|e| CliError::Io(format!("cannot rename into {}: {e}", to.display())))?;
    }
    Ok(())
}

fn match_csv_text(m: &SourceMatch) -> String {
    let mut out = String::from("source_id,component,r,p_value,rmse\n");
    for e in &m.entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.source_id, e.component, e.r, e.p_value, e.rmse
        ));
    }
    out
}

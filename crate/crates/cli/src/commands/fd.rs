//! `fd`: fractal-dimension estimation over a batch of matrices, with
//! per-label summary statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use voxeldim::fractal::tukey_taper;
use voxeldim::io::load_matrix;
use voxeldim::{estimate_fd_with_curve, fd_summary, FdSummary, LogLogCurve, RadiusPolicy, SigmoidFit};

use crate::artifacts::RunContext;
use crate::commands::{stem_of, Outcome, Provenance};
use crate::config::FdInstance;
use crate::pool::par_map;
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct FdEntry {
    pub path: String,
    pub label: String,
    pub fd: f64,
    pub fit: SigmoidFit,
    /// Radii dropped because they produced an empty measure.
    pub dropped_r: Vec<f64>,
    pub curve_csv: String,
    pub fit_json: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FdFragment {
    pub provenance: Provenance,
    pub method: voxeldim::Method,
    pub q: f64,
    pub entries: Vec<FdEntry>,
    /// Per-label summaries (labels with at least 3 estimates).
    pub summaries: BTreeMap<String, FdSummary>,
    pub errors: Vec<String>,
}

pub fn run(ctx: &RunContext) -> Result<Outcome, CliError> {
    let stage = ctx
        .config
        .fd
        .as_ref()
        .ok_or_else(|| CliError::Config("no fd stage configured".into()))?;
    let policy = stage
        .r_policy
        .clone()
        .unwrap_or_else(|| RadiusPolicy::default_for(stage.method));

    let results = par_map(&stage.instances, |i, inst| one_instance(ctx, i, inst, &policy));

    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (inst, r) in stage.instances.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => errors.push(format!("{}: {e}", inst.path.display())),
        }
    }
    for e in &errors {
        eprintln!("fd: {e}");
    }

    let mut by_label: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in &entries {
        by_label.entry(e.label.clone()).or_default().push(e.fd);
    }
    let mut summaries = BTreeMap::new();
    for (label, fds) in &by_label {
        if fds.len() >= 3 {
            let s = fd_summary(fds).map_err(|e| CliError::Config(format!("summary: {e}")))?;
            summaries.insert(label.clone(), s);
        }
    }

    let outcome = Outcome::from_errors(errors.len());
    let fragment = FdFragment {
        provenance: Provenance::for_run(ctx),
        method: stage.method,
        q: stage.q,
        entries,
        summaries,
        errors,
    };
    ctx.write_json("fd_fragment.json", &fragment)?;
    Ok(outcome)
}

fn one_instance(
    ctx: &RunContext,
    index: usize,
    inst: &FdInstance,
    policy: &RadiusPolicy,
) -> Result<FdEntry, CliError> {
    let stage = ctx.config.fd.as_ref().expect("checked by caller");
    let path = ctx.resolve(&inst.path);
    let matrix = load_matrix(&path).map_err(|e| CliError::Io(format!("cannot load matrix: {e}")))?;
    let (curve, fit) = estimate_fd_with_curve(&matrix, stage.method, stage.q, policy)
        .map_err(|e| CliError::Io(format!("estimation failed: {e}")))?;

    let stem = format!("fd_{index}_{}", stem_of(&path));
    let curve_csv = format!("{stem}_curve.csv");
    ctx.write_atomic(&curve_csv, curve_csv_text(&curve, stage.q).as_bytes())?;
    let fit_json = format!("{stem}_fit.json");
    ctx.write_json(&fit_json, &fit)?;

    Ok(FdEntry {
        path: inst.path.display().to_string(),
        label: inst.label.clone(),
        fd: fit.fd,
        fit,
        dropped_r: curve.dropped_r.clone(),
        curve_csv,
        fit_json,
    })
}

/// The measured curve with the fit weights actually used: Tukey taper over
/// the normalized y-range.
fn curve_csv_text(curve: &LogLogCurve, q: f64) -> String {
    let y_min = curve.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y_max = curve
        .points
        .iter()
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max);
    let range = y_max - y_min;
    let mut out = String::from("r,x,y,weight\n");
    for p in &curve.points {
        let w = if range > 0.0 {
            tukey_taper((p.y - y_min) / range, q)
        } else {
            1.0
        };
        out.push_str(&format!("{},{},{},{}\n", p.r, p.x, p.y, w));
    }
    out
}

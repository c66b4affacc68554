//! `report`: merges the stage fragments of a run into `report.json`
//! (self-hashing) and a human-readable `report.txt`.

use serde_json::Value;

use crate::artifacts::{sha256_hex, RunContext};
use crate::commands::{fd::FdFragment, ica::IcaFragment, Outcome, Provenance};
use crate::CliError;

const FRAGMENTS: [&str; 5] = [
    "synth_fragment.json",
    "ingest_fragment.json",
    "smooth_fragment.json",
    "fd_fragment.json",
    "ica_fragment.json",
];

pub fn run(ctx: &RunContext) -> Result<Outcome, CliError> {
    let mut merged = serde_json::Map::new();
    merged.insert(
        "provenance".into(),
        serde_json::to_value(Provenance::for_run(ctx)).unwrap(),
    );
    let mut stages = Vec::new();
    let mut error_count = 0usize;
    for name in FRAGMENTS {
        if !ctx.dir.join(name).exists() {
            continue;
        }
        let value: Value = ctx.read_json(name)?;
        if let Some(errs) = value.get("errors").and_then(|e| e.as_array()) {
            error_count += errs.len();
        }
        let stage = name.trim_end_matches("_fragment.json").to_string();
        stages.push(stage.clone());
        merged.insert(stage, value);
    }
    if stages.is_empty() {
        return Err(CliError::Config(format!(
            "no stage fragments found in {}; run a pipeline stage first",
            ctx.dir.display()
        )));
    }
    merged.insert(
        "stages".into(),
        Value::Array(stages.iter().cloned().map(Value::String).collect()),
    );

    // The content hash covers the canonical serialization of everything
    // except the hash field itself.
    let without_hash = serde_json::to_string_pretty(&Value::Object(merged.clone())).unwrap();
    let content_sha256 = sha256_hex(without_hash.as_bytes());
    merged.insert("content_sha256".into(), Value::String(content_sha256.clone()));
    ctx.write_json("report.json", &Value::Object(merged))?;

    let text = report_text(ctx, &stages, &content_sha256, error_count)?;
    ctx.write_atomic("report.txt", text.as_bytes())?;
    println!("{text}");
    Ok(Outcome::from_errors(error_count))
}

fn report_text(
    ctx: &RunContext,
    stages: &[String],
    content_sha256: &str,
    error_count: usize,
) -> Result<String, CliError> {
    let mut out = String::new();
    out.push_str(&format!(
        "voxeldim {} run report\n",
        env!("CARGO_PKG_VERSION")
    ));
    out.push_str(&format!("config   {}\n", ctx.config_hash));
    out.push_str(&format!("content  {content_sha256}\n"));
    out.push_str(&format!("stages   {}\n", stages.join(", ")));

    if ctx.dir.join("fd_fragment.json").exists() {
        let fd: FdFragment = ctx.read_json("fd_fragment.json")?;
        out.push_str(&format!(
            "\nfractal dimension ({:?}, q = {})\n",
            fd.method, fd.q
        ));
        out.push_str(&format!(
            "{:<12} {:>5} {:>18} {:>24} {:>18}\n",
            "label", "count", "mean", "95% conf range", "stdev"
        ));
        for (label, s) in &fd.summaries {
            out.push_str(&format!(
                "{:<12} {:>5} {:>8.4} ({:>6.4}) {:>9.4}..{:<7.4} ({:.4}..{:.4}) {:>8.4} ({:.4})\n",
                label,
                s.instance_count,
                s.mean_trimmed,
                s.mean_untrimmed,
                s.mean_trimmed - s.conf_halfwidth_trimmed,
                s.mean_trimmed + s.conf_halfwidth_trimmed,
                s.mean_untrimmed - s.conf_halfwidth_untrimmed,
                s.mean_untrimmed + s.conf_halfwidth_untrimmed,
                s.stdev_trimmed,
                s.stdev_untrimmed,
            ));
        }
        if fd.summaries.is_empty() {
            out.push_str("(fewer than 3 estimates per label; no summary)\n");
        }
        for e in &fd.entries {
            out.push_str(&format!("  {:<12} {:<32} fd = {:.4}\n", e.label, e.path, e.fd));
        }
    }

    if ctx.dir.join("ica_fragment.json").exists() {
        let ica: IcaFragment = ctx.read_json("ica_fragment.json")?;
        out.push_str("\nica\n");
        for e in &ica.entries {
            let last_rmse = e.rmse_curve.last().copied().unwrap_or(f64::NAN);
            out.push_str(&format!(
                "  {:<32} p = {:<3} converged = {:<5} final rmse = {:.3e}\n",
                e.input, e.p, e.converged, last_rmse
            ));
            if let Some(m) = &e.matches {
                for entry in &m.entries {
                    out.push_str(&format!(
                        "    S{} -> component {:<2} |r| = {:.4}\n",
                        entry.source_id,
                        entry.component,
                        entry.r.abs()
                    ));
                }
            }
        }
    }

    if error_count > 0 {
        out.push_str(&format!(
            "\n{error_count} instance error(s); see the stage fragments for details\n"
        ));
    }
    Ok(out)
}

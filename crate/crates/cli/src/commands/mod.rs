//! Pipeline subcommands. Every command writes its artifacts plus a JSON
//! fragment into the run directory; `report` merges the fragments.

pub mod fd;
pub mod ica;
pub mod ingest;
pub mod report;
pub mod smooth;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::artifacts::RunContext;

/// Identifies the producing tool and configuration for every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub schema_version: u32,
    pub config_hash: String,
}

impl Provenance {
    pub fn for_run(ctx: &RunContext) -> Provenance {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: ctx.config.schema_version,
            config_hash: ctx.config_hash.clone(),
        }
    }
}

/// Batch outcome: every instance ran, or some failed (fault isolation
/// keeps siblings running either way).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Partial,
}

impl Outcome {
    pub fn from_errors(error_count: usize) -> Outcome {
        if error_count == 0 {
            Outcome::Complete
        } else {
            Outcome::Partial
        }
    }
}

/// Turns an arbitrary label or file stem into a safe artifact name part.
pub fn sanitize(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    if out.is_empty() {
        out.push('x');
    }
    out
}

/// File stem of a path, sanitized for artifact names.
pub fn stem_of(path: &std::path::Path) -> String {
    sanitize(
        &path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into()),
    )
}

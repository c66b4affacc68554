//! Run-directory management: config-hash naming, atomic file writes,
//! content hashing, and the JSON fragments that `report` merges.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// SHA-256 hex digest of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// SHA-256 hex digest of a file's contents.
pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot hash {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Everything a command needs to place artifacts deterministically.
pub struct RunContext {
    pub config: RunConfig,
    pub config_hash: String,
    pub dir: PathBuf,
}

impl RunContext {
    /// Creates (if needed) the run directory named by the hash of the
    /// effective configuration, and persists the configuration inside it.
    pub fn create(config: RunConfig) -> Result<RunContext, CliError> {
        let canonical = config.canonical_json();
        let config_hash = sha256_hex(canonical.as_bytes());
        let dir = config.output_root.join(&config_hash[..16]);
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Io(format!("cannot create run dir {}: {e}", dir.display())))?;
        let ctx = RunContext {
            config,
            config_hash,
            dir,
        };
        ctx.write_atomic("config.json", canonical.as_bytes())?;
        Ok(ctx)
    }

    /// Resolves an instance path: relative paths refer to the run
    /// directory, absolute paths are used as-is.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.dir.join(path)
        }
    }

    /// Atomically writes `name` under the run directory
    /// (write-temp-then-rename, so readers never observe partial files).
    pub fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        write_atomic_at(&path, bytes)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("value serializes");
        text.push('\n');
        self.write_atomic(name, text.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T, CliError> {
        let path = self.dir.join(name);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Io(format!("cannot parse {}: {e}", path.display())))
    }
}

/// Atomic write to an arbitrary path: temp file in the same directory,
/// then rename over the target.
pub fn write_atomic_at(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = temp_sibling(path);
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("cannot rename into {}: {e}", path.display())))
}

/// Runs `write` against a temp path, then renames the result over `path`.
/// Used to make the library's direct-to-file writers atomic.
pub fn write_atomic_via<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&Path) -> voxeldim::Result<()>,
{
    let tmp = temp_sibling(path);
    write(&tmp).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("cannot rename into {}: {e}", path.display())))?;
    // Writers may emit a JSON sidecar next to the main file (raw volumes
    // do); move it along with the payload.
    let tmp_sidecar = PathBuf::from(format!("{}.json", tmp.display()));
    if tmp_sidecar.exists() {
        let sidecar = PathBuf::from(format!("{}.json", path.display()));
        std::fs::rename(&tmp_sidecar, &sidecar)
            .map_err(|e| CliError::Io(format!("cannot rename into {}: {e}", sidecar.display())))?;
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    name.push_str(".tmp");
    path.with_file_name(name)
}

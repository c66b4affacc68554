//! Black-box checks of the CLI surface: exit codes, flag overrides, and
//! run-directory behavior.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voxeldim"))
}

fn write_config(dir: &Path, body: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &serde_json::json!({ "schema_version": 99, "output_root": tmp.path().join("runs") }),
    );
    let out = bin().args(["synth", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_field_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &serde_json::json!({ "schema_version": 1, "no_such_field": true }),
    );
    let out = bin().args(["synth", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_stage_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    // A valid config without an fd stage and no --instance flags.
    let cfg = write_config(
        tmp.path(),
        &serde_json::json!({ "schema_version": 1, "output_root": tmp.path().join("runs") }),
    );
    let out = bin().args(["fd", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_without_fragments_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &serde_json::json!({ "schema_version": 1, "output_root": tmp.path().join("runs") }),
    );
    let out = bin().args(["report", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_matrix_is_partial_failure_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &serde_json::json!({
            "schema_version": 1,
            "output_root": tmp.path().join("runs"),
            "fd": { "instances": [ { "path": "does_not_exist.bin", "label": "x" } ] }
        }),
    );
    let out = bin().args(["fd", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fault_isolation_keeps_good_instances() {
    // One bad instance fails, the sibling still produces its artifacts,
    // and the overall exit code is 1.
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    let cfg = write_config(
        tmp.path(),
        &serde_json::json!({
            "schema_version": 1,
            "output_root": runs,
            "synth": { "seeds": [5] },
            "fd": { "instances": [
                { "path": "matrix_5.bin", "label": "ok" },
                { "path": "missing.bin", "label": "bad" }
            ]}
        }),
    );
    let synth = bin().args(["synth", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(synth.status.code(), Some(0), "{}", String::from_utf8_lossy(&synth.stderr));
    let fd = bin().args(["fd", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(fd.status.code(), Some(1));

    let run_dir = std::fs::read_dir(&runs).unwrap().next().unwrap().unwrap().path();
    let fragment: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("fd_fragment.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(fragment["entries"].as_array().unwrap().len(), 1);
    assert_eq!(fragment["errors"].as_array().unwrap().len(), 1);
}

#[test]
fn flags_override_config_file() {
    // The config file says 2 seeds; --seeds narrows it to one, and the
    // narrowed run lands in its own run directory.
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    let cfg = write_config(
        tmp.path(),
        &serde_json::json!({
            "schema_version": 1,
            "output_root": runs,
            "synth": { "seeds": [21, 22] }
        }),
    );
    let out = bin()
        .args(["synth", "--seeds", "23", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = std::fs::read_dir(&runs).unwrap().next().unwrap().unwrap().path();
    assert!(run_dir.join("matrix_23.bin").exists());
    assert!(!run_dir.join("matrix_21.bin").exists());
    // The persisted effective config reflects the override.
    let persisted: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(persisted["synth"]["seeds"], serde_json::json!([23]));
}

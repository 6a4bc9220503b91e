//! End-to-end CLI checks: exactness of the oracle report, byte-level
//! reproducibility of artifacts, the equivalence experiment, and config
//! validation through the binary surface.

use std::path::Path;
use std::process::Command;

fn pwlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pwlab"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn oracle_reports_the_quantum_value_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let status = pwlab()
        .args(["oracle", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "oracle_report.json")).unwrap();
    let s = report["s_two_term"].as_f64().unwrap();
    assert!((s - 2.0 * std::f64::consts::SQRT_2).abs() <= 1e-12, "S = {s}");
}

#[test]
fn runs_are_byte_reproducible() {
    let config = r#"
[grid]
points = 64
length = 16.0

[schedule]
coupling_strength = 160.0
sigma0 = 1.0

[run]
dt = 0.0025
n_runs = 200
cells = 4
"#;
    let config_path = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(config_path.path(), config).unwrap();

    let mut dirs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let status = pwlab()
            .args(["lpw-chsh", "--seed", "7", "--config"])
            .arg(config_path.path())
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        dirs.push(dir);
    }
    for name in ["ledger.csv", "chsh_report.json"] {
        assert_eq!(
            read(dirs[0].path(), name),
            read(dirs[1].path(), name),
            "{name} differs between identical runs"
        );
    }
    // manifests agree on the checksums even though timestamps differ
    let manifests: Vec<serde_json::Value> = dirs
        .iter()
        .map(|d| serde_json::from_slice(&read(d.path(), "manifest.json")).unwrap())
        .collect();
    assert_eq!(manifests[0]["outputs"], manifests[1]["outputs"]);
    assert_ne!(manifests[0]["finished_at"], manifests[1]["finished_at"]);
}

#[test]
fn equivalence_experiment_reports_zero_deviation() {
    let config = r#"
[grid]
points = 64
length = 16.0

[schedule]
coupling_strength = 160.0
sigma0 = 1.0

[run]
dt = 0.0025
cells = 4
steps = 60
"#;
    let config_path = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(config_path.path(), config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let status = pwlab()
        .args(["lpw-equivalence", "--config"])
        .arg(config_path.path())
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "equivalence_report.json")).unwrap();
    assert_eq!(report["max_deviation_cells"].as_u64(), Some(0));
    assert_eq!(report["fast_faithful_identical"].as_bool(), Some(true));
    assert!(report["position_drift"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn invalid_configs_fail_with_named_violations() {
    let bad_key = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad_key.path(), "[relax]\nkapa = 1.0\n").unwrap();
    let out = pwlab()
        .args(["relax", "--config"])
        .arg(bad_key.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("kapa"), "{stderr}");

    let unstable = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(
        unstable.path(),
        "[relax]\nkappa = 2.0\ndt = 1.0\ncells = 8\n",
    )
    .unwrap();
    let out = pwlab()
        .args(["relax", "--config"])
        .arg(unstable.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("1/4"), "{stderr}");
}

#[test]
fn relax_experiment_fits_the_heat_kernel_rate() {
    let dir = tempfile::tempdir().unwrap();
    let status = pwlab()
        .args(["relax", "--plots", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "relax_report.json")).unwrap();
    let fitted = report["fitted_rate_z"].as_f64().unwrap();
    let target = report["heat_kernel_rate"].as_f64().unwrap();
    assert!((fitted - target).abs() / target < 0.01, "{fitted} vs {target}");
    assert!(dir.path().join("plots/gradient_decay.svg").exists());
    assert!(dir.path().join("gradients.csv").exists());
}

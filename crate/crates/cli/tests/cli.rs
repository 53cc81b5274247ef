//! End-to-end tests for the `sensmap` binary: exit codes, artifact
//! production, and run-to-run determinism.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_sensmap");

fn sensmap(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("failed to launch sensmap")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("write test file");
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Minimal two-variable additive-sine configuration with fixed GP
/// hyperparameters so no likelihood optimization runs.
fn base_config() -> String {
    r#"
[space]
bounds = [[-1.0, 1.0], [-1.0, 1.0]]

[data]
model = "additive-sine"
output_dims = 16
doe_size = 25
doe_seed = 7

[basis]
criterion = "fixed"
components = 3

[gp]
lengthscales = [2.0, 2.0]
signal_variance = 1.0
nugget = 1e-8

[run]
index_sets = [[1], [2]]
include_total = true
n_pf = 200
n_traj = 3
n_boot = 4
seed = 42
"#
    .to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(sensmap(&["--help"]).status.code(), Some(0));
    assert_eq!(sensmap(&["run", "--help"]).status.code(), Some(0));
    assert_eq!(sensmap(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_config_exits_one() {
    let out = sensmap(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("configuration error"), "stderr: {msg}");
}

#[test]
fn invalid_config_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.toml");

    // Unknown model name.
    write(&cfg, &base_config().replace("additive-sine", "no-such-model"));
    let out = sensmap(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Out-of-range variable in an index set.
    write(&cfg, &base_config().replace("[[1], [2]]", "[[1], [3]]"));
    let out = sensmap(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown key rejected by the schema.
    write(&cfg, &(base_config() + "\n[extra]\nfoo = 1\n"));
    let out = sensmap(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let design = dir.path().join("design.csv");
    let outputs = dir.path().join("outputs.csv");
    // Constant outputs: the basis fit has nothing to decompose.
    let mut design_csv = String::new();
    let mut outputs_csv = String::new();
    for i in 0..10 {
        let x = -1.0 + 0.2 * i as f64;
        design_csv.push_str(&format!("{x},{}\n", -x));
        outputs_csv.push_str("1.0,1.0,1.0,1.0\n");
    }
    write(&design, &design_csv);
    write(&outputs, &outputs_csv);

    let cfg = dir.path().join("config.toml");
    let text = format!(
        r#"
[space]
bounds = [[-1.0, 1.0], [-1.0, 1.0]]

[data]
design_csv = "{}"
outputs_csv = "{}"

[gp]
lengthscales = [2.0, 2.0]
signal_variance = 1.0
nugget = 1e-8

[run]
index_sets = [[1]]
n_pf = 100
n_traj = 2
n_boot = 2
"#,
        design.display(),
        outputs.display()
    );
    write(&cfg, &text);
    let out = sensmap(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("numerical failure"), "stderr: {msg}");
}

#[test]
fn run_produces_artifacts_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.toml");
    write(&cfg, &base_config());

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = sensmap(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        for name in [
            "maps_summary.csv",
            "gsi_summary.csv",
            "gsi_samples.csv",
            "attribution.csv",
            "manifest.json",
        ] {
            assert!(out_dir.join(name).exists(), "missing artifact {name}");
        }
    }

    let manifest = read(&out_a.join("manifest.json"));
    assert!(manifest.contains("\"seed\": 42"), "manifest: {manifest}");
    assert!(manifest.contains("\"command\": \"run\""));

    for name in ["maps_summary.csv", "gsi_summary.csv", "gsi_samples.csv"] {
        assert_eq!(
            read(&out_a.join(name)),
            read(&out_b.join(name)),
            "artifact {name} differs between identical runs"
        );
    }

    // The GSI sample table carries every (trajectory, replicate) cell for
    // both index sets, closed and total.
    let samples = read(&out_a.join("gsi_samples.csv"));
    let rows = samples.lines().count() - 1;
    assert_eq!(rows, 2 * 2 * 3 * 4);
}

#[test]
fn sampling_modes_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.toml");
    write(&cfg, &base_config());

    let out_batch = dir.path().join("batch");
    let out_traj = dir.path().join("traj");
    for (out_dir, mode) in [(&out_batch, "batch"), (&out_traj, "per-trajectory")] {
        let out = sensmap(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(
        read(&out_batch.join("gsi_samples.csv")),
        read(&out_traj.join("gsi_samples.csv")),
        "batch and per-trajectory sampling disagree"
    );
}

#[test]
fn sweep_produces_per_point_directories() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.toml");
    let text = base_config()
        + r#"
[sweep]
doe_sizes = [20, 25]
n_pf_values = [200]
"#;
    write(&cfg, &text);
    let out_dir = dir.path().join("sweep");
    let out = sensmap(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for sub in ["doe_20", "doe_25", "npf_200"] {
        assert!(
            out_dir.join(sub).join("gsi_summary.csv").exists(),
            "missing sweep point {sub}"
        );
    }
    let summary = read(&out_dir.join("sweep_summary.csv"));
    assert!(summary.lines().next().unwrap().starts_with("sweep,value,"));
    assert!(summary.contains("doe,20,"));
    assert!(summary.contains("n_pf,200,"));
}

#[test]
fn validate_reports_q2_quantiles() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.toml");
    let text = base_config()
        + r#"
[validate]
count = 5
n_traj = 10
"#;
    write(&cfg, &text);
    let out_dir = dir.path().join("val");
    let out = sensmap(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&out_dir.join("q2_summary.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "dim,p5,p50,p95");
    assert_eq!(lines.count(), 16);
}

#[test]
fn fit_persists_basis_and_hyperparameters() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.toml");
    write(&cfg, &base_config());
    let out_dir = dir.path().join("fit");
    let out = sensmap(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let params = read(&out_dir.join("gp_params.json"));
    assert!(params.contains("lengthscales"), "gp_params: {params}");
    assert!(out_dir.join("basis").exists());
}

#[test]
fn bench_reports_speedup() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.toml");
    write(&cfg, &base_config());
    let out_dir = dir.path().join("bench");
    let out = sensmap(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = read(&out_dir.join("bench.json"));
    assert!(report.contains("speedup"), "bench: {report}");
    assert!(report.contains("predicted"), "bench: {report}");
}

//! End-to-end checks of the `tioli` binary: exit codes, file outputs, and
//! byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
schema_version = 1

[mechanism]
alpha = 0.5
eta = 0.1

[population]
types = [
  { name = "positive", q = 1.0 },
  { name = "negative", q = 0.0 },
]
cells = [
  { mass = 0.3, type = "positive", v = 0.0 },
  { mass = 0.7, type = "negative", v = 0.0 },
]

[suites]
trials = 50
audit_runs_per_arm = 5000
"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, CONFIG).unwrap();
    path
}

fn tioli(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tioli"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary runs")
}

#[test]
fn run_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = tioli(
            &[
                "run",
                "--config",
                config.to_str().unwrap(),
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ],
            &[],
        );
        assert!(result.status.success(), "{result:?}");
    }
    for name in ["summary.json", "epochs.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn malformed_config_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, CONFIG.replace("alpha = 0.5", "alpha = 2.5")).unwrap();
    let result = tioli(&["run", "--config", path.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("alpha"), "stderr: {stderr}");
}

#[test]
fn unreadable_config_exits_2() {
    let result = tioli(&["run", "--config", "/nonexistent/config.toml"], &[]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn verify_passes_on_the_trivial_population() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let result = tioli(
        &[
            "verify",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(result.status.success(), "{result:?}");
    let stdout = String::from_utf8_lossy(&result.stdout);
    for suite in ["accuracy", "tails", "halting", "cost", "dp_audit"] {
        assert!(
            stdout
                .lines()
                .any(|l| l.starts_with("PASS") && l.contains(suite)),
            "no PASS line for {suite}: {stdout}"
        );
    }
}

#[test]
fn audit_and_benchmark_emit_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("reports");
    let audit = tioli(
        &[
            "audit",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "3",
            "--trials",
            "2000",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(audit.status.success(), "{audit:?}");
    let benchmark = tioli(
        &[
            "benchmark",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "3",
            "--trials",
            "20",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(benchmark.status.success(), "{benchmark:?}");
    for name in ["audit.json", "benchmark.json"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value.is_object() || value.is_array());
    }
}

#[test]
fn sweep_emits_one_summary_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.toml");
    std::fs::write(
        &path,
        format!(
            "{CONFIG}\n[sweep]\nalphas = [0.5]\netas = [0.1]\nvalues = [0.0, 1.0]\ntrials = 5\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("cells");
    let result = tioli(
        &[
            "sweep",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(result.status.success(), "{result:?}");
    assert!(out.join("summary_alpha0.5_eta0.1_v0.json").exists());
    assert!(out.join("summary_alpha0.5_eta0.1_v1.json").exists());
    assert!(out.join("sweep.json").exists());
}

#[test]
fn environment_variables_override_seed_and_out() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let env_out = dir.path().join("from-env");
    let by_env = tioli(
        &["run", "--config", config.to_str().unwrap()],
        &[
            ("TIOLI_SEED", "7"),
            ("TIOLI_OUT", env_out.to_str().unwrap()),
        ],
    );
    assert!(by_env.status.success(), "{by_env:?}");
    let flag_out = dir.path().join("from-flag");
    let by_flag = tioli(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            flag_out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(by_flag.status.success(), "{by_flag:?}");
    assert_eq!(
        std::fs::read(env_out.join("summary.json")).unwrap(),
        std::fs::read(flag_out.join("summary.json")).unwrap()
    );
}

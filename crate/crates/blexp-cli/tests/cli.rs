//! End-to-end tests of the `blexp` binary: exit codes, cache-staged
//! subcommands, environment override of the output root, and byte-exact
//! reproducibility of a full run.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_blexp");

/// Coarse configuration shared by the tests; small enough to run every
/// stage in seconds, structured like the production scale.
fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(
        &path,
        "nx = 24\nmarch_ny = 97\nouter_ny = 65\nprobe_draws = 10\nseed = 7\n",
    )
    .unwrap();
    path
}

fn blexp(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("BLEXP_OUT")
        .output()
        .expect("binary runs")
}

#[test]
fn staged_subcommands_share_caches_and_missing_caches_fail_cleanly() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("artifacts");
    let out = out.to_str().unwrap();

    // Downstream-first must fail with exit 1 and name the prerequisite.
    let early = blexp(&["expand", "--config", cfg, "--out", out]);
    assert_eq!(early.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&early.stderr).to_string();
    assert!(msg.contains("prandtl"), "stderr was: {msg}");

    for sub in ["prandtl", "expand", "remainder-sweep", "ns-verify", "probes"] {
        let run = blexp(&[sub, "--config", cfg, "--out", out]);
        assert_eq!(
            run.status.code(),
            Some(0),
            "{sub} failed: {}",
            String::from_utf8_lossy(&run.stderr)
        );
    }

    // Second march run reports a cache hit.
    let again = blexp(&["prandtl", "--config", cfg, "--out", out]);
    let text = String::from_utf8_lossy(&again.stdout).to_string();
    assert!(text.contains("(hit)"), "stdout was: {text}");

    for rel in [
        "reports/march_report.txt",
        "reports/facts.csv",
        "reports/remainder_sweep.csv",
        "reports/contraction_report.txt",
        "reports/hardy_corpus.csv",
        "reports/lemma_probes.txt",
    ] {
        assert!(Path::new(out).join(rel).exists(), "missing {rel}");
    }
}

#[test]
fn full_run_passes_and_reproduces_byte_identical_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("artifacts");
    let out = out.to_str().unwrap();

    let first = blexp(&["--config", cfg, "--out", out]);
    assert_eq!(
        first.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert!(String::from_utf8_lossy(&first.stdout).contains("PASS remainder_order"));

    let files = [
        "verdict.txt",
        "resolved_config.txt",
        "reports/remainder_sweep.csv",
        "reports/linear_response.csv",
        "reports/facts.csv",
    ];
    let snapshot: Vec<Vec<u8>> = files
        .iter()
        .map(|f| fs::read(Path::new(out).join(f)).unwrap())
        .collect();

    let second = blexp(&["--config", cfg, "--out", out]);
    assert_eq!(second.status.code(), Some(0));
    for (f, old) in files.iter().zip(&snapshot) {
        let new = fs::read(Path::new(out).join(f)).unwrap();
        assert_eq!(&new, old, "artifact {f} changed between identical runs");
    }
}

#[test]
fn environment_variable_overrides_the_output_root() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let ignored = dir.path().join("ignored");
    let env_root = dir.path().join("env-root");

    let run = Command::new(BIN)
        .args([
            "prandtl",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            ignored.to_str().unwrap(),
        ])
        .env("BLEXP_OUT", &env_root)
        .output()
        .expect("binary runs");
    assert_eq!(
        run.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(env_root.join("reports/march_report.txt").exists());
    assert!(!ignored.exists());
}

#[test]
fn degenerate_viscosity_list_is_a_numerical_failure_with_artifacts_kept() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("artifacts");

    let run = blexp(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--eps",
        "1e-3",
    ]);
    assert_eq!(
        run.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    // Stages before the sweep completed and their artifacts survive.
    assert!(out.join("reports/facts.csv").exists());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("stage remainder_sweep = error:"));
    assert!(manifest.contains("stage ns_verify = skipped"));
}

#[test]
fn bad_flags_and_configs_are_execution_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("artifacts");
    let run = blexp(&[
        "prandtl",
        "--flow",
        "vortex",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("flow_kind"));

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "march_ny = not-a-number\n").unwrap();
    let run = blexp(&[
        "prandtl",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(1));
}

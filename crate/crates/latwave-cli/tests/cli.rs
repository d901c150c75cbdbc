use std::fs;
use std::path::Path;
use std::process::Command;

use latwave_cli::pipeline::{RunManifest, StageStatus};
use latwave_cli::report::emit_report;

const LAMBDA_OMEGA: &str = r#"
[system]
name = "lambda_omega"
[wave]
k = "1/6"
k_modes = 8
[simulation]
packet = false
"#;

fn latwave(args: &[&str], dir: &Path, config: &str) -> (i32, String) {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_latwave"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

#[test]
fn full_rd_validation_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = latwave(&["validate"], tmp.path(), LAMBDA_OMEGA);
    assert_eq!(code, 0, "{text}");
    let m = RunManifest::read(&tmp.path().join("out")).unwrap();
    for f in ["profile.json", "branches.csv", "whitham.json", "validation.json", "report.txt", "report.json"] {
        assert!(m.files.iter().any(|x| x == f), "{f} missing from {:?}", m.files);
    }
    for f in &m.files {
        assert!(tmp.path().join("out").join(f).exists(), "{f}");
    }
    let spectrum = m.stages.iter().find(|s| s.name == "spectrum").unwrap();
    assert!(spectrum.auto_enabled && spectrum.message.as_deref().unwrap().contains("auto-enabled"));
    assert!(text.contains("abs error"));
}

#[test]
fn report_is_idempotent_and_marks_missing_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = latwave(&["profile"], tmp.path(), LAMBDA_OMEGA);
    assert_eq!(code, 0);
    let out = tmp.path().join("out");
    let (t1, j1) = emit_report(&out).unwrap();
    let manifest = fs::read(out.join("manifest.json")).unwrap();
    let (t2, j2) = emit_report(&out).unwrap();
    assert_eq!((t1.as_str(), j1.as_str()), (t2.as_str(), j2.as_str()));
    assert_eq!(manifest, fs::read(out.join("manifest.json")).unwrap());
    assert!(t1.contains("validate   missing (not requested)"));
}

#[test]
fn report_without_manifest_fails() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(emit_report(tmp.path()).is_err());
    let out = Command::new(env!("CARGO_BIN_EXE_latwave")).arg("report").arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn profile_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[system]\nname = \"quartic_chain\"\n[wave]\nk = \"1/5\"\namplitude = 0.3\nbase_mean = [0.3]\n[solver]\nmax_iter = 1\n";
    let (code, text) = latwave(&["whitham"], tmp.path(), cfg);
    assert_eq!(code, 2, "{text}");
    let m = RunManifest::read(&tmp.path().join("out")).unwrap();
    assert_eq!(m.stages[0].status, StageStatus::Failed);
    assert_eq!(m.stages[1].status, StageStatus::Skipped);
    assert!(text.contains("profile    failed"));
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = latwave(&["profile"], tmp.path(), "[system]\nname = \"lambda_omega\"\n[wave]\nk = \"0/6\"\n");
    assert_eq!(code, 1);
    assert!(text.contains("wave.k"));
    let (code, _) = latwave(&["continue"], tmp.path(), LAMBDA_OMEGA);
    assert_eq!(code, 1);
}

#[test]
fn seeded_runs_are_reproducible() {
    let cfg = format!("{LAMBDA_OMEGA}balance_periods = 1\nsamples_per_period = 50\n");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(latwave(&["simulate", "--seed", "7"], a.path(), &cfg).0, 0);
    assert_eq!(latwave(&["simulate", "--seed", "7"], b.path(), &cfg).0, 0);
    for f in ["profile.json", "simulation.json", "trajectory.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join("out").join(f)).unwrap(), fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    latwave(&["simulate", "--seed", "8"], c.path(), &cfg);
    assert_ne!(fs::read(a.path().join("out/trajectory.csv")).unwrap(), fs::read(c.path().join("out/trajectory.csv")).unwrap());
}

#[test]
fn continuation_writes_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{LAMBDA_OMEGA}[continuation]\nparameter = \"k\"\nvalues = [0.175, 0.2]\n");
    let (code, text) = latwave(&["continue"], tmp.path(), &cfg);
    assert_eq!(code, 0, "{text}");
    let csv = fs::read_to_string(tmp.path().join("out/continuation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("k,omega,k"));
}

//! Human-readable and JSON summaries of a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use latwave::validate::ValidationReport;
use serde::Serialize;
use thiserror::Error;

use crate::pipeline::{RunManifest, SimulationSummary, Stage, StageStatus};

pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing artifact {0}")]
    MissingArtifacts(PathBuf),
    #[error("malformed artifact {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Serialize)]
struct StageLine {
    stage: &'static str,
    status: String,
    passed: Option<bool>,
}

#[derive(Debug, Serialize)]
struct ReportDocument {
    config_hash: String,
    artifact_version: String,
    seed: u64,
    stages: Vec<StageLine>,
    profile: Option<serde_json::Value>,
    whitham: Option<serde_json::Value>,
    spectrum: Option<serde_json::Value>,
    validation: Option<ValidationReport>,
    simulation: Option<SimulationSummary>,
    passed: bool,
}

fn read_json<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T, ReportError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|_| ReportError::MissingArtifacts(path.clone()))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Malformed { path, message: e.to_string() })
}

/// Artifact of a completed stage; a completed stage whose file is gone is an error.
fn artifact<T: serde::de::DeserializeOwned>(dir: &Path, m: &RunManifest, s: Stage, name: &str) -> Result<Option<T>, ReportError> {
    match m.stage(s) {
        Some(r) if r.status == StageStatus::Completed => read_json(dir, name).map(Some),
        _ => Ok(None),
    }
}

/// Writes `report.txt` and `report.json` into `dir` and returns their contents; repeated calls give identical bytes.
pub fn emit_report(dir: &Path) -> Result<(String, String), ReportError> {
    let manifest: RunManifest = read_json(dir, crate::pipeline::MANIFEST)?;
    let profile: Option<serde_json::Value> = artifact(dir, &manifest, Stage::Profile, "profile.json")?;
    let whitham: Option<serde_json::Value> = artifact(dir, &manifest, Stage::Whitham, "whitham.json")?;
    let spectrum: Option<serde_json::Value> = artifact(dir, &manifest, Stage::Spectrum, "spectrum.json")?;
    let validation: Option<ValidationReport> = artifact(dir, &manifest, Stage::Validate, "validation.json")?;
    let simulation: Option<SimulationSummary> = artifact(dir, &manifest, Stage::Simulate, "simulation.json")?;

    let stages: Vec<StageLine> = Stage::ALL
        .iter()
        .map(|&s| {
            let (status, passed) = match manifest.stage(s) {
                None => ("missing (not requested)".to_string(), None),
                Some(r) => {
                    let base = match r.status {
                        StageStatus::Completed => "completed".to_string(),
                        StageStatus::Failed => format!("failed: {}", r.message.clone().unwrap_or_default()),
                        StageStatus::Skipped => "missing (skipped)".to_string(),
                    };
                    (base, r.passed)
                }
            };
            StageLine { stage: s.name(), status, passed }
        })
        .collect();

    let mut t = String::new();
    let _ = writeln!(t, "run {}  (latwave {}, seed {})", &manifest.config_hash[..16], manifest.artifact_version, manifest.seed);
    let _ = writeln!(t, "\nstages");
    for l in &stages {
        let verdict = match l.passed {
            Some(true) => "  PASS",
            Some(false) => "  FAIL",
            None => "",
        };
        let _ = writeln!(t, "  {:<10} {}{}", l.stage, l.status, verdict);
    }
    if let Some(p) = &profile {
        let _ = writeln!(t, "\nwave");
        for key in ["class", "k", "omega", "speed", "residual"] {
            if let Some(v) = p.get(key) {
                let _ = writeln!(t, "  {key:<9} {v}");
            }
        }
    }
    if let Some(rd) = whitham.as_ref().and_then(|w| w.get("rd")).filter(|v| !v.is_null()) {
        let g = rd["group_velocity"].as_f64().unwrap_or(f64::NAN);
        let d = rd["diffusion"].as_f64().unwrap_or(f64::NAN);
        let _ = writeln!(t, "\nmodulation coefficients\n  dk omega  {g:.10e}\n  diffusion {d:.10e}");
        if let Some(fit) = validation.as_ref().and_then(|v| v.rd_fit.as_ref()) {
            let _ = writeln!(t, "\n  {:<10} {:>18} {:>18} {:>11}", "quantity", "fit", "theory", "abs error");
            let _ = writeln!(t, "  {:<10} {:>18.10e} {:>18.10e} {:>11.2e}", "a", fit.a_fit, fit.group_velocity, (fit.a_fit - fit.group_velocity).abs());
            let _ = writeln!(t, "  {:<10} {:>18.10e} {:>18.10e} {:>11.2e}", "d", fit.b_fit, fit.diffusion, (fit.b_fit - fit.diffusion).abs());
        }
    }
    if let Some(jacs) = whitham.as_ref().and_then(|w| w.get("jacobians")).and_then(|j| j.as_array()).filter(|j| !j.is_empty()) {
        let _ = writeln!(t, "\ncharacteristic speeds");
        for j in jacs {
            let sign = j.get("sign").and_then(|s| s.as_str()).map_or(String::new(), |s| format!(" ({s})"));
            let speeds: Vec<String> = j["speeds"]
                .as_array()
                .map(|a| a.iter().map(|z| format!("{:.8e}{:+.2e}i", z[0].as_f64().unwrap_or(f64::NAN), z[1].as_f64().unwrap_or(f64::NAN))).collect())
                .unwrap_or_default();
            let _ = writeln!(t, "  {}{}: {}", j["verdict"].as_str().unwrap_or("?"), sign, speeds.join(", "));
        }
    }
    if let Some(v) = &validation {
        let _ = writeln!(t, "\nvalidation\n{}", v.table());
    }
    if let Some(s) = &simulation {
        let _ = writeln!(t, "\nsimulation\n{}", s.report.table());
    }
    let passed = manifest.exit_code() == 0;
    let _ = writeln!(t, "overall: {}", if passed { "PASS" } else { "FAIL" });

    let doc = ReportDocument {
        config_hash: manifest.config_hash.clone(),
        artifact_version: manifest.artifact_version.clone(),
        seed: manifest.seed,
        stages,
        profile,
        whitham,
        spectrum,
        validation,
        simulation,
        passed,
    };
    let j = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    for (name, body) in [(REPORT_TXT, &t), (REPORT_JSON, &j)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| ReportError::Io { path, source })?;
    }
    let mut m = manifest;
    let before = m.files.len();
    for name in [REPORT_TXT, REPORT_JSON] {
        if !m.files.iter().any(|f| f == name) {
            m.files.push(name.into());
        }
    }
    if m.files.len() != before {
        m.write(dir).map_err(|source| ReportError::Io { path: dir.join(crate::pipeline::MANIFEST), source })?;
    }
    Ok((t, j))
}

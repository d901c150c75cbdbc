//! Stage orchestration, artifact persistence and the run manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use latwave::bloch::{branches_csv, track_branches, BranchSet};
use latwave::profile::{continue_family, wave_derivatives, ContinuationOptions, NewtonOptions, WaveDerivatives};
use latwave::ringsim::{energy_audit, integrate_ring, wave_packet_velocity, wave_recurrence, wave_state, EnergyAudit, PacketMeasurement, PacketOptions};
use latwave::validate::{
    duality_audit, jordan_structure, run_rd_validation, validate_system, velocity_grid, Check, SystemOptions, ValidationReport,
};
use latwave::whitham::{bordered_derivatives, continuation_derivatives, rd_whitham, whitham_jacobian, ParameterDerivatives, RdWhitham, WhithamJacobian};
use latwave::{SystemClass, SystemSpec, WaveProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

/// Step of the continuation route for the modulation derivatives.
const CONTINUATION_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Profile,
    Continue,
    Whitham,
    Spectrum,
    Validate,
    Simulate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Profile, Stage::Continue, Stage::Whitham, Stage::Spectrum, Stage::Validate, Stage::Simulate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Profile => "profile",
            Stage::Continue => "continue",
            Stage::Whitham => "whitham",
            Stage::Spectrum => "spectrum",
            Stage::Validate => "validate",
            Stage::Simulate => "simulate",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|x| x.name() == s)
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Profile => &[],
            Stage::Continue | Stage::Whitham => &[Stage::Profile],
            // The reaction-diffusion fit compares against the Whitham coefficients.
            Stage::Spectrum => &[Stage::Whitham],
            Stage::Validate => &[Stage::Spectrum, Stage::Whitham],
            Stage::Simulate => &[Stage::Whitham],
        }
    }
}

/// Requested stages plus their dependencies, in execution order; the second set holds the auto-enabled ones.
pub fn stage_closure(requested: &[Stage]) -> (Vec<Stage>, BTreeSet<Stage>) {
    let mut all: BTreeSet<Stage> = requested.iter().copied().collect();
    let mut stack: Vec<Stage> = requested.to_vec();
    while let Some(s) = stack.pop() {
        for &r in s.requires() {
            if all.insert(r) {
                stack.push(r);
            }
        }
    }
    let auto = all.iter().copied().filter(|s| !requested.contains(s)).collect();
    (all.into_iter().collect(), auto)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub auto_enabled: bool,
    /// Outcome of the stage's checks, when it has any.
    pub passed: Option<bool>,
    pub message: Option<String>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub seed: u64,
    pub config: serde_json::Value,
    pub stages: Vec<StageRecord>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn stage(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.name == s.name())
    }

    pub fn exit_code(&self) -> i32 {
        if self.stages.iter().any(|s| s.status == StageStatus::Failed) {
            2
        } else if self.stages.iter().any(|s| s.passed == Some(false)) {
            3
        } else {
            0
        }
    }

    pub fn read(dir: &Path) -> std::io::Result<RunManifest> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Writes through a temporary file so that readers never see a partial manifest.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let tmp = dir.join(".manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")?;
        fs::rename(tmp, dir.join(MANIFEST))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("the continue stage needs a [continuation] table")]
    MissingContinuation,
}

#[derive(Debug, Error)]
#[error("{0}")]
struct StageFailure(String);

impl StageFailure {
    fn from<E: std::fmt::Display>(e: E) -> Self {
        StageFailure(e.to_string())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PacketSummary {
    pub velocity: f64,
    pub group_velocity: f64,
    /// `|k ∂_kω|`.
    pub scaled_prediction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub recurrence_sites: usize,
    pub recurrence_drift: Option<f64>,
    pub balance_sites: usize,
    pub energy: Option<EnergyAudit>,
    /// `max_t |Σ_j U_j,c(t) − Σ_j U_j,c(0)|` per conserved component.
    pub conserved_drift: Option<Vec<f64>>,
    pub packet: Option<PacketSummary>,
    pub report: ValidationReport,
}

#[derive(Serialize)]
struct WhithamDocument<'a> {
    class: SystemClass,
    omega: f64,
    rd: Option<&'a RdWhitham>,
    derivatives: Option<&'a ParameterDerivatives>,
    /// Relative discrepancy between the bordered and continuation routes.
    route_discrepancy: Option<f64>,
    jacobians: &'a [WhithamJacobian],
}

#[derive(Serialize)]
struct SpectrumDocument {
    radius: f64,
    expected: usize,
    branches: usize,
    halvings: usize,
    liouville_max: f64,
    conjugation_defect: f64,
    omega: f64,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, name: &str, body: &str) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|source| PipelineError::Io { path, source })?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    sys: SystemSpec,
    wave: Option<WaveProfile>,
    wd: Option<WaveDerivatives>,
    rd: Option<RdWhitham>,
    jacs: Vec<WhithamJacobian>,
    set: Option<BranchSet>,
    rd_report: Option<ValidationReport>,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifact serializes") + "\n"
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs `requested` (closed under dependencies) into `out`; halts at the first failing stage.
pub fn run_pipeline(cfg: &RunConfig, requested: &[Stage], out: &Path) -> Result<RunManifest, PipelineError> {
    let (stages, auto) = stage_closure(requested);
    if stages.contains(&Stage::Continue) && cfg.continuation.is_none() {
        return Err(PipelineError::MissingContinuation);
    }
    fs::create_dir_all(out).map_err(|source| PipelineError::Io { path: out.to_owned(), source })?;
    let mut manifest = RunManifest {
        config_hash: config_hash(cfg),
        artifact_version: ARTIFACT_VERSION.into(),
        started_unix: now(),
        finished_unix: 0,
        seed: cfg.seed,
        config: serde_json::from_str(&cfg.canonical_json()).expect("round trip"),
        stages: Vec::new(),
        files: Vec::new(),
    };
    let mut w = Writer { dir: out.to_owned(), files: Vec::new() };
    w.put("config.json", &(cfg.canonical_json() + "\n"))?;
    let mut cx = Context { cfg, sys: cfg.system.system(), wave: None, wd: None, rd: None, jacs: Vec::new(), set: None, rd_report: None };
    let mut halted = false;
    for s in stages {
        let mut rec = StageRecord { name: s.name().into(), status: StageStatus::Skipped, auto_enabled: auto.contains(&s), passed: None, message: None, files: Vec::new() };
        if halted {
            rec.message = Some("not run after an earlier failure".into());
            manifest.stages.push(rec);
            continue;
        }
        let before = w.files.len();
        match run_stage(s, &mut cx, &mut w) {
            Ok(passed) => {
                rec.status = StageStatus::Completed;
                rec.passed = passed;
            }
            Err(StageError::Io(e)) => return Err(e),
            Err(StageError::Failed(e)) => {
                rec.status = StageStatus::Failed;
                rec.message = Some(e.0);
                halted = true;
            }
        }
        if rec.auto_enabled {
            let note = "auto-enabled as a dependency".to_string();
            rec.message = Some(rec.message.map_or(note.clone(), |m| format!("{note}; {m}")));
        }
        rec.files = w.files[before..].to_vec();
        manifest.stages.push(rec);
    }
    manifest.files = w.files;
    manifest.finished_unix = now();
    manifest.write(out).map_err(|source| PipelineError::Io { path: out.join(MANIFEST), source })?;
    Ok(manifest)
}

enum StageError {
    Io(PipelineError),
    Failed(StageFailure),
}

impl From<PipelineError> for StageError {
    fn from(e: PipelineError) -> Self {
        StageError::Io(e)
    }
}

impl From<StageFailure> for StageError {
    fn from(e: StageFailure) -> Self {
        StageError::Failed(e)
    }
}

fn run_stage(s: Stage, cx: &mut Context, w: &mut Writer) -> Result<Option<bool>, StageError> {
    let cfg = cx.cfg;
    let newton = NewtonOptions { tol: cfg.solver.newton_tol, max_iter: cfg.solver.max_iter, ..NewtonOptions::default() };
    match s {
        Stage::Profile => {
            let u = cfg.system.wave(&cfg.wave, &newton).map_err(StageFailure::from)?;
            let wd = wave_derivatives(&cx.sys, &u).map_err(StageFailure::from)?;
            w.put("profile.json", &(u.to_json(Some(&cx.sys)) + "\n"))?;
            cx.wave = Some(u);
            cx.wd = Some(wd);
            Ok(None)
        }
        Stage::Continue => {
            let c = cfg.continuation.as_ref().ok_or(PipelineError::MissingContinuation)?;
            let opts = ContinuationOptions { newton, ..ContinuationOptions::default() };
            let curve = continue_family(&cx.sys, cx.wave.as_ref().expect("profile ran"), c.parameter, &c.values, &opts).map_err(StageFailure::from)?;
            let mut csv = format!("{},omega,k", c.parameter.label());
            let nf = curve.samples[0].fluxes.f.len();
            for i in 0..nf {
                csv.push_str(&format!(",F{i}"));
            }
            if curve.samples[0].fluxes.s.is_some() {
                csv.push_str(",S");
            }
            csv.push('\n');
            for p in &curve.samples {
                csv.push_str(&format!("{:?},{:?},{:?}", p.parameter, p.omega, p.wave.k_value()));
                for f in p.fluxes.f.iter().chain(p.fluxes.s.iter()) {
                    csv.push_str(&format!(",{f:?}"));
                }
                csv.push('\n');
            }
            w.put("continuation.csv", &csv)?;
            if !curve.complete {
                return Err(StageFailure(format!("continuation stopped at {} = {:?}", c.parameter.label(), curve.last().parameter)).into());
            }
            Ok(None)
        }
        Stage::Whitham => {
            let (u, wd) = (cx.wave.as_ref().expect("profile ran"), cx.wd.as_ref().expect("profile ran"));
            let (derivs, discrepancy) = if cx.sys.class() == SystemClass::ReactionDiffusion {
                cx.rd = Some(rd_whitham(&cx.sys, u, wd).map_err(StageFailure::from)?);
                (None, None)
            } else {
                let b = bordered_derivatives(&cx.sys, u, wd);
                let c = continuation_derivatives(&cx.sys, u, CONTINUATION_STEP, &newton).map_err(StageFailure::from)?;
                cx.jacs = whitham_jacobian(&cx.sys, &b).map_err(StageFailure::from)?;
                let d = b.discrepancy(&c);
                (Some(b), Some(d))
            };
            let doc = WhithamDocument {
                class: cx.sys.class(),
                omega: u.omega,
                rd: cx.rd.as_ref(),
                derivatives: derivs.as_ref(),
                route_discrepancy: discrepancy,
                jacobians: &cx.jacs,
            };
            w.put("whitham.json", &json(&doc))?;
            Ok(None)
        }
        Stage::Spectrum => {
            let (u, wd) = (cx.wave.as_ref().expect("profile ran"), cx.wd.as_ref().expect("profile ran"));
            let set = if let Some(rd) = &cx.rd {
                let sp = &cfg.spectrum;
                let xi_max = sp.xi_max_over_pi * std::f64::consts::PI;
                let (set, rep) =
                    run_rd_validation(&cx.sys, u, wd, rd, xi_max, sp.radius, sp.retries, cfg.solver.ode_tol).map_err(StageFailure::from)?;
                cx.rd_report = Some(rep);
                set
            } else {
                let grid = velocity_grid(cfg.spectrum.ladder_h0, cfg.spectrum.ladder_levels);
                track_branches(&cx.sys, u, &grid, None, cfg.solver.ode_tol).map_err(StageFailure::from)?
            };
            w.put("branches.csv", &branches_csv(&set))?;
            let doc = SpectrumDocument {
                radius: set.radius,
                expected: set.expected,
                branches: set.branches.len(),
                halvings: set.halvings,
                liouville_max: set.liouville_max,
                conjugation_defect: set.conjugation_defect(),
                omega: set.omega,
            };
            w.put("spectrum.json", &json(&doc))?;
            cx.set = Some(set);
            Ok(None)
        }
        Stage::Validate => {
            let (u, wd) = (cx.wave.as_ref().expect("profile ran"), cx.wd.as_ref().expect("profile ran"));
            let v = &cfg.validation;
            let mut rep = match cx.rd_report.take() {
                Some(r) => r,
                None => {
                    let opts = SystemOptions { speed_tol: v.speed_tol, riesz_tol: v.riesz_tol, riesz_xi: None, ode_tol: cfg.solver.ode_tol };
                    validate_system(&cx.sys, u, wd, cx.set.as_ref().expect("spectrum ran"), &cx.jacs, &opts).map_err(StageFailure::from)?
                }
            };
            if v.jordan {
                let j = jordan_structure(&cx.sys, u, wd, cfg.solver.ode_tol).map_err(StageFailure::from)?;
                rep.checks.extend(j.checks(cx.sys.class()));
                rep.jordan = Some(j);
            }
            if v.audit {
                let a = duality_audit(&cx.sys, u, wd, cfg.solver.ode_tol).map_err(StageFailure::from)?;
                rep.checks.extend(a.checks());
                rep.audit = Some(a);
            }
            w.put("validation.json", &(rep.to_json() + "\n"))?;
            w.put("validation.txt", &rep.table())?;
            Ok(Some(rep.passed()))
        }
        Stage::Simulate => {
            let summary = simulate(cx, w)?;
            let passed = summary.report.passed();
            w.put("simulation.json", &json(&summary))?;
            Ok(Some(passed))
        }
    }
}

fn simulate(cx: &Context, w: &mut Writer) -> Result<SimulationSummary, StageError> {
    let cfg = cx.cfg;
    let sim = &cfg.simulation;
    let u = cx.wave.as_ref().expect("profile ran");
    let tol = cfg.solver.ring_tol;
    let n = u.k.as_rational().map(|(_, n)| n as usize).ok_or_else(|| StageFailure("ring runs need a rational wavenumber".into()))?;
    let mut rep = ValidationReport::new(cx.sys.class());

    let drift = wave_recurrence(&cx.sys, u, sim.recurrence_ring, sim.recurrence_periods, tol).map_err(StageFailure::from)?;
    rep.checks.push(Check::bound("wave recurrence drift", drift, 1e-8 * sim.recurrence_periods as f64));

    // Balance run on the recurrence ring from a seeded perturbation of the wave.
    let sites = n * sim.recurrence_ring;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u0 = wave_state(u, sites, 0.0);
    for x in u0.as_mut_slice() {
        *x += sim.perturbation * rng.gen_range(-1.0..=1.0);
    }
    let t_end = sim.balance_periods as f64 / u.omega.abs();
    let count = sim.balance_periods * sim.samples_per_period;
    let times: Vec<f64> = (0..=count).map(|i| t_end * i as f64 / count as f64).collect();
    let tr = integrate_ring(&cx.sys, &u0, t_end, &times, tol).map_err(StageFailure::from)?;
    w.put("trajectory.csv", &tr.to_csv(sim.decimation))?;

    let mut energy = None;
    let mut conserved = None;
    match cx.sys.class() {
        SystemClass::Hamiltonian => {
            let a = energy_audit(&cx.sys, &tr).map_err(StageFailure::from)?;
            rep.checks.push(Check::bound("ring energy drift", a.total_drift, 1e-8));
            rep.checks.push(Check::bound("local energy balance residual", a.local_residual, 1e-6));
            energy = Some(a);
        }
        SystemClass::Mixed => {
            let nc = cx.sys.conserved_count();
            let d: Vec<f64> = (0..nc)
                .map(|c| tr.component_sums.iter().fold(0.0f64, |m, s| m.max((s[c] - tr.component_sums[0][c]).abs())))
                .collect();
            for (c, x) in d.iter().enumerate() {
                let scale = tr.component_sums[0][c].abs().max(1.0);
                rep.checks.push(Check::bound(&format!("conserved sum drift (component {c})"), x / scale, 1e-9));
            }
            conserved = Some(d);
        }
        SystemClass::ReactionDiffusion => {}
    }

    let mut packet = None;
    if sim.packet && cx.sys.class() == SystemClass::ReactionDiffusion {
        let opts = PacketOptions {
            sigma: sim.packet_sigma,
            amplitude: sim.packet_amplitude,
            periods: sim.packet_ring,
            n_periods: sim.packet_periods,
            tol: 1e-9,
            ..PacketOptions::default()
        };
        let m: PacketMeasurement = wave_packet_velocity(&cx.sys, u, &opts).map_err(StageFailure::from)?;
        w.put("packet.csv", &m.centroid_csv())?;
        let g = cx.rd.as_ref().expect("whitham ran").group_velocity;
        let scaled = (u.k_value() * g).abs();
        rep.checks.push(
            Check::relative("packet speed vs |k dk omega|", m.velocity.abs(), scaled, 0.1)
                .with_detail(format!("signed velocity {:.6e}; |dk omega| = {:.6e}", m.velocity, g.abs())),
        );
        packet = Some(PacketSummary { velocity: m.velocity, group_velocity: g, scaled_prediction: scaled });
    }
    Ok(SimulationSummary {
        recurrence_sites: sites,
        recurrence_drift: Some(drift),
        balance_sites: sites,
        energy,
        conserved_drift: conserved,
        packet,
        report: rep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_adds_dependencies_in_order() {
        let (s, auto) = stage_closure(&[Stage::Validate]);
        assert_eq!(s, [Stage::Profile, Stage::Whitham, Stage::Spectrum, Stage::Validate]);
        assert_eq!(auto.into_iter().collect::<Vec<_>>(), [Stage::Profile, Stage::Whitham, Stage::Spectrum]);
        assert_eq!(stage_closure(&[Stage::Profile]).0, [Stage::Profile]);
    }

    #[test]
    fn stage_names_round_trip() {
        assert!(Stage::ALL.iter().all(|&s| Stage::parse(s.name()) == Some(s)));
        assert_eq!(Stage::parse("report"), None);
    }
}

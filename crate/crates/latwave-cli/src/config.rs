//! Run configuration: a TOML file with every default filled in after parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use latwave::presets::{Preset, WaveRequest};
use latwave::profile::ContinuationParameter;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYSTEMS: [&str; 3] = ["lambda_omega", "roll_waves", "quartic_chain"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Schema(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Schema(v) => v,
            ConfigError::Io { .. } => &[],
        }
    }
}

// Raw file layout; every field optional so that all violations can be reported at once.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    wave: Option<RawWave>,
    solver: Option<SolverConfig>,
    spectrum: Option<SpectrumConfig>,
    continuation: Option<RawContinuation>,
    validation: Option<ValidationConfig>,
    simulation: Option<SimulationConfig>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
}

// Parameter names are checked per system after parsing.
#[derive(Debug, Deserialize)]
struct RawSystem {
    name: Option<String>,
    #[serde(flatten)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWave {
    k: Option<String>,
    k_modes: Option<usize>,
    amplitude: Option<f64>,
    means: Option<Vec<f64>>,
    energy: Option<f64>,
    base_mean: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContinuation {
    parameter: String,
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Relative and absolute tolerance of the monodromy integrations.
    pub ode_tol: f64,
    /// Tolerance of the nonlinear ring integrations.
    pub ring_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { newton_tol: 1e-10, max_iter: 25, ode_tol: latwave::bloch::DEFAULT_TOL, ring_tol: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// Largest Floquet exponent of the reaction-diffusion fit, in units of π.
    pub xi_max_over_pi: f64,
    /// Ball around 1 holding the critical branch (reaction-diffusion).
    pub radius: f64,
    pub retries: usize,
    /// Smallest exponent and number of doublings of the velocity ladder.
    pub ladder_h0: f64,
    pub ladder_levels: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        let (h0, levels) = latwave::validate::VELOCITY_LADDER;
        SpectrumConfig { xi_max_over_pi: 0.02, radius: 0.9, retries: 3, ladder_h0: h0, ladder_levels: levels }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub speed_tol: f64,
    pub riesz_tol: f64,
    pub jordan: bool,
    pub audit: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { speed_tol: 1e-4, riesz_tol: 1e-3, jordan: true, audit: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Ring size for the recurrence run, in spatial periods.
    pub recurrence_ring: usize,
    pub recurrence_periods: usize,
    /// Temporal periods of the energy and conservation runs.
    pub balance_periods: usize,
    pub samples_per_period: usize,
    /// Size of the seeded random perturbation of the balance runs.
    pub perturbation: f64,
    pub packet: bool,
    pub packet_sigma: f64,
    pub packet_amplitude: f64,
    pub packet_ring: usize,
    pub packet_periods: f64,
    /// Every n-th sample goes to trajectory.csv.
    pub decimation: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            recurrence_ring: 10,
            recurrence_periods: 1,
            balance_periods: 10,
            samples_per_period: 1000,
            perturbation: 1e-4,
            packet: true,
            packet_sigma: 40.0,
            packet_amplitude: 1e-3,
            packet_ring: 200,
            packet_periods: 8.0,
            decimation: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuationConfig {
    pub parameter: ContinuationParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: Preset,
    pub wave: WaveRequest,
    pub solver: SolverConfig,
    pub spectrum: SpectrumConfig,
    pub continuation: Option<ContinuationConfig>,
    pub validation: ValidationConfig,
    pub simulation: SimulationConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// Canonical serialization with all defaults, hashed into the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let path = e.span().map_or_else(|| "<document>".to_string(), |s| format!("line {}", text[..s.start].lines().count().max(1)));
        ConfigError::Schema(vec![Violation { path, message: e.message().to_string() }])
    })?;
    let mut bad = Vec::new();
    let mut err = |path: &str, message: String| bad.push(Violation { path: path.into(), message });

    let system = match &raw.system {
        None => {
            err("system", "missing table".into());
            None
        }
        Some(s) => system_of(s, &mut err),
    };

    let wave = raw.wave.unwrap_or(RawWave { k: None, k_modes: None, amplitude: None, means: None, energy: None, base_mean: None });
    let k = match wave.k.as_deref() {
        None => {
            err("wave.k", "missing; expected \"p/N\"".into());
            None
        }
        Some(s) => match parse_fraction(s) {
            Ok((0, _)) => {
                err("wave.k", "wavenumber must be nonzero".into());
                None
            }
            Ok((_, n)) if n < 2 => {
                err("wave.k", format!("denominator must be at least 2, got {n}"));
                None
            }
            Ok(f) => Some(f),
            Err(m) => {
                err("wave.k", m);
                None
            }
        },
    };
    let k_modes = wave.k_modes.unwrap_or(32);
    if k_modes == 0 {
        err("wave.k_modes", "must be positive".into());
    }
    let amplitude = wave.amplitude.unwrap_or(0.2);
    if !(amplitude > 0.0) {
        err("wave.amplitude", format!("must be positive, got {amplitude}"));
    }

    let solver = raw.solver.unwrap_or_default();
    for (p, v) in [("solver.newton_tol", solver.newton_tol), ("solver.ode_tol", solver.ode_tol), ("solver.ring_tol", solver.ring_tol)] {
        positive(p, v, &mut err);
    }
    let spectrum = raw.spectrum.unwrap_or_default();
    positive("spectrum.xi_max_over_pi", spectrum.xi_max_over_pi, &mut err);
    positive("spectrum.ladder_h0", spectrum.ladder_h0, &mut err);
    if !(spectrum.radius > 0.0 && spectrum.radius < 1.0) {
        err("spectrum.radius", format!("must lie in (0, 1), got {}", spectrum.radius));
    }
    if spectrum.ladder_levels < 3 {
        err("spectrum.ladder_levels", "needs at least 3 levels".into());
    }
    let validation = raw.validation.unwrap_or_default();
    positive("validation.speed_tol", validation.speed_tol, &mut err);
    positive("validation.riesz_tol", validation.riesz_tol, &mut err);
    let simulation = raw.simulation.unwrap_or_default();
    positive("simulation.packet_sigma", simulation.packet_sigma, &mut err);
    positive("simulation.packet_periods", simulation.packet_periods, &mut err);
    for (p, v) in [
        ("simulation.recurrence_ring", simulation.recurrence_ring),
        ("simulation.recurrence_periods", simulation.recurrence_periods),
        ("simulation.balance_periods", simulation.balance_periods),
        ("simulation.samples_per_period", simulation.samples_per_period),
        ("simulation.packet_ring", simulation.packet_ring),
    ] {
        if v == 0 {
            err(p, "must be positive".into());
        }
    }

    let continuation = raw.continuation.and_then(|c| {
        let parameter = match c.parameter.as_str() {
            "k" => ContinuationParameter::Wavenumber,
            "E" => ContinuationParameter::Energy,
            "A" => ContinuationParameter::Amplitude,
            m if m.starts_with('M') && m[1..].parse::<usize>().is_ok() => ContinuationParameter::Mean(m[1..].parse().expect("checked")),
            other => {
                err("continuation.parameter", format!("unknown parameter {other:?}; expected k, M<i>, E or A"));
                return None;
            }
        };
        if c.values.is_empty() {
            err("continuation.values", "empty".into());
        }
        Some(ContinuationConfig { parameter, values: c.values })
    });

    if !bad.is_empty() {
        return Err(ConfigError::Schema(bad));
    }
    Ok(RunConfig {
        system: system.expect("validated"),
        wave: WaveRequest { k: k.expect("validated"), k_modes, amplitude, means: wave.means, energy: wave.energy, base_mean: wave.base_mean },
        solver,
        spectrum,
        continuation,
        validation,
        simulation,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("run")),
        seed: raw.seed.unwrap_or(0),
    })
}

fn positive(path: &str, v: f64, err: &mut impl FnMut(&str, String)) {
    if !(v > 0.0) {
        err(path, format!("must be positive, got {v}"));
    }
}

fn parse_fraction(s: &str) -> Result<(i64, u64), String> {
    let (p, n) = s.split_once('/').ok_or_else(|| format!("expected \"p/N\", got {s:?}"))?;
    let p = p.trim().parse::<i64>().map_err(|e| format!("numerator: {e}"))?;
    let n = n.trim().parse::<u64>().map_err(|e| format!("denominator: {e}"))?;
    Ok((p, n))
}

fn system_of(s: &RawSystem, err: &mut impl FnMut(&str, String)) -> Option<Preset> {
    let Some(name) = s.name.as_deref() else {
        err("system.name", format!("missing; available systems: {}", SYSTEMS.join(", ")));
        return None;
    };
    let (allowed, preset): (&[&str], Box<dyn Fn(&dyn Fn(&str, f64) -> f64) -> Preset>) = match name {
        "lambda_omega" => (&["mu", "c0", "c1"], Box::new(|g| Preset::LambdaOmega { mu: g("mu", 0.5), c0: g("c0", 1.0), c1: g("c1", -1.0) })),
        "roll_waves" => (&["eta", "nu"], Box::new(|g| Preset::RollWaves { eta: g("eta", 1.0), nu: g("nu", 0.1) })),
        "quartic_chain" => (&["eta", "a2", "a4"], Box::new(|g| Preset::QuarticChain { eta: g("eta", 1.0), a2: g("a2", 1.0), a4: g("a4", 1.0) })),
        other => {
            err("system.name", format!("unknown system {other:?}; available systems: {}", SYSTEMS.join(", ")));
            return None;
        }
    };
    let mut ok = true;
    for key in s.params.keys() {
        if !allowed.contains(&key.as_str()) {
            err(&format!("system.{key}"), format!("not a parameter of {name}; expected one of {}", allowed.join(", ")));
            ok = false;
        }
    }
    if let Some(eta) = s.params.get("eta") {
        if *eta == 0.0 {
            err("system.eta", "must be nonzero".into());
            ok = false;
        }
    }
    ok.then(|| preset(&|k, d| s.params.get(k).copied().unwrap_or(d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_rd_config_gets_defaults() {
        let c = parse_config_str("[system]\nname = \"lambda_omega\"\n[wave]\nk = \"1/6\"\n").unwrap();
        assert_eq!(c.system, Preset::LambdaOmega { mu: 0.5, c0: 1.0, c1: -1.0 });
        assert_eq!(c.wave.k, (1, 6));
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn zero_wavenumber_names_field() {
        let e = parse_config_str("[system]\nname = \"lambda_omega\"\n[wave]\nk = \"0/6\"\n").unwrap_err();
        assert_eq!(e.violations()[0].path, "wave.k");
    }

    #[test]
    fn unknown_system_lists_choices() {
        let e = parse_config_str("[system]\nname = \"fpu\"\n[wave]\nk = \"1/6\"\n").unwrap_err();
        let v = &e.violations()[0];
        assert_eq!(v.path, "system.name");
        assert!(SYSTEMS.iter().all(|s| v.message.contains(s)));
    }

    #[test]
    fn all_violations_reported() {
        let e = parse_config_str("[system]\nname = \"roll_waves\"\nmu = 1.0\n[wave]\nk = \"1/1\"\namplitude = -1\n[solver]\node_tol = 0\n").unwrap_err();
        let paths: Vec<&str> = e.violations().iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, ["system.mu", "wave.k", "wave.amplitude", "solver.ode_tol"]);
    }

    #[test]
    fn continuation_parameters() {
        let c = parse_config_str("[system]\nname = \"roll_waves\"\n[wave]\nk = \"-1/6\"\n[continuation]\nparameter = \"M0\"\nvalues = [1.0]\n").unwrap();
        assert_eq!(c.continuation.unwrap().parameter, ContinuationParameter::Mean(0));
    }
}

//! Nonlinear ring integrations: recurrence of exact waves, energy balance and packet transport.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, SystemSpec};
use crate::ode::{integrate, OdeError, OdeOptions, OdeStats};
use crate::profile::WaveProfile;
use crate::ring::RingState;

#[derive(Debug, Error)]
pub enum RingError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("final time must be positive, got {0}")]
    InvalidTime(f64),
    #[error("sample times must increase strictly within [0, t_end]; offending time {0}")]
    InvalidSamples(f64),
    #[error("wavenumber is not rational")]
    IrrationalWavenumber,
    #[error("operation requires the {0} class")]
    WrongClass(&'static str),
    #[error("packet width {width:.3e} exceeds {limit:.3e} sites before a measurable transit")]
    PacketDispersed { width: f64, limit: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<RingState>,
    /// Ring sums of every component at each sample.
    pub component_sums: Vec<Vec<f64>>,
    /// Total ring energy (Hamiltonian class).
    pub energy: Option<Vec<f64>>,
    pub stats: OdeStats,
}

impl TrajectoryRecord {
    /// `t, site, component values…` rows for every `every`-th sample.
    pub fn to_csv(&self, every: usize) -> String {
        let mut out = String::from("t,site");
        let d = self.states.first().map_or(0, |s| s.dim());
        for c in 0..d {
            out.push_str(&format!(",u{c}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states).step_by(every.max(1)) {
            for j in 0..s.sites() {
                out.push_str(&format!("{t:?},{j}"));
                for x in s.site(j) {
                    out.push_str(&format!(",{x:?}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Integrates `dU/dt = rhs_full(U)` with dense output at `times` (sorted, within `[0, t_end]`).
pub fn integrate_ring(sys: &SystemSpec, u0: &RingState, t_end: f64, times: &[f64], tol: f64) -> Result<TrajectoryRecord, RingError> {
    if !(t_end > 0.0) {
        return Err(RingError::InvalidTime(t_end));
    }
    let slack = 1e-12 * t_end;
    for (i, &t) in times.iter().enumerate() {
        if !(t >= 0.0 && t <= t_end + slack) || (i > 0 && t <= times[i - 1]) {
            return Err(RingError::InvalidSamples(t));
        }
    }
    let d = u0.dim();
    let sol = integrate(
        |_, y: &[f64], dy: &mut [f64]| {
            let f = sys.rhs_full(&RingState::from_vec(d, y.to_vec()));
            dy.copy_from_slice(f.as_slice());
        },
        0.0,
        u0.as_slice(),
        t_end,
        times,
        &OdeOptions::with_tol(tol),
    )?;
    let states: Vec<RingState> = sol.samples.into_iter().map(|y| RingState::from_vec(d, y)).collect();
    let component_sums = states.iter().map(|s| s.component_sums()).collect();
    let energy = match sys {
        SystemSpec::Hamiltonian(_) => Some(states.iter().map(|s| sys.ring_energy(s)).collect::<Result<Vec<f64>, _>>()?),
        _ => None,
    };
    Ok(TrajectoryRecord { times: times.to_vec(), states, component_sums, energy, stats: sol.stats })
}

/// `U_j(t) = ū(kj + ωt)` on `sites` sites.
pub fn wave_state(u: &WaveProfile, sites: usize, t: f64) -> RingState {
    let k = u.k_value();
    RingState::from_fn(sites, u.dim, |j, s| s.copy_from_slice(&u.evaluate((k * j as f64 + u.omega * t).rem_euclid(1.0))))
}

fn ring_sites(u: &WaveProfile, periods: usize) -> Result<usize, RingError> {
    let (_, n) = u.k.as_rational().ok_or(RingError::IrrationalWavenumber)?;
    Ok(n as usize * periods)
}

/// Largest site deviation after `n_periods` temporal periods on a ring of `periods` spatial periods.
pub fn wave_recurrence(sys: &SystemSpec, u: &WaveProfile, periods: usize, n_periods: usize, tol: f64) -> Result<f64, RingError> {
    let sites = ring_sites(u, periods)?;
    let u0 = wave_state(u, sites, 0.0);
    let t_end = n_periods as f64 / u.omega;
    let tr = integrate_ring(sys, &u0, t_end, &[t_end], tol)?;
    let end = &tr.states[0];
    Ok(end.as_slice().iter().zip(u0.as_slice()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub initial_energy: f64,
    /// `max_t |E(t) − E(0)|`.
    pub total_drift: f64,
    /// `sup |d/dt H_j − D̃[flux]_j|` over interior equispaced samples.
    pub local_residual: f64,
    pub stencils: usize,
}

/// Energy conservation along a Hamiltonian trajectory; the local balance is checked at every sample
/// whose four neighbours are equispaced, with a fourth-order time derivative.
pub fn energy_audit(sys: &SystemSpec, tr: &TrajectoryRecord) -> Result<EnergyAudit, RingError> {
    let SystemSpec::Hamiltonian(s) = sys else { return Err(RingError::WrongClass("Hamiltonian")) };
    let energy = tr.energy.as_ref().ok_or(RingError::WrongClass("Hamiltonian"))?;
    let e0 = energy.first().copied().unwrap_or(0.0);
    let total_drift = energy.iter().fold(0.0f64, |m, e| m.max((e - e0).abs()));
    let mut local = 0.0f64;
    let mut stencils = 0;
    let t = &tr.times;
    for i in 2..t.len().saturating_sub(2) {
        let h = t[i + 1] - t[i];
        let uniform = [t[i - 1] - t[i - 2], t[i] - t[i - 1], t[i + 2] - t[i + 1]].iter().all(|g| (g - h).abs() <= 1e-9 * h);
        if !uniform || h <= 0.0 {
            continue;
        }
        let dens = |m: usize| sys.energy_density_flux(&tr.states[m]).map(|p| p.0);
        let (dm2, dm1, dp1, dp2) = (dens(i - 2)?, dens(i - 1)?, dens(i + 1)?, dens(i + 2)?);
        let (_, flux) = sys.energy_density_flux(&tr.states[i])?;
        for j in 0..flux.sites() {
            let dt = (dm2.site(j)[0] - 8.0 * dm1.site(j)[0] + 8.0 * dp1.site(j)[0] - dp2.site(j)[0]) / (12.0 * h);
            let div = s.eta * (flux.site_offset(j, 1)[0] - flux.site(j)[0]);
            local = local.max((dt - div).abs());
        }
        stencils += 1;
    }
    Ok(EnergyAudit { initial_energy: e0, total_drift, local_residual: local, stencils })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketOptions {
    /// Envelope width in sites.
    pub sigma: f64,
    pub amplitude: f64,
    /// Ring size in spatial periods.
    pub periods: usize,
    /// Observation window in temporal periods.
    pub n_periods: f64,
    pub samples: usize,
    pub tol: f64,
}

impl Default for PacketOptions {
    fn default() -> Self {
        PacketOptions { sigma: 40.0, amplitude: 1e-3, periods: 200, n_periods: 8.0, samples: 41, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketMeasurement {
    /// Centroid velocity in sites per unit time (signed).
    pub velocity: f64,
    pub times: Vec<f64>,
    pub centroids: Vec<f64>,
    pub widths: Vec<f64>,
}

impl PacketMeasurement {
    pub fn centroid_csv(&self) -> String {
        let mut out = String::from("t,centroid,width\n");
        for i in 0..self.times.len() {
            out.push_str(&format!("{:?},{:?},{:?}\n", self.times[i], self.centroids[i], self.widths[i]));
        }
        out
    }
}

/// Centroid and width of `w` on sites, after a moving average over `n` sites.
fn centroid(w: &[f64], n: usize) -> (f64, f64) {
    let l = w.len();
    let sm: Vec<f64> = (0..l).map(|j| (0..n).map(|i| w[(j + l + i - n / 2) % l]).sum::<f64>() / n as f64).collect();
    let mass: f64 = sm.iter().sum();
    let c = sm.iter().enumerate().map(|(j, x)| j as f64 * x).sum::<f64>() / mass;
    let var = sm.iter().enumerate().map(|(j, x)| (j as f64 - c).powi(2) * x).sum::<f64>() / mass;
    (c, var.sqrt())
}

/// Tracks a Gaussian phase-modulation packet on top of the wave and returns its centroid velocity.
pub fn wave_packet_velocity(sys: &SystemSpec, u: &WaveProfile, opts: &PacketOptions) -> Result<PacketMeasurement, RingError> {
    if !matches!(sys, SystemSpec::ReactionDiffusion(_)) {
        return Err(RingError::WrongClass("reaction-diffusion"));
    }
    let (_, n) = u.k.as_rational().ok_or(RingError::IrrationalWavenumber)?;
    let n = n as usize;
    let sites = ring_sites(u, opts.periods)?;
    let k = u.k_value();
    let dz = u.dzeta();
    let j0 = 0.5 * sites as f64;
    let mut u0 = wave_state(u, sites, 0.0);
    for j in 0..sites {
        let env = opts.amplitude * (-((j as f64 - j0).powi(2)) / (2.0 * opts.sigma * opts.sigma)).exp();
        let v = crate::fourier::evaluate(&dz, u.dim, (k * j as f64).rem_euclid(1.0));
        for (x, dv) in u0.site_mut(j).iter_mut().zip(v) {
            *x += env * dv;
        }
    }
    let t_end = opts.n_periods / u.omega;
    let times: Vec<f64> = (0..opts.samples).map(|i| t_end * i as f64 / (opts.samples - 1) as f64).collect();
    let tr = integrate_ring(sys, &u0, t_end, &times, opts.tol)?;
    let limit = 0.25 * sites as f64;
    let (mut centroids, mut widths) = (Vec::new(), Vec::new());
    for (t, s) in times.iter().zip(&tr.states) {
        let base = wave_state(u, sites, *t);
        let w: Vec<f64> = (0..sites).map(|j| s.site(j).iter().zip(base.site(j)).map(|(a, b)| (a - b).powi(2)).sum()).collect();
        let (c, wd) = centroid(&w, n);
        if wd > limit {
            return Err(RingError::PacketDispersed { width: wd, limit });
        }
        centroids.push(c);
        widths.push(wd);
    }
    let pts: Vec<(f64, f64)> = times.iter().copied().zip(centroids.iter().copied()).collect();
    Ok(PacketMeasurement { velocity: linear_slope(&pts), times, centroids, widths })
}

fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

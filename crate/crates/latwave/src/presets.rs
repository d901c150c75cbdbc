//! Shipped example systems and the recipes that produce a solved wave for each.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier::{self, mode_index, Modes};
use crate::model::{LambdaOmega, SystemSpec};
use crate::profile::{
    hopf_mean, linear_seed, profile_residual, solve_profile, AmplitudeAnchor, NewtonOptions, ProfileError, ProfileTargets, WaveProfile,
    Wavenumber,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum Preset {
    LambdaOmega { mu: f64, c0: f64, c1: f64 },
    RollWaves { eta: f64, nu: f64 },
    QuarticChain { eta: f64, a2: f64, a4: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveRequest {
    /// Wavenumber as `(p, N)`.
    pub k: (i64, u64),
    pub k_modes: usize,
    /// Amplitude of the first harmonic used to reach the family.
    pub amplitude: f64,
    /// Optional averages and energy to re-target after the anchored solve.
    #[serde(default)]
    pub means: Option<Vec<f64>>,
    #[serde(default)]
    pub energy: Option<f64>,
    /// Base average for the Hamiltonian seed.
    #[serde(default)]
    pub base_mean: Option<Vec<f64>>,
}

impl Preset {
    pub fn system(&self) -> SystemSpec {
        match *self {
            Preset::LambdaOmega { mu, c0, c1 } => SystemSpec::lambda_omega(mu, c0, c1),
            Preset::RollWaves { eta, nu } => SystemSpec::roll_waves(eta, nu),
            Preset::QuarticChain { eta, a2, a4 } => SystemSpec::quartic_chain(eta, a2, a4),
        }
    }

    /// Solves a wave of the family described by `req`.
    pub fn wave(&self, req: &WaveRequest, opts: &NewtonOptions) -> Result<WaveProfile, ProfileError> {
        let sys = self.system();
        let k = Wavenumber::rational(req.k.0, req.k.1)?;
        match *self {
            Preset::LambdaOmega { mu, c0, c1 } => {
                let g = lambda_omega_exact(mu, c0, c1, k, req.k_modes)?;
                solve_profile(&sys, k, &ProfileTargets::default(), &g, opts)
            }
            Preset::RollWaves { .. } => {
                let m_h = hopf_mean(&sys, k.value(), &[1.0], 0, 0.2, 20.0)
                    .ok_or_else(|| ProfileError::InvalidTargets("no oscillatory instability of the constant states".into()))?;
                let state = sys.constant_equilibrium(&[m_h]).expect("roll-wave equilibrium");
                let anchor = AmplitudeAnchor { component: 0, amplitude: req.amplitude };
                let targets = ProfileTargets { means: vec![m_h], energy: None, anchor: Some(anchor) };
                let small = linear_seed(&sys, k, &state, 1e-3, 0, req.k_modes)?;
                let w = ramp(&sys, k, targets, small, req.amplitude, opts)?;
                match &req.means {
                    Some(m) => retarget(&sys, &w, ProfileTargets { means: m.clone(), energy: None, anchor: None }, opts),
                    None => retarget(&sys, &w, ProfileTargets { means: w.means()[..1].to_vec(), energy: None, anchor: None }, opts),
                }
            }
            Preset::QuarticChain { .. } => {
                let base = req.base_mean.clone().unwrap_or_else(|| vec![0.0]);
                let anchor = AmplitudeAnchor { component: 0, amplitude: req.amplitude };
                let targets = ProfileTargets { means: base.clone(), energy: None, anchor: Some(anchor) };
                let small = linear_seed(&sys, k, &base, 1e-3, 0, req.k_modes)?;
                let w = ramp(&sys, k, targets, small, req.amplitude, opts)?;
                let means = req.means.clone().unwrap_or_else(|| w.means());
                let energy = req.energy.or(w.targets.energy);
                retarget(&sys, &w, ProfileTargets { means, energy, anchor: None }, opts)
            }
        }
    }
}

/// Analytic λ–ω plane wave `r(cos 2πζ, sin 2πζ)`.
pub fn lambda_omega_exact(mu: f64, c0: f64, c1: f64, k: Wavenumber, k_modes: usize) -> Result<WaveProfile, ProfileError> {
    let sys = SystemSpec::lambda_omega(mu, c0, c1);
    let r2 = LambdaOmega::plane_wave_radius_sq(mu, k.value());
    if r2 <= 0.0 {
        return Err(ProfileError::InvalidTargets(format!("no plane wave: r² = {r2}")));
    }
    let r = r2.sqrt();
    let mut m = Modes::zeros(2 * (2 * k_modes + 1));
    m[mode_index(k_modes, 2, 1, 0)] = Complex64::new(r / 2.0, 0.0);
    m[mode_index(k_modes, 2, -1, 0)] = Complex64::new(r / 2.0, 0.0);
    m[mode_index(k_modes, 2, 1, 1)] = Complex64::new(0.0, -r / 2.0);
    m[mode_index(k_modes, 2, -1, 1)] = Complex64::new(0.0, r / 2.0);
    let mut u = WaveProfile::from_modes(&sys, k, (c0 + c1 * r2) / (2.0 * std::f64::consts::PI), m)?;
    u.residual = fourier::sup_norm(&profile_residual(&sys, &u)?);
    Ok(u)
}

/// Raises the anchored amplitude geometrically from the linear seed up to `amplitude`.
fn ramp(
    sys: &SystemSpec,
    k: Wavenumber,
    mut targets: ProfileTargets,
    seed: WaveProfile,
    amplitude: f64,
    opts: &NewtonOptions,
) -> Result<WaveProfile, ProfileError> {
    let start = fourier::sup_norm(&Modes::from_iterator(1, std::iter::once(seed.modes[mode_index(seed.k_modes(), seed.dim, 1, 0)])));
    let steps = ((amplitude / start).ln() / 0.5f64.ln().abs()).ceil().max(1.0) as usize;
    let mut w = seed;
    let mut prev: Option<WaveProfile> = None;
    for i in 1..=steps {
        let a = start * (amplitude / start).powf(i as f64 / steps as f64);
        targets.anchor.as_mut().expect("anchored").amplitude = a;
        let mut guess = w.clone();
        if let Some(p) = &prev {
            // Secant in log-amplitude.
            guess.modes += (&w.modes - &p.modes) * Complex64::new(1.0, 0.0);
            guess.omega += w.omega - p.omega;
            let km = guess.k_modes();
            fourier::symmetrize(&mut guess.modes, km, guess.dim);
        } else {
            let s = a / start;
            let km = guess.k_modes();
            let base = fourier::constant(km, &guess.means());
            guess.modes = &base + (&guess.modes - &base) * Complex64::new(s, 0.0);
        }
        let next = solve_profile(sys, k, &targets, &guess, opts)?;
        prev = Some(w);
        w = next;
    }
    Ok(w)
}

fn retarget(sys: &SystemSpec, w: &WaveProfile, targets: ProfileTargets, opts: &NewtonOptions) -> Result<WaveProfile, ProfileError> {
    solve_profile(sys, w.k, &targets, w, opts)
}

//! Averaged quantities of the modulation systems and their linearized Jacobians.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{self, FourierSpace, Modes, ProfileField};
use crate::linalg::{eigenvalues, to_complex, EigError};
use crate::model::{LatticeField, SystemSpec};
use crate::profile::{solve_profile, NewtonOptions, ProfileError, ProfileTargets, WaveDerivatives, WaveProfile, Wavenumber};

/// Averaged fluxes: `F` (one per conserved average) and, for Hamiltonian systems, the energy flux `S`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AveragedFluxes {
    pub f: Vec<f64>,
    pub s: Option<f64>,
}

pub fn averaged_fluxes(sys: &SystemSpec, u: &WaveProfile) -> AveragedFluxes {
    averaged_fluxes_on(sys, &FourierSpace::new(u.k_modes()), u)
}

/// As [`averaged_fluxes`] with an explicit collocation grid.
pub fn averaged_fluxes_on(sys: &SystemSpec, space: &FourierSpace, u: &WaveProfile) -> AveragedFluxes {
    let d = sys.dim();
    let km = space.k_modes();
    let zero = |m: &crate::fourier::Modes, dd: usize, c: usize| m[crate::fourier::mode_index(km, dd, 0, c)].re;
    let field = ProfileField::new(space, u.k_value(), d, u.modes.clone());
    match sys {
        SystemSpec::ReactionDiffusion(_) => AveragedFluxes::default(),
        SystemSpec::Mixed(s) => {
            let d1 = s.law.conserved_dim();
            let flux = field.map_local(d, &|x, o| s.law.flux(x, o));
            AveragedFluxes { f: (0..d1).map(|c| s.eta * zero(&flux.modes, d, c)).collect(), s: None }
        }
        SystemSpec::Hamiltonian(s) => {
            let h = &s.hamiltonian;
            let y = ProfileField::new(
                space,
                u.k_value(),
                d,
                (crate::fourier::shift(&u.modes, d, u.k_value()) - &u.modes) * num_complex::Complex64::new(s.eta, 0.0),
            );
            let gu = field.map_pair(&y, d, &|x, v, o| h.grad_u(x, v, o));
            let (_, flux) = sys.energy_density_flux(&field).expect("Hamiltonian class");
            AveragedFluxes {
                f: (0..d).map(|c| s.eta * zero(&gu.modes, d, c)).collect(),
                s: Some(s.eta * zero(&flux.modes, 1, 0)),
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum WhithamError {
    #[error("⟨u_ad, ∂_k u⟩ = {0:.3e} violates the normalization")]
    NormalizationViolated(f64),
    #[error("parameter derivatives unavailable: {0}")]
    DerivativeUnavailable(String),
    #[error("operation requires the {0} class")]
    WrongClass(&'static str),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Eig(#[from] EigError),
}

const NORMALIZATION_TOL: f64 = 1e-9;

fn rd_mu(sys: &SystemSpec) -> Result<f64, WhithamError> {
    match sys {
        SystemSpec::ReactionDiffusion(s) => Ok(s.mu),
        _ => Err(WhithamError::WrongClass("reaction-diffusion")),
    }
}

fn shifted_pair(v: &Modes, d: usize, k: f64) -> (Modes, Modes) {
    (fourier::shift(v, d, k), fourier::shift(v, d, -k))
}

/// `∂_kω = ⟨u_ad, μ[∂_ζu(·+k) − ∂_ζu(·−k)]⟩`.
pub fn rd_group_velocity(wd: &WaveDerivatives, u: &WaveProfile, mu: f64) -> f64 {
    let (p, m) = shifted_pair(&wd.dzeta, u.dim, u.k_value());
    mu * fourier::pairing(&wd.u_ad, &(p - m)).re
}

/// `d(k) = ⟨u_ad, μ[∂_ku(·+k) − ∂_ku(·−k)] + ½μ[∂_ζu(·+k) + ∂_ζu(·−k)]⟩`.
pub fn rd_diffusion(wd: &WaveDerivatives, u: &WaveProfile, mu: f64) -> Result<f64, WhithamError> {
    let defect = fourier::pairing(&wd.u_ad, &wd.dk).norm();
    if defect > NORMALIZATION_TOL {
        return Err(WhithamError::NormalizationViolated(defect));
    }
    let (kp, km) = shifted_pair(&wd.dk, u.dim, u.k_value());
    let (zp, zm) = shifted_pair(&wd.dzeta, u.dim, u.k_value());
    let v = (kp - km) + (zp + zm) * Complex64::new(0.5, 0.0);
    Ok(mu * fourier::pairing(&wd.u_ad, &v).re)
}

/// Group velocity and diffusion coefficient of a reaction–diffusion wave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdWhitham {
    pub omega: f64,
    pub group_velocity: f64,
    pub diffusion: f64,
}

pub fn rd_whitham(sys: &SystemSpec, u: &WaveProfile, wd: &WaveDerivatives) -> Result<RdWhitham, WhithamError> {
    let mu = rd_mu(sys)?;
    Ok(RdWhitham { omega: u.omega, group_velocity: rd_group_velocity(wd, u, mu), diffusion: rd_diffusion(wd, u, mu)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeRoute {
    Bordered,
    Continuation,
}

/// Derivatives of `ω`, `F` and `S` in the modulation parameters `(k, M_1, …, E)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDerivatives {
    pub route: DerivativeRoute,
    pub omega: Vec<f64>,
    /// `f[i][a] = ∂_a F_i`.
    pub f: Vec<Vec<f64>>,
    pub s: Option<Vec<f64>>,
}

impl ParameterDerivatives {
    fn entries(&self) -> Vec<f64> {
        let mut v = self.omega.clone();
        v.extend(self.f.iter().flatten());
        v.extend(self.s.iter().flatten());
        v
    }

    /// Largest entrywise discrepancy relative to `max(|a|, |b|, scale)` with `scale` the largest entry.
    pub fn discrepancy(&self, other: &ParameterDerivatives) -> f64 {
        let (a, b) = (self.entries(), other.entries());
        let scale = a.iter().chain(&b).fold(0.0f64, |m, x| m.max(x.abs()));
        a.iter().zip(&b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3 * scale)).fold(0.0, f64::max)
    }
}

fn flux_vector(sys: &SystemSpec, u: &WaveProfile) -> (Vec<f64>, Option<f64>) {
    let fl = averaged_fluxes(sys, u);
    (fl.f, fl.s)
}

/// Central difference of the averaged fluxes along `(δk, δu)` at fixed `ω`.
fn flux_directional(sys: &SystemSpec, u: &WaveProfile, dk: f64, du: &Modes, h: f64) -> (Vec<f64>, Option<f64>) {
    let probe = |s: f64| {
        let mut w = u.clone();
        w.k = Wavenumber::Real(u.k_value() + s * dk);
        w.modes = &u.modes + du * Complex64::new(s, 0.0);
        flux_vector(sys, &w)
    };
    let (fp, sp) = probe(h);
    let (fm, sm) = probe(-h);
    let f = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let s = sp.zip(sm).map(|(a, b)| (a - b) / (2.0 * h));
    (f, s)
}

const DIRECTIONAL_STEP: f64 = 1e-4;

fn assemble(route: DerivativeRoute, omega: Vec<f64>, cols: Vec<(Vec<f64>, Option<f64>)>) -> ParameterDerivatives {
    let nf = cols.first().map_or(0, |c| c.0.len());
    let f = (0..nf).map(|i| cols.iter().map(|c| c.0[i]).collect()).collect();
    let s = cols.iter().map(|c| c.1).collect::<Option<Vec<f64>>>();
    ParameterDerivatives { route, omega, f, s }
}

/// Derivatives along the directions of the bordered linear solves; the averaged functionals are
/// differentiated by central differences in the profile variables.
pub fn bordered_derivatives(sys: &SystemSpec, u: &WaveProfile, wd: &WaveDerivatives) -> ParameterDerivatives {
    let h = DIRECTIONAL_STEP;
    let mut omega = vec![wd.dk_omega];
    let mut cols = vec![flux_directional(sys, u, 1.0, &wd.dk, h)];
    for (v, w) in wd.parameter_directions() {
        omega.push(w);
        cols.push(flux_directional(sys, u, 0.0, v, h));
    }
    assemble(DerivativeRoute::Bordered, omega, cols)
}

fn perturbed(sys: &SystemSpec, u: &WaveProfile, param: usize, delta: f64, opts: &NewtonOptions) -> Result<WaveProfile, WhithamError> {
    let mut targets = ProfileTargets { means: u.targets.means.clone(), energy: u.targets.energy, anchor: None };
    let mut k = u.k;
    let nm = targets.means.len();
    match param {
        0 => k = Wavenumber::Real(u.k_value() + delta),
        a if a <= nm => targets.means[a - 1] += delta,
        _ => {
            *targets.energy.as_mut().ok_or_else(|| WhithamError::DerivativeUnavailable("wave has no energy target".into()))? += delta
        }
    }
    Ok(solve_profile(sys, k, &targets, u, opts)?)
}

/// Central differences over re-solved family members with one Richardson halving.
pub fn continuation_derivatives(sys: &SystemSpec, u: &WaveProfile, h: f64, opts: &NewtonOptions) -> Result<ParameterDerivatives, WhithamError> {
    let n = sys.modulation_size();
    if u.targets.means.len() != sys.conserved_count() || (sys.has_energy() && u.targets.energy.is_none()) {
        return Err(WhithamError::DerivativeUnavailable("wave targets do not fix the modulation parameters".into()));
    }
    let nf = sys.conserved_count();
    let central = |a: usize, step: f64| -> Result<Vec<f64>, WhithamError> {
        let wp = perturbed(sys, u, a, step, opts)?;
        let wm = perturbed(sys, u, a, -step, opts)?;
        let pack = |w: &WaveProfile| {
            let (f, s) = flux_vector(sys, w);
            let mut v = vec![w.omega];
            v.extend(f);
            v.extend(s);
            v
        };
        let (p, m) = (pack(&wp), pack(&wm));
        Ok(p.iter().zip(&m).map(|(x, y)| (x - y) / (2.0 * step)).collect())
    };
    let mut table = Vec::with_capacity(n);
    for a in 0..n {
        let coarse = central(a, h)?;
        let fine = central(a, 0.5 * h)?;
        table.push(fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect::<Vec<f64>>());
    }
    let omega = table.iter().map(|c| c[0]).collect();
    let cols = table.iter().map(|c| (c[1..1 + nf].to_vec(), c.get(1 + nf).copied())).collect();
    Ok(assemble(DerivativeRoute::Continuation, omega, cols))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyperbolicity {
    Strict,
    Weak,
    NonHyperbolic,
}

/// Sign of the `B∂F` block for the Hamiltonian class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamSign {
    /// Rows `−B∂F`.
    Minus,
    /// Rows `+B∂F`.
    Plus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhithamJacobian {
    pub matrix: DMatrix<f64>,
    pub speeds: Vec<Complex64>,
    pub verdict: Hyperbolicity,
    pub sign: Option<HamSign>,
}

/// Eigenvalues of `G` and the hyperbolicity verdict.
pub fn char_speeds(g: &DMatrix<f64>) -> Result<(Vec<Complex64>, Hyperbolicity), WhithamError> {
    let mut speeds = eigenvalues(&to_complex(g))?;
    speeds.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let non = speeds.iter().any(|a| a.im.abs() > 1e-6 * a.norm().max(1.0));
    let real = speeds.iter().all(|a| a.im.abs() <= 1e-8 * a.norm().max(1.0));
    let distinct = speeds.windows(2).all(|w| (w[1] - w[0]).norm() > 1e-8 * w[0].norm().max(1.0));
    let verdict = if non {
        Hyperbolicity::NonHyperbolic
    } else if real && distinct {
        Hyperbolicity::Strict
    } else {
        Hyperbolicity::Weak
    };
    Ok((speeds, verdict))
}

fn jacobian_of(matrix: DMatrix<f64>, sign: Option<HamSign>) -> Result<WhithamJacobian, WhithamError> {
    let (speeds, verdict) = char_speeds(&matrix)?;
    Ok(WhithamJacobian { matrix, speeds, verdict, sign })
}

/// Linearized modulation Jacobian(s) `G`; the Hamiltonian class yields both sign variants, `Minus` first.
pub fn whitham_jacobian(sys: &SystemSpec, d: &ParameterDerivatives) -> Result<Vec<WhithamJacobian>, WhithamError> {
    let n = sys.modulation_size();
    let nf = sys.conserved_count();
    if d.omega.len() != n || d.f.len() != nf || d.f.iter().any(|r| r.len() != n) || d.s.is_some() != sys.has_energy() {
        return Err(WhithamError::DerivativeUnavailable(format!("expected {n} parameters and {nf} fluxes")));
    }
    let rows_with = |flux_rows: Vec<Vec<f64>>| {
        let mut g = DMatrix::zeros(n, n);
        for b in 0..n {
            g[(0, b)] = d.omega[b];
        }
        for (i, r) in flux_rows.iter().enumerate() {
            for b in 0..n {
                g[(1 + i, b)] = r[b];
            }
        }
        if let Some(s) = &d.s {
            for b in 0..n {
                g[(n - 1, b)] = s[b];
            }
        }
        g
    };
    match sys {
        SystemSpec::ReactionDiffusion(_) => Ok(vec![jacobian_of(rows_with(Vec::new()), None)?]),
        SystemSpec::Mixed(_) => {
            let rows = d.f.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
            Ok(vec![jacobian_of(rows_with(rows), None)?])
        }
        SystemSpec::Hamiltonian(s) => {
            let bf = |sign: f64| -> Vec<Vec<f64>> {
                (0..nf).map(|i| (0..n).map(|b| sign * (0..nf).map(|j| s.b[(i, j)] * d.f[j][b]).sum::<f64>()).collect()).collect()
            };
            Ok(vec![
                jacobian_of(rows_with(bf(-1.0)), Some(HamSign::Minus))?,
                jacobian_of(rows_with(bf(1.0)), Some(HamSign::Plus))?,
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierSpace;
    use crate::presets::{lambda_omega_exact, Preset, WaveRequest};
    use crate::profile::wave_derivatives;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn lo(mu: f64, c1: f64, k: (i64, u64)) -> (SystemSpec, WaveProfile, WaveDerivatives) {
        let sys = SystemSpec::lambda_omega(mu, 1.0, c1);
        let u = lambda_omega_exact(mu, 1.0, c1, Wavenumber::rational(k.0, k.1).unwrap(), 8).unwrap();
        let wd = wave_derivatives(&sys, &u).unwrap();
        (sys, u, wd)
    }

    fn roll() -> (SystemSpec, WaveProfile) {
        let p = Preset::RollWaves { eta: 1.0, nu: 0.1 };
        let req = WaveRequest { k: (-1, 6), k_modes: 16, amplitude: 0.185, means: None, energy: None, base_mean: None };
        (p.system(), p.wave(&req, &NewtonOptions::default()).unwrap())
    }

    #[test]
    fn lambda_omega_group_velocity() {
        let (_, u, wd) = lo(0.5, -1.0, (1, 6));
        let analytic = 2.0 * 0.5 * (2.0 * PI / 6.0).sin();
        assert!((rd_group_velocity(&wd, &u, 0.5) - analytic).abs() < 1e-8);
        assert!((analytic - 0.8660254).abs() < 1e-7);
    }

    #[test]
    fn uncoupled_oscillators_have_no_modulation() {
        // c₁ = −1 would give ω = 0 at μ = 0.
        let (sys, u, wd) = lo(0.0, -0.5, (1, 6));
        let w = rd_whitham(&sys, &u, &wd).unwrap();
        assert!(w.group_velocity.abs() < 1e-14 && w.diffusion.abs() < 1e-14);
    }

    #[test]
    fn group_velocity_matches_continuation() {
        let (sys, u, wd) = lo(0.5, -1.0, (1, 8));
        let c = continuation_derivatives(&sys, &u, 1e-4, &NewtonOptions::default()).unwrap();
        let g = rd_group_velocity(&wd, &u, 0.5);
        assert!((c.omega[0] - g).abs() <= 1e-5 * g.abs(), "{} vs {g}", c.omega[0]);
        let jac = whitham_jacobian(&sys, &bordered_derivatives(&sys, &u, &wd)).unwrap();
        assert_eq!(jac.len(), 1);
        assert!((jac[0].speeds[0].re - g).abs() < 1e-10);
        assert_eq!(jac[0].verdict, Hyperbolicity::Strict);
    }

    #[test]
    fn diffusion_is_gauge_invariant() {
        let (_, u, wd) = lo(0.5, -1.0, (1, 6));
        let d0 = rd_diffusion(&wd, &u, 0.5).unwrap();
        let mut shifted = wd.clone();
        shifted.dk = &wd.dk + &wd.dzeta * Complex64::new(0.37, 0.0);
        assert!(matches!(rd_diffusion(&shifted, &u, 0.5), Err(WhithamError::NormalizationViolated(_))));
        let p = fourier::pairing(&shifted.u_ad, &shifted.dk);
        shifted.dk = &shifted.dk - &shifted.dzeta * p;
        assert!((rd_diffusion(&shifted, &u, 0.5).unwrap() - d0).abs() < 1e-10);
    }

    #[test]
    fn wrong_class_is_rejected() {
        let (sys, u) = roll();
        let wd = wave_derivatives(&sys, &u).unwrap();
        assert!(matches!(rd_whitham(&sys, &u, &wd), Err(WhithamError::WrongClass(_))));
    }

    #[test]
    fn trivial_fluxes() {
        let sys = SystemSpec::quartic_chain(1.0, 0.0, 0.0);
        let u = WaveProfile::from_modes(&sys, Wavenumber::rational(1, 5).unwrap(), 0.3, fourier::constant(4, &[0.7])).unwrap();
        let f = averaged_fluxes(&sys, &u);
        assert_eq!(f.f, vec![0.0]);
        assert_eq!(f.s, Some(0.0));
        let (sys, u) = roll();
        let f = averaged_fluxes(&sys, &u);
        assert!((f.f[0] - fourier::mean(&u.modes, 2)[1]).abs() < 1e-14);
        assert!(f.s.is_none());
    }

    #[test]
    fn fluxes_converge_under_padding() {
        let (sys, u) = roll();
        let base = averaged_fluxes(&sys, &u);
        let fine = FourierSpace::new(u.k_modes());
        let padded = averaged_fluxes_on(&sys, &FourierSpace::with_grid(u.k_modes(), 2 * fine.grid()), &u);
        assert!((base.f[0] - padded.f[0]).abs() < 1e-11);
        let p = Preset::QuarticChain { eta: 1.0, a2: 1.0, a4: 1.0 };
        let req = WaveRequest { k: (1, 5), k_modes: 16, amplitude: 0.3, means: None, energy: None, base_mean: Some(vec![0.3]) };
        let (sys, u) = (p.system(), p.wave(&req, &NewtonOptions::default()).unwrap());
        let a = averaged_fluxes(&sys, &u);
        let b = averaged_fluxes_on(&sys, &FourierSpace::with_grid(u.k_modes(), 2 * FourierSpace::new(u.k_modes()).grid()), &u);
        assert!((a.f[0] - b.f[0]).abs() < 1e-11 && (a.s.unwrap() - b.s.unwrap()).abs() < 1e-11);
    }

    #[test]
    fn linear_chain_frequency_slope() {
        // H = v²/2 + u²/2: 2πω = sin 2πk (1 + 4 sin² πk), independent of amplitude.
        let p = Preset::QuarticChain { eta: 1.0, a2: 1.0, a4: 0.0 };
        let req = WaveRequest { k: (1, 5), k_modes: 4, amplitude: 0.05, means: None, energy: None, base_mean: Some(vec![0.1]) };
        let sys = p.system();
        let u = p.wave(&req, &NewtonOptions::default()).unwrap();
        let k = 0.2f64;
        let th = 2.0 * PI * k;
        let omega = th.sin() * (1.0 + 4.0 * (PI * k).sin().powi(2)) / (2.0 * PI);
        let domega = th.cos() * (1.0 + 4.0 * (PI * k).sin().powi(2)) + 2.0 * th.sin().powi(2);
        assert!((u.omega - omega).abs() < 1e-10, "{} vs {omega}", u.omega);
        let wd = wave_derivatives(&sys, &u).unwrap();
        assert!((wd.dk_omega - domega).abs() < 1e-8, "{} vs {domega}", wd.dk_omega);
        assert!(wd.denergy_omega.unwrap().abs() < 1e-8);
    }

    #[test]
    fn speed_examples() {
        let m = |v: &[f64]| DMatrix::from_row_slice(2, 2, v);
        let (s, v) = char_speeds(&m(&[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((s[0].re + 1.0).abs() < 1e-14 && (s[1].re - 1.0).abs() < 1e-14);
        assert_eq!(v, Hyperbolicity::Strict);
        let (s, v) = char_speeds(&m(&[0.0, 1.0, -1.0, 0.0])).unwrap();
        assert!((s[0].im.abs() - 1.0).abs() < 1e-14);
        assert_eq!(v, Hyperbolicity::NonHyperbolic);
        let (_, v) = char_speeds(&m(&[2.0, 1.0, 0.0, 2.0])).unwrap();
        assert_eq!(v, Hyperbolicity::Weak);
    }

    proptest! {
        #[test]
        fn speeds_are_homogeneous(e in proptest::collection::vec(-3.0..3.0f64, 9), c in -4.0..4.0f64) {
            let g = DMatrix::from_row_slice(3, 3, &e);
            let (s, _) = char_speeds(&g).unwrap();
            let (sc, _) = char_speeds(&(&g * c)).unwrap();
            for a in &s {
                let t = a * c;
                let best = sc.iter().map(|b| (b - t).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(best <= 1e-9 * (1.0 + t.norm()));
            }
        }
    }

    #[test]
    fn derivative_routes_agree() {
        let (sys, u) = roll();
        let wd = wave_derivatives(&sys, &u).unwrap();
        let b = bordered_derivatives(&sys, &u, &wd);
        let c = continuation_derivatives(&sys, &u, 1e-4, &NewtonOptions::default()).unwrap();
        assert!(b.discrepancy(&c) < 1e-4, "{}", b.discrepancy(&c));
        assert!((b.f[0][0] - c.f[0][0]).abs() < 1e-5);
        let jac = whitham_jacobian(&sys, &b).unwrap();
        let g = &jac[0].matrix;
        assert_eq!((g[(0, 0)], g[(1, 0)]), (b.omega[0], -b.f[0][0]));
    }
}

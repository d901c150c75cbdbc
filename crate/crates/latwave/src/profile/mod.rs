//! Periodic traveling-wave profiles `U_j(t) = u(kj + ωt)` on a Fourier discretization.

mod continuation;
mod derivatives;
mod linearize;
mod newton;
mod seed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{self, FourierSpace, Modes, ProfileField};
use crate::model::{ModelError, SystemClass, SystemDescriptor, SystemSpec};

pub use continuation::{continue_family, ContinuationCurve, ContinuationOptions, ContinuationParameter, ContinuationSample};
pub use derivatives::{wave_derivatives, WaveDerivatives};
pub use linearize::{linearization_matrices, LinearizationMatrices, ProfileOperator};
pub use newton::{solve_profile, NewtonOptions};
pub use seed::{constant_state_mode, hopf_mean, linear_seed};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("wavenumber must be nonzero")]
    ZeroWavenumber,
    #[error("invalid targets: {0}")]
    InvalidTargets(String),
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e}): {reason}")]
    NoConvergence { iterations: usize, residual: f64, reason: String },
    #[error("bordered Jacobian is singular to working precision (condition {condition:.3e})")]
    SingularJacobian { condition: f64 },
    #[error("continuation step fell below the minimum at parameter {at}")]
    StepUnderflow { at: f64, partial: Box<ContinuationCurve> },
    #[error("adjoint kernel has unexpected dimension: expected at most {expected}, found {found}")]
    RankDeficiency { expected: usize, found: usize },
    #[error("malformed wave document: {0}")]
    Document(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Spatial wavenumber, exact when rational.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavenumber {
    Rational { p: i64, n: u64 },
    Real(f64),
}

impl Wavenumber {
    /// `p/n` in lowest terms.
    pub fn rational(p: i64, n: u64) -> Result<Self, ProfileError> {
        if p == 0 || n == 0 {
            return Err(ProfileError::ZeroWavenumber);
        }
        let g = gcd(p.unsigned_abs(), n);
        Ok(Wavenumber::Rational { p: p / g as i64, n: n / g })
    }

    pub fn value(&self) -> f64 {
        match *self {
            Wavenumber::Rational { p, n } => p as f64 / n as f64,
            Wavenumber::Real(k) => k,
        }
    }

    /// `(p, N)` for rational wavenumbers.
    pub fn as_rational(&self) -> Option<(i64, u64)> {
        match *self {
            Wavenumber::Rational { p, n } => Some((p, n)),
            Wavenumber::Real(_) => None,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Constraint data selecting one member of the wave family.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileTargets {
    /// Averages of the conserved components (none for reaction–diffusion).
    pub means: Vec<f64>,
    /// Average energy (Hamiltonian class).
    pub energy: Option<f64>,
    /// Optional amplitude pin `|c₁| = amplitude` on one component, freeing one
    /// mean (mixed) or the energy (Hamiltonian).
    pub anchor: Option<AmplitudeAnchor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeAnchor {
    pub component: usize,
    pub amplitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub tolerance: f64,
    pub grid: usize,
    pub slack: f64,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveProfile {
    pub class: SystemClass,
    pub dim: usize,
    pub k: Wavenumber,
    pub omega: f64,
    pub modes: Modes,
    pub targets: ProfileTargets,
    /// Sup-norm of the profile-equation residual at the stored modes.
    pub residual: f64,
    pub meta: SolverMeta,
}

impl WaveProfile {
    /// Unsolved profile from explicit modes, e.g. as a Newton guess.
    pub fn from_modes(sys: &SystemSpec, k: Wavenumber, omega: f64, modes: Modes) -> Result<Self, ProfileError> {
        let d = sys.dim();
        if !modes.len().is_multiple_of(d) || (modes.len() / d) % 2 != 1 {
            return Err(ProfileError::DimensionMismatch { expected: d, got: modes.len() });
        }
        let mut modes = modes;
        let km = fourier::k_modes_of(&modes, d);
        fourier::symmetrize(&mut modes, km, d);
        let means = fourier::mean(&modes, d)[..sys.conserved_count()].to_vec();
        Ok(WaveProfile {
            class: sys.class(),
            dim: d,
            k,
            omega,
            modes,
            targets: ProfileTargets { means, energy: None, anchor: None },
            residual: f64::NAN,
            meta: SolverMeta::default(),
        })
    }

    pub fn k_modes(&self) -> usize {
        fourier::k_modes_of(&self.modes, self.dim)
    }

    pub fn k_value(&self) -> f64 {
        self.k.value()
    }

    /// Phase speed `c = −ω/k`.
    pub fn speed(&self) -> f64 {
        -self.omega / self.k.value()
    }

    pub fn means(&self) -> Vec<f64> {
        fourier::mean(&self.modes, self.dim)
    }

    pub fn evaluate(&self, zeta: f64) -> Vec<f64> {
        fourier::evaluate(&self.modes, self.dim, zeta)
    }

    /// Modes of `u(· + s)`.
    pub fn shifted_modes(&self, s: f64) -> Modes {
        fourier::shift(&self.modes, self.dim, s)
    }

    pub fn shifted(&self, s: f64) -> WaveProfile {
        WaveProfile { modes: self.shifted_modes(s), ..self.clone() }
    }

    pub fn dzeta(&self) -> Modes {
        fourier::derivative(&self.modes, self.dim)
    }

    /// Same wave with `K` re-truncated.
    pub fn resized(&self, k_modes: usize) -> WaveProfile {
        WaveProfile { modes: fourier::resize(&self.modes, self.dim, k_modes), ..self.clone() }
    }

    pub fn to_json(&self, sys: Option<&SystemSpec>) -> String {
        let doc = WaveDocument {
            class: self.class,
            system: sys.map(|s| s.descriptor()),
            k: self.k,
            omega: self.omega,
            speed: self.speed(),
            dim: self.dim,
            k_modes: self.k_modes(),
            modes: self.modes.iter().map(|z| [z.re, z.im]).collect(),
            targets: self.targets.clone(),
            residual: (!self.residual.is_nan()).then_some(self.residual),
            solver: self.meta.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("wave document serializes")
    }

    pub fn from_json(text: &str) -> Result<WaveProfile, ProfileError> {
        let doc: WaveDocument = serde_json::from_str(text).map_err(|e| ProfileError::Document(e.to_string()))?;
        if doc.modes.len() != (2 * doc.k_modes + 1) * doc.dim {
            return Err(ProfileError::Document("mode count does not match k_modes and dim".into()));
        }
        Ok(WaveProfile {
            class: doc.class,
            dim: doc.dim,
            k: doc.k,
            omega: doc.omega,
            modes: Modes::from_iterator(doc.modes.len(), doc.modes.iter().map(|p| num_complex::Complex64::new(p[0], p[1]))),
            targets: doc.targets,
            residual: doc.residual.unwrap_or(f64::NAN),
            meta: doc.solver,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct WaveDocument {
    class: SystemClass,
    #[serde(default)]
    system: Option<SystemDescriptor>,
    k: Wavenumber,
    omega: f64,
    speed: f64,
    dim: usize,
    k_modes: usize,
    modes: Vec<[f64; 2]>,
    targets: ProfileTargets,
    /// Absent for unsolved profiles.
    residual: Option<f64>,
    solver: SolverMeta,
}

/// Evaluates `u(ζ)` by exact Fourier summation.
pub fn evaluate_profile(u: &WaveProfile, zeta: f64) -> Vec<f64> {
    u.evaluate(zeta)
}

/// Modes of `u(· + s)`.
pub fn shift_profile(u: &WaveProfile, s: f64) -> Modes {
    u.shifted_modes(s)
}

/// Class vector field on the profile, `F_k(u)`, without the `−ωu′` term.
pub(crate) fn profile_vector_field(sys: &SystemSpec, space: &FourierSpace, k: f64, modes: &Modes) -> Modes {
    let f = ProfileField::new(space, k, sys.dim(), modes.clone());
    sys.vector_field(&f).modes
}

/// `−ωu′ + F_k(u)` in mode space.
pub fn profile_residual(sys: &SystemSpec, u: &WaveProfile) -> Result<Modes, ProfileError> {
    let space = FourierSpace::new(u.k_modes());
    profile_residual_on(sys, &space, u)
}

pub fn profile_residual_on(sys: &SystemSpec, space: &FourierSpace, u: &WaveProfile) -> Result<Modes, ProfileError> {
    if u.dim != sys.dim() {
        return Err(ProfileError::DimensionMismatch { expected: sys.dim(), got: u.dim });
    }
    let mut r = profile_vector_field(sys, space, u.k_value(), &u.modes);
    r -= u.dzeta() * num_complex::Complex64::new(u.omega, 0.0);
    Ok(r)
}

/// Discrete variational derivative `δ_kH[u]` in mode space.
pub(crate) fn profile_variational(sys: &SystemSpec, space: &FourierSpace, k: f64, modes: &Modes) -> Result<Modes, ProfileError> {
    let f = ProfileField::new(space, k, sys.dim(), modes.clone());
    Ok(sys.variational_derivative(&f)?.modes)
}

/// Average energy `∫H(u, D̃_k u)`.
pub(crate) fn profile_energy(sys: &SystemSpec, space: &FourierSpace, k: f64, modes: &Modes) -> Result<f64, ProfileError> {
    let f = ProfileField::new(space, k, sys.dim(), modes.clone());
    let (density, _) = sys.energy_density_flux(&f)?;
    // The density is band-limited by 4K on the padded grid; its mean is the zero mode.
    Ok(density.modes[space.k_modes()].re)
}

pub fn profile_energy_of(sys: &SystemSpec, u: &WaveProfile) -> Result<f64, ProfileError> {
    let space = FourierSpace::new(u.k_modes());
    profile_energy(sys, &space, u.k_value(), &u.modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{mode_index, symmetrize};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    pub(crate) fn lambda_omega_wave(mu: f64, c0: f64, c1: f64, p: i64, n: u64, k_modes: usize) -> (SystemSpec, WaveProfile) {
        let sys = SystemSpec::lambda_omega(mu, c0, c1);
        let k = p as f64 / n as f64;
        let r = crate::model::LambdaOmega::plane_wave_radius_sq(mu, k).sqrt();
        let omega = (c0 + c1 * r * r) / (2.0 * PI);
        let mut m = Modes::zeros(2 * (2 * k_modes + 1));
        m[mode_index(k_modes, 2, 1, 0)] = Complex64::new(r / 2.0, 0.0);
        m[mode_index(k_modes, 2, -1, 0)] = Complex64::new(r / 2.0, 0.0);
        m[mode_index(k_modes, 2, 1, 1)] = Complex64::new(0.0, -r / 2.0);
        m[mode_index(k_modes, 2, -1, 1)] = Complex64::new(0.0, r / 2.0);
        let u = WaveProfile::from_modes(&sys, Wavenumber::rational(p, n).unwrap(), omega, m).unwrap();
        (sys, u)
    }

    #[test]
    fn exact_lambda_omega_wave_has_tiny_residual() {
        let (sys, u) = lambda_omega_wave(0.5, 1.0, -1.0, 1, 6, 32);
        assert!((u.omega - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let r = profile_residual(&sys, &u).unwrap();
        assert!(fourier::sup_norm(&r) < 1e-12);
    }

    #[test]
    fn equilibrium_constant_has_zero_residual() {
        let sys = SystemSpec::lambda_omega(0.5, 1.0, -1.0);
        let m = fourier::constant(8, &[0.0, 0.0]);
        for omega in [0.0, 0.3, -2.0] {
            let u = WaveProfile::from_modes(&sys, Wavenumber::Real(0.2), omega, m.clone()).unwrap();
            assert_eq!(fourier::sup_norm(&profile_residual(&sys, &u).unwrap()), 0.0);
        }
    }

    #[test]
    fn rational_wavenumbers_reduce() {
        assert_eq!(Wavenumber::rational(2, 12).unwrap(), Wavenumber::Rational { p: 1, n: 6 });
        assert_eq!(Wavenumber::rational(-3, 9).unwrap(), Wavenumber::Rational { p: -1, n: 3 });
        assert!(matches!(Wavenumber::rational(0, 5), Err(ProfileError::ZeroWavenumber)));
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let (sys, mut u) = lambda_omega_wave(0.5, 1.0, -1.0, 1, 6, 6);
        u.modes[5] += Complex64::new(1.0 / 3.0, std::f64::consts::E * 1e-7);
        u.modes[7] = u.modes[5].conj();
        u.residual = 1.2345678901234567e-13;
        let text = u.to_json(Some(&sys));
        let back = WaveProfile::from_json(&text).unwrap();
        assert_eq!(back.omega.to_bits(), u.omega.to_bits());
        for (a, b) in back.modes.iter().zip(u.modes.iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert_eq!(back, u);
    }

    fn random_profile(k: usize, d: usize, seed: u64, amp: f64, base: &[f64]) -> Modes {
        let mut s = seed;
        let mut r = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = Modes::from_fn((2 * k + 1) * d, |i, _| {
            let n = (i / d) as f64 - k as f64;
            Complex64::new(r(), r()) * amp * (-0.7 * n.abs()).exp()
        });
        for (c, b) in base.iter().enumerate() {
            m[mode_index(k, d, 0, c)] = Complex64::new(*b, 0.0);
        }
        symmetrize(&mut m, k, d);
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn residual_is_translation_equivariant(s in -1.0f64..1.0, seed in 0u64..10_000) {
            let sys = SystemSpec::lambda_omega(0.5, 1.0, -1.0);
            let m = random_profile(8, 2, seed, 0.5, &[0.0, 0.0]);
            let u = WaveProfile::from_modes(&sys, Wavenumber::rational(1, 6).unwrap(), 0.1, m).unwrap();
            let a = fourier::shift(&profile_residual(&sys, &u).unwrap(), 2, s);
            let b = profile_residual(&sys, &u.shifted(s)).unwrap();
            prop_assert!(fourier::sup_norm(&(a - b)) < 1e-12);
        }

        #[test]
        fn mixed_conserved_residual_has_zero_mean(seed in 0u64..10_000, omega in -1.0f64..1.0) {
            let sys = SystemSpec::roll_waves(1.0, 0.1);
            let m = random_profile(10, 2, seed, 0.3, &[1.3, 1.2]);
            let u = WaveProfile::from_modes(&sys, Wavenumber::rational(-1, 6).unwrap(), omega, m).unwrap();
            let r = profile_residual(&sys, &u).unwrap();
            prop_assert!(r[mode_index(10, 2, 0, 0)].norm() < 1e-14);
        }

        #[test]
        fn hamiltonian_residual_orthogonal_to_variational_derivative(seed in 0u64..10_000, omega in -1.0f64..1.0) {
            let sys = SystemSpec::quartic_chain(1.0, 1.0, 1.0);
            let k = 10;
            let m = random_profile(k, 1, seed, 0.6, &[0.3]);
            let u = WaveProfile::from_modes(&sys, Wavenumber::rational(1, 5).unwrap(), omega, m).unwrap();
            let space = FourierSpace::new(k);
            let r = profile_residual(&sys, &u).unwrap();
            let dh = profile_variational(&sys, &space, u.k_value(), &u.modes).unwrap();
            prop_assert!(fourier::pairing(&dh, &r).norm() < 1e-12);
        }
    }
}

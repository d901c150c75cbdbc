//! Initial guesses from the linearization about constant states.

use num_complex::Complex64;

use super::{ProfileError, WaveProfile, Wavenumber};
use crate::fourier::{self, mode_index, Modes};
use crate::linalg::{eig_dense, EigenPair};
use crate::model::SystemSpec;

/// Most unstable eigenpair of the constant-state symbol at `θ = 2πk`; ties in
/// the real part are broken towards positive imaginary part.
pub fn constant_state_mode(sys: &SystemSpec, state: &[f64], k: f64) -> EigenPair {
    let a = sys.constant_state_symbol(state, 2.0 * std::f64::consts::PI * k);
    let mut pairs = eig_dense(&a).expect("small dense eigenproblem");
    pairs.sort_by(|x, y| {
        let dr = y.value.re - x.value.re;
        if dr.abs() > 1e-9 {
            dr.total_cmp(&0.0)
        } else {
            y.value.im.total_cmp(&x.value.im)
        }
    });
    pairs.swap_remove(0)
}

/// Small-amplitude linear wave `state + 2 Re(a v e^{2πiζ})` with `ω = Im λ / 2π`,
/// scaled so that `|c₁|` of `component` equals `amplitude`.
pub fn linear_seed(
    sys: &SystemSpec,
    k: Wavenumber,
    state: &[f64],
    amplitude: f64,
    component: usize,
    k_modes: usize,
) -> Result<WaveProfile, ProfileError> {
    let d = sys.dim();
    if state.len() != d {
        return Err(ProfileError::DimensionMismatch { expected: d, got: state.len() });
    }
    if component >= d {
        return Err(ProfileError::InvalidTargets("seed component out of range".into()));
    }
    let pair = constant_state_mode(sys, state, k.value());
    let pivot = pair.vector[component];
    if pivot.norm() < 1e-12 {
        return Err(ProfileError::InvalidTargets("critical mode does not excite the chosen component".into()));
    }
    let v = &pair.vector * (Complex64::new(amplitude, 0.0) / pivot);
    let mut modes: Modes = fourier::constant(k_modes, state);
    for c in 0..d {
        modes[mode_index(k_modes, d, 1, c)] = v[c];
        modes[mode_index(k_modes, d, -1, c)] = v[c].conj();
    }
    WaveProfile::from_modes(sys, k, pair.value.im / (2.0 * std::f64::consts::PI), modes)
}

/// Conserved average at which the constant equilibrium loses stability to the
/// mode at wavenumber `k`, by bisection of the leading growth rate over `[lo, hi]`.
pub fn hopf_mean(sys: &SystemSpec, k: f64, means: &[f64], component: usize, lo: f64, hi: f64) -> Option<f64> {
    let growth = |m: f64| {
        let mut mm = means.to_vec();
        mm[component] = m;
        let state = sys.constant_equilibrium(&mm)?;
        Some(constant_state_mode(sys, &state, k).value.re)
    };
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (growth(a)?, growth(b)?);
    if ga.signum() == gb.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let gm = growth(m)?;
        if gm.signum() == ga.signum() {
            a = m;
        } else {
            b = m;
        }
        if (b - a).abs() < 1e-15 * a.abs().max(1.0) {
            break;
        }
    }
    Some(0.5 * (a + b))
}

//! Natural-parameter continuation of wave families with a secant predictor.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{solve_profile, NewtonOptions, ProfileError, ProfileTargets, WaveProfile, Wavenumber};
use crate::fourier::{self, mode_index};
use crate::model::SystemSpec;
use crate::whitham::{averaged_fluxes, AveragedFluxes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "name", content = "index")]
pub enum ContinuationParameter {
    Wavenumber,
    Mean(usize),
    Energy,
    /// Amplitude of the anchored component (requires an amplitude anchor).
    Amplitude,
}

impl ContinuationParameter {
    pub fn value_of(&self, u: &WaveProfile) -> f64 {
        match *self {
            ContinuationParameter::Wavenumber => u.k_value(),
            ContinuationParameter::Mean(i) => u.means()[i],
            ContinuationParameter::Energy => u.targets.energy.unwrap_or(f64::NAN),
            ContinuationParameter::Amplitude => match u.targets.anchor {
                Some(a) => u.modes[mode_index(u.k_modes(), u.dim, 1, a.component)].norm(),
                None => f64::NAN,
            },
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ContinuationParameter::Wavenumber => "k".into(),
            ContinuationParameter::Mean(i) => format!("M{i}"),
            ContinuationParameter::Energy => "E".into(),
            ContinuationParameter::Amplitude => "A".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ContinuationOptions {
    pub newton: NewtonOptions,
    /// Upper bound on the distance between consecutive samples in (modes, ω, parameter).
    pub max_arclength: f64,
    /// Smallest admissible step as a fraction of the requested one.
    pub min_step_fraction: f64,
    /// Denominator bound when recognizing rational wavenumbers.
    pub max_denominator: u64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { newton: NewtonOptions::default(), max_arclength: 0.5, min_step_fraction: 1.0 / 256.0, max_denominator: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationSample {
    pub parameter: f64,
    pub omega: f64,
    pub fluxes: AveragedFluxes,
    pub wave: WaveProfile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationCurve {
    pub parameter: ContinuationParameter,
    pub samples: Vec<ContinuationSample>,
    pub complete: bool,
    /// Number of step halvings performed.
    pub halvings: usize,
    pub max_gap: f64,
}

impl ContinuationCurve {
    pub fn parameters(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.parameter).collect()
    }

    pub fn last(&self) -> &ContinuationSample {
        self.samples.last().expect("curve holds its seed")
    }
}

impl Wavenumber {
    /// Rational representation when `x` equals some `p/n` with `n ≤ max_den` to rounding.
    pub fn recognize(x: f64, max_den: u64) -> Wavenumber {
        for n in 1..=max_den {
            let p = (x * n as f64).round();
            if p != 0.0 && (p / n as f64 - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
                return Wavenumber::rational(p as i64, n).expect("nonzero");
            }
        }
        Wavenumber::Real(x)
    }
}

fn distance(a: &WaveProfile, b: &WaveProfile, pa: f64, pb: f64) -> f64 {
    let dm = if a.modes.len() == b.modes.len() { (&a.modes - &b.modes).norm() } else { f64::INFINITY };
    (dm * dm + (a.omega - b.omega).powi(2) + (pa - pb).powi(2)).sqrt()
}

fn sample(sys: &SystemSpec, parameter: ContinuationParameter, wave: WaveProfile) -> ContinuationSample {
    ContinuationSample { parameter: parameter.value_of(&wave), omega: wave.omega, fluxes: averaged_fluxes(sys, &wave), wave }
}

/// Continues `seed` through the parameter `values` in order, inserting
/// halved intermediate steps when the corrector fails.
pub fn continue_family(
    sys: &SystemSpec,
    seed: &WaveProfile,
    parameter: ContinuationParameter,
    values: &[f64],
    opts: &ContinuationOptions,
) -> Result<ContinuationCurve, ProfileError> {
    if parameter == ContinuationParameter::Amplitude && seed.targets.anchor.is_none() {
        return Err(ProfileError::InvalidTargets("amplitude continuation needs an anchored seed".into()));
    }
    let mut curve = ContinuationCurve { parameter, samples: vec![sample(sys, parameter, seed.clone())], complete: true, halvings: 0, max_gap: 0.0 };
    for &target in values {
        let mut here = curve.last().parameter;
        if (target - here).abs() <= 1e-14 * target.abs().max(1.0) {
            continue;
        }
        let full = target - here;
        let mut h = full;
        while (target - here).abs() > 1e-14 * target.abs().max(1.0) {
            if h.abs() < opts.min_step_fraction * full.abs() {
                curve.complete = false;
                return Err(ProfileError::StepUnderflow { at: here, partial: Box::new(curve) });
            }
            let next = if (target - here).abs() <= h.abs() * (1.0 + 1e-12) { target } else { here + h };
            match step(sys, &curve, parameter, next, opts) {
                Ok(wave) => {
                    let gap = distance(&curve.last().wave, &wave, here, next);
                    if gap > opts.max_arclength {
                        h *= 0.5;
                        curve.halvings += 1;
                        continue;
                    }
                    curve.max_gap = curve.max_gap.max(gap);
                    let mut s = sample(sys, parameter, wave);
                    s.parameter = next;
                    curve.samples.push(s);
                    here = next;
                    h = (target - here).signum() * h.abs();
                }
                Err(_) => {
                    h *= 0.5;
                    curve.halvings += 1;
                }
            }
        }
    }
    Ok(curve)
}

fn step(
    sys: &SystemSpec,
    curve: &ContinuationCurve,
    parameter: ContinuationParameter,
    next: f64,
    opts: &ContinuationOptions,
) -> Result<WaveProfile, ProfileError> {
    let last = curve.last();
    let mut guess = last.wave.clone();
    if curve.samples.len() >= 2 {
        let prev = &curve.samples[curve.samples.len() - 2];
        let dp = last.parameter - prev.parameter;
        if dp != 0.0 && prev.wave.modes.len() == guess.modes.len() {
            let t = (next - last.parameter) / dp;
            guess.modes += (&last.wave.modes - &prev.wave.modes) * Complex64::new(t, 0.0);
            guess.omega += (last.wave.omega - prev.wave.omega) * t;
            let km = guess.k_modes();
            fourier::symmetrize(&mut guess.modes, km, guess.dim);
        }
    }
    let mut targets: ProfileTargets = last.wave.targets.clone();
    let mut k = last.wave.k;
    match parameter {
        ContinuationParameter::Wavenumber => k = Wavenumber::recognize(next, opts.max_denominator),
        ContinuationParameter::Mean(i) => {
            if i >= targets.means.len() {
                return Err(ProfileError::InvalidTargets(format!("no conserved average {i}")));
            }
            targets.means[i] = next;
        }
        ContinuationParameter::Energy => targets.energy = Some(next),
        ContinuationParameter::Amplitude => {
            if let Some(a) = targets.anchor.as_mut() {
                a.amplitude = next;
            }
        }
    }
    guess.k = k;
    solve_profile(sys, k, &targets, &guess, &opts.newton)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::tests::lambda_omega_wave;
    use std::f64::consts::PI;

    #[test]
    fn lambda_omega_dispersion_along_wavenumbers() {
        let (sys, u) = lambda_omega_wave(0.5, 1.0, -1.0, 1, 8, 16);
        let curve = continue_family(&sys, &u, ContinuationParameter::Wavenumber, &[1.0 / 8.0, 1.0 / 7.0, 1.0 / 6.0], &Default::default()).unwrap();
        assert!(curve.complete);
        for s in &curve.samples {
            let k = s.parameter;
            let exact = (1.0 - (1.0 - 2.0 * 0.5 * (1.0 - (2.0 * PI * k).cos()))) / (2.0 * PI);
            assert!((s.omega - exact).abs() < 1e-8, "k={k}: {} vs {exact}", s.omega);
        }
        assert_eq!(curve.last().wave.k, Wavenumber::Rational { p: 1, n: 6 });
    }

    #[test]
    fn empty_range_returns_seed() {
        let (sys, u) = lambda_omega_wave(0.5, 1.0, -1.0, 1, 6, 8);
        let curve = continue_family(&sys, &u, ContinuationParameter::Wavenumber, &[1.0 / 6.0], &Default::default()).unwrap();
        assert_eq!(curve.samples.len(), 1);
        assert_eq!(curve.samples[0].wave.modes, u.modes);
    }

    #[test]
    fn recognizes_rationals() {
        assert_eq!(Wavenumber::recognize(1.0 / 7.0, 100), Wavenumber::Rational { p: 1, n: 7 });
        assert_eq!(Wavenumber::recognize(-3.0 / 8.0, 100), Wavenumber::Rational { p: -3, n: 8 });
        assert!(matches!(Wavenumber::recognize(0.1234567, 100), Wavenumber::Real(_)));
    }
}

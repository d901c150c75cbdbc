//! One-period evolution of the Bloch symbol and its ξ-expansion.

use nalgebra::DMatrixView;
use num_complex::Complex64;
use std::ops::Sub;

use super::{BlochError, SymbolGenerator};
use crate::linalg::CMat;
use crate::ode::{integrate, OdeOptions, OdeStats};

pub const DEFAULT_TOL: f64 = 1e-11;
const TRACE_SAMPLES: usize = 256;

#[derive(Clone, Debug)]
pub struct BlochMonodromy {
    pub xi: f64,
    /// `S_ξ(1/ω, 0)`.
    pub s0: CMat,
    /// Coefficients of `iξ` and `(iξ)²` (expansion runs only).
    pub s1: Option<CMat>,
    pub s2: Option<CMat>,
    /// `|det S / exp ∫ trace A − 1|`.
    pub liouville_defect: f64,
    pub tol: f64,
    pub stats: OdeStats,
}

fn identity_flat(n: usize, blocks: usize) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); blocks * n * n];
    for i in 0..n {
        y[i * n + i] = Complex64::new(1.0, 0.0);
    }
    y
}

/// Number of sub-intervals keeping each propagator within `e^{±4}` of the identity.
fn pieces(gen: &SymbolGenerator, t0: f64, t1: f64) -> usize {
    let span = (t1 - t0).abs();
    let rate = (0..8)
        .map(|i| gen.at(t0 + (t1 - t0) * i as f64 / 8.0).iter().map(|z| z.norm()).fold(0.0f64, f64::max) * gen.size() as f64)
        .fold(0.0f64, f64::max);
    ((span * rate / 4.0).ceil() as usize).max(1)
}

/// Truncated power series in `iξ` with matrix coefficients.
type Series = Vec<CMat>;

fn compose(later: &Series, earlier: &Series) -> Series {
    (0..later.len())
        .map(|o| (0..=o).map(|i| &later[i] * &earlier[o - i]).fold(CMat::zeros(later[0].nrows(), later[0].ncols()), |a, b| a + b))
        .collect()
}

/// Propagator series over `[t0, t1]` for `orders` expansion orders, split into well-conditioned pieces;
/// also returns `Σ ln det` of the zeroth-order pieces.
fn propagate(gen: &SymbolGenerator, t0: f64, t1: f64, orders: usize, tol: f64) -> Result<(Series, Complex64, OdeStats), BlochError> {
    let n = gen.size();
    let nn = n * n;
    let m = pieces(gen, t0, t1);
    let mut total: Series = (0..orders).map(|o| if o == 0 { CMat::identity(n, n) } else { CMat::zeros(n, n) }).collect();
    let mut log_det = Complex64::new(0.0, 0.0);
    let mut stats = OdeStats::default();
    for p in 0..m {
        let a = t0 + (t1 - t0) * p as f64 / m as f64;
        let b = t0 + (t1 - t0) * (p + 1) as f64 / m as f64;
        let sol = integrate(
            |t, y: &[Complex64], dy: &mut [Complex64]| {
                if orders == 1 {
                    let prod = gen.at(t) * DMatrixView::from_slice(y, n, n);
                    dy.copy_from_slice(prod.as_slice());
                    return;
                }
                let ak = gen.all_orders(t);
                for o in 0..orders {
                    let mut acc = CMat::zeros(n, n);
                    for i in 0..=o {
                        acc += &ak[i] * DMatrixView::from_slice(&y[(o - i) * nn..(o - i + 1) * nn], n, n);
                    }
                    dy[o * nn..(o + 1) * nn].copy_from_slice(acc.as_slice());
                }
            },
            a,
            &identity_flat(n, orders),
            b,
            &[],
            &OdeOptions::with_tol(tol),
        )?;
        stats.accepted += sol.stats.accepted;
        stats.rejected += sol.stats.rejected;
        stats.evaluations += sol.stats.evaluations;
        let piece: Series = (0..orders).map(|o| CMat::from_column_slice(n, n, &sol.y_end[o * nn..(o + 1) * nn])).collect();
        log_det += piece[0].determinant().ln();
        total = compose(&piece, &total);
    }
    Ok((total, log_det, stats))
}

/// Relative Liouville defect `|det S / exp ∫ trace A − 1|`, with `det S` taken as the product of the piece determinants.
fn liouville(gen: &SymbolGenerator, log_det: Complex64) -> f64 {
    (log_det - gen.trace_integral(TRACE_SAMPLES)).exp().sub(1.0).norm()
}

/// `S_ξ(t1, t0)`.
pub fn evolution(gen: &SymbolGenerator, t0: f64, t1: f64, tol: f64) -> Result<CMat, BlochError> {
    Ok(propagate(gen, t0, t1, 1, tol)?.0.remove(0))
}

pub fn monodromy(gen: &SymbolGenerator, tol: f64) -> Result<BlochMonodromy, BlochError> {
    let (mut s, log_det, stats) = propagate(gen, 0.0, gen.period(), 1, tol)?;
    let liouville_defect = liouville(gen, log_det);
    Ok(BlochMonodromy { xi: gen.xi(), s0: s.remove(0), s1: None, s2: None, liouville_defect, tol, stats })
}

/// Integrates the block-triangular system for `(S, S⁽¹⁾, S⁽²⁾)`; at `ξ = 0` these are
/// the Taylor coefficients of `S_ξ` in powers of `iξ`.
pub fn monodromy_expansion(gen: &SymbolGenerator, tol: f64) -> Result<BlochMonodromy, BlochError> {
    let (s, log_det, stats) = propagate(gen, 0.0, gen.period(), 3, tol)?;
    let liouville_defect = liouville(gen, log_det);
    let mut it = s.into_iter();
    let s0 = it.next().expect("order 0");
    Ok(BlochMonodromy { xi: gen.xi(), s0, s1: it.next(), s2: it.next(), liouville_defect, tol, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::symbol_generator;
    use crate::fourier;
    use crate::linalg::eigenvalues;
    use crate::model::{LinearReaction, SystemSpec};
    use crate::presets::{lambda_omega_exact, Preset, WaveRequest};
    use crate::profile::{NewtonOptions, WaveProfile, Wavenumber};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn lo() -> (SystemSpec, WaveProfile) {
        let sys = SystemSpec::lambda_omega(0.5, 1.0, -1.0);
        let u = lambda_omega_exact(0.5, 1.0, -1.0, Wavenumber::rational(1, 6).unwrap(), 8).unwrap();
        (sys, u)
    }

    #[test]
    fn scalar_decay_oracle() {
        // N = 1 needs k integer; k = 1 puts every site in phase.
        let sys = SystemSpec::reaction_diffusion(1.0, Arc::new(LinearReaction { matrix: DMatrix::from_element(1, 1, -1.0) }));
        let u = WaveProfile::from_modes(&sys, Wavenumber::rational(1, 1).unwrap(), 1.0, fourier::constant(2, &[0.0])).unwrap();
        let g = symbol_generator(&sys, &u, PI).unwrap();
        let m = monodromy(&g, 1e-12).unwrap();
        assert_eq!(m.s0.nrows(), 1);
        assert!((m.s0[(0, 0)].re - (-5.0f64).exp()).abs() < 1e-10);
        assert!(m.s0[(0, 0)].im.abs() < 1e-14);
    }

    #[test]
    fn unit_multiplier_and_liouville() {
        let (sys, u) = lo();
        let m = monodromy(&symbol_generator(&sys, &u, 0.0).unwrap(), DEFAULT_TOL).unwrap();
        let ev = eigenvalues(&m.s0).unwrap();
        let best = ev.iter().map(|z| (z - 1.0).norm()).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-8, "{best}");
        assert!(m.liouville_defect < 1e-8, "{} det {} ", m.liouville_defect, m.s0.determinant());
        for xi in [0.13, -0.41, 0.5] {
            let m = monodromy(&symbol_generator(&sys, &u, xi).unwrap(), DEFAULT_TOL).unwrap();
            assert!(m.liouville_defect < 1e-8, "{xi}: {}", m.liouville_defect);
        }
    }

    #[test]
    fn semigroup_property() {
        let (sys, u) = lo();
        let g = symbol_generator(&sys, &u, 0.2).unwrap();
        let t = 0.37 * g.period();
        let full = monodromy(&g, 1e-11).unwrap().s0;
        let split = evolution(&g, t, g.period(), 1e-11).unwrap() * evolution(&g, 0.0, t, 1e-11).unwrap();
        assert!((full - split).norm() < 1e-8);
    }

    #[test]
    fn uncoupled_expansion_vanishes() {
        let sys = SystemSpec::lambda_omega(0.0, 1.0, -0.5);
        let u = lambda_omega_exact(0.0, 1.0, -0.5, Wavenumber::rational(1, 3).unwrap(), 4).unwrap();
        let m = monodromy_expansion(&symbol_generator(&sys, &u, 0.0).unwrap(), DEFAULT_TOL).unwrap();
        assert_eq!(m.s1.unwrap().norm(), 0.0);
        assert_eq!(m.s2.unwrap().norm(), 0.0);
    }

    #[test]
    fn expansion_remainder_is_cubic() {
        let p = Preset::RollWaves { eta: 1.0, nu: 0.1 };
        let req = WaveRequest { k: (-1, 6), k_modes: 16, amplitude: 0.185, means: None, energy: None, base_mean: None };
        let sys = p.system();
        let u = p.wave(&req, &NewtonOptions::default()).unwrap();
        let tol = 1e-12;
        let e = monodromy_expansion(&symbol_generator(&sys, &u, 0.0).unwrap(), tol).unwrap();
        let (s0, s1, s2) = (e.s0, e.s1.unwrap(), e.s2.unwrap());
        let n = 6.0;
        let mut pts = Vec::new();
        for j in 3..=6 {
            let xi = PI / n * 0.5f64.powi(j);
            let s = monodromy(&symbol_generator(&sys, &u, xi).unwrap(), tol).unwrap().s0;
            let iz = Complex64::new(0.0, xi);
            let r = (s - &s0 - &s1 * iz - &s2 * (iz * iz)).norm();
            pts.push((xi.ln(), r.ln()));
        }
        let slope = crate::validate::loglog_slope(&pts);
        assert!(slope >= 2.7, "slope {slope}");
    }
}

//! Time-periodic Bloch symbols of the linearization about a commensurable wave.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::BlochError;
use crate::fourier::{self, Modes};
use crate::linalg::{CMat, CVec};
use crate::model::{LocalStencil, SystemSpec};
use crate::profile::WaveProfile;

#[derive(Clone, Debug)]
struct TermSymbols {
    left: [CMat; 3],
    right: [CMat; 3],
}

/// `t ↦ A_ξ(t)`, the `Nd×Nd` symbol at Bloch exponent `ξ`, together with the
/// expansion blocks `A⁽¹⁾`, `A⁽²⁾` of the shift parts at `ξ = 0`.
#[derive(Clone, Debug)]
pub struct SymbolGenerator<'a> {
    sys: &'a SystemSpec,
    wave: &'a WaveProfile,
    n: usize,
    xi: f64,
    terms: Vec<TermSymbols>,
}

impl<'a> SymbolGenerator<'a> {
    pub fn sys(&self) -> &SystemSpec {
        self.sys
    }

    pub fn wave(&self) -> &WaveProfile {
        self.wave
    }

    pub fn period_sites(&self) -> usize {
        self.n
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn size(&self) -> usize {
        self.n * self.sys.dim()
    }

    /// Temporal period `1/ω`.
    pub fn period(&self) -> f64 {
        1.0 / self.wave.omega
    }

    fn local_blocks(&self, t: f64) -> Vec<Vec<DMatrix<f64>>> {
        let d = self.sys.dim();
        let n = self.n;
        let k = self.wave.k_value();
        let vals: Vec<Vec<f64>> = (0..n)
            .map(|j| fourier::evaluate(&self.wave.modes, d, (k * j as f64 + self.wave.omega * t).rem_euclid(1.0)))
            .collect();
        (0..n)
            .map(|j| {
                let st = LocalStencil { prev: &vals[(j + n - 1) % n], here: &vals[j], next: &vals[(j + 1) % n] };
                self.sys.local_blocks(&st)
            })
            .collect()
    }

    fn assemble(&self, blocks: &[Vec<DMatrix<f64>>], a: usize, left: &CMat, right: &CMat) -> CMat {
        let d = self.sys.dim();
        let mut mid = CMat::zeros(self.size(), self.size());
        for (j, b) in blocks.iter().enumerate() {
            for r in 0..d {
                for c in 0..d {
                    mid[(j * d + r, j * d + c)] = Complex64::new(b[a][(r, c)], 0.0);
                }
            }
        }
        left * mid * right
    }

    /// `A_ξ(t)`.
    pub fn at(&self, t: f64) -> CMat {
        self.expansion(t, 0)
    }

    /// Order-`j` expansion block: `j = 0` gives `A_ξ(t)`, `j = 1, 2` give
    /// `A⁽¹⁾(t)`, `A⁽²⁾(t)` (coefficients of `iξ`, `(iξ)²`) at the generator's `ξ`.
    pub fn expansion(&self, t: f64, order: usize) -> CMat {
        let blocks = self.local_blocks(t);
        let mut out = CMat::zeros(self.size(), self.size());
        for (a, ts) in self.terms.iter().enumerate() {
            for i in 0..=order.min(2) {
                if order - i <= 2 {
                    out += self.assemble(&blocks, a, &ts.left[i], &ts.right[order - i]);
                }
            }
        }
        out
    }

    /// `(A, A⁽¹⁾, A⁽²⁾)` sharing one evaluation of the profile.
    pub fn all_orders(&self, t: f64) -> [CMat; 3] {
        let blocks = self.local_blocks(t);
        let mut out = [CMat::zeros(self.size(), self.size()), CMat::zeros(self.size(), self.size()), CMat::zeros(self.size(), self.size())];
        for (a, ts) in self.terms.iter().enumerate() {
            for (order, o) in out.iter_mut().enumerate() {
                for i in 0..=order {
                    *o += self.assemble(&blocks, a, &ts.left[i], &ts.right[order - i]);
                }
            }
        }
        out
    }

    /// `∫₀^{1/ω} trace A_ξ(t) dt` by the trapezoid rule on `samples` points (spectrally accurate for periodic integrands).
    pub fn trace_integral(&self, samples: usize) -> Complex64 {
        let tp = self.period();
        let s: Complex64 = (0..samples).map(|i| self.at(tp * i as f64 / samples as f64).trace()).sum();
        s * (tp / samples as f64)
    }
}

pub fn symbol_generator<'a>(sys: &'a SystemSpec, u: &'a WaveProfile, xi: f64) -> Result<SymbolGenerator<'a>, BlochError> {
    let (_, n) = u.k.as_rational().ok_or(BlochError::IrrationalWavenumber)?;
    let n = n as usize;
    let terms = sys
        .linear_terms()
        .into_iter()
        .map(|t| {
            let (l1, l2) = t.left.bloch_expand();
            let (r1, r2) = t.right.bloch_expand();
            TermSymbols {
                left: [t.left.symbol_matrix(xi, n), l1.symbol_matrix(xi, n), l2.symbol_matrix(xi, n)],
                right: [t.right.symbol_matrix(xi, n), r1.symbol_matrix(xi, n), r2.symbol_matrix(xi, n)],
            }
        })
        .collect();
    Ok(SymbolGenerator { sys, wave: u, n, xi, terms })
}

/// Lattice lift `V^v(t)_j = v(kj + ωt)`, `j = 0..N−1`.
pub fn lift(v: &Modes, d: usize, k: f64, omega: f64, n: usize, t: f64) -> CVec {
    let km = fourier::k_modes_of(v, d) as i64;
    let mut out = CVec::zeros(n * d);
    for j in 0..n {
        let zeta = (k * j as f64 + omega * t).rem_euclid(1.0);
        for m in -km..=km {
            let ph = fourier::phase(m, zeta);
            for c in 0..d {
                out[j * d + c] += v[fourier::mode_index(km as usize, d, m, c)] * ph;
            }
        }
    }
    out
}

/// Lift of a profile-space vector along the wave `u`.
pub fn lift_along(u: &WaveProfile, v: &Modes, t: f64) -> Result<CVec, BlochError> {
    let (_, n) = u.k.as_rational().ok_or(BlochError::IrrationalWavenumber)?;
    Ok(lift(v, u.dim, u.k_value(), u.omega, n as usize, t))
}

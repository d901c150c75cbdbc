//! Truncated Fourier representation of 1-periodic profiles `u(ζ) = Σ_{|n|≤K} c_n e^{2πinζ}`.
//!
//! Mode vectors are flat: entry `(n + K)·d + c` holds component `c` of `c_n`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::model::LatticeField;
use crate::shift::ShiftPolynomial;

pub type Modes = DVector<Complex64>;

#[derive(Clone)]
pub struct FourierSpace {
    k_modes: usize,
    grid: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierSpace").field("k_modes", &self.k_modes).field("grid", &self.grid).finish()
    }
}

impl FourierSpace {
    /// `K` modes with a twice-padded collocation grid of `4K + 2` points.
    pub fn new(k_modes: usize) -> Self {
        Self::with_grid(k_modes, 4 * k_modes + 2)
    }

    pub fn with_grid(k_modes: usize, grid: usize) -> Self {
        assert!(grid > 2 * k_modes, "grid must resolve all retained modes");
        let mut planner = FftPlanner::new();
        FourierSpace {
            k_modes,
            grid,
            fwd: planner.plan_fft_forward(grid),
            inv: planner.plan_fft_inverse(grid),
        }
    }

    pub fn k_modes(&self) -> usize {
        self.k_modes
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn n_modes(&self) -> usize {
        2 * self.k_modes + 1
    }

    /// Values on the grid `ζ_i = i / grid`, point-major (`i·d + c`).
    pub fn to_grid(&self, modes: &Modes, d: usize) -> Vec<f64> {
        let k = self.k_modes as i64;
        assert_eq!(modes.len(), self.n_modes() * d);
        let mut out = vec![0.0; self.grid * d];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.grid];
        for c in 0..d {
            buf.fill(Complex64::new(0.0, 0.0));
            for n in -k..=k {
                let slot = n.rem_euclid(self.grid as i64) as usize;
                buf[slot] = modes[mode_index(k as usize, d, n, c)];
            }
            self.inv.process(&mut buf);
            for (i, z) in buf.iter().enumerate() {
                out[i * d + c] = z.re;
            }
        }
        out
    }

    /// Truncated Fourier coefficients of grid data, with exact Hermitian symmetry.
    pub fn from_grid(&self, values: &[f64], d: usize) -> Modes {
        self.from_grid_truncated(values, d, self.k_modes)
    }

    /// As [`FourierSpace::from_grid`] but keeping `|n| ≤ keep` (at most the grid Nyquist).
    pub fn from_grid_truncated(&self, values: &[f64], d: usize, keep: usize) -> Modes {
        assert_eq!(values.len(), self.grid * d);
        assert!(2 * keep < self.grid);
        let kk = keep as i64;
        let mut out = Modes::zeros((2 * keep + 1) * d);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.grid];
        let scale = 1.0 / self.grid as f64;
        for c in 0..d {
            for (i, z) in buf.iter_mut().enumerate() {
                *z = Complex64::new(values[i * d + c], 0.0);
            }
            self.fwd.process(&mut buf);
            for n in -kk..=kk {
                let slot = n.rem_euclid(self.grid as i64) as usize;
                out[mode_index(keep, d, n, c)] = buf[slot] * scale;
            }
        }
        symmetrize(&mut out, keep, d);
        out
    }

    /// Pointwise map evaluated on the padded grid and projected back to `K` modes.
    pub fn map(&self, u: &Modes, d: usize, out_dim: usize, f: &dyn Fn(&[f64], &mut [f64])) -> Modes {
        let g = self.to_grid(u, d);
        let mut o = vec![0.0; self.grid * out_dim];
        for i in 0..self.grid {
            f(&g[i * d..(i + 1) * d], &mut o[i * out_dim..(i + 1) * out_dim]);
        }
        self.from_grid(&o, out_dim)
    }

    /// Mean of a pointwise function of the profile, exact for band-limited integrands.
    pub fn grid_mean(&self, u: &Modes, d: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let g = self.to_grid(u, d);
        (0..self.grid).map(|i| f(&g[i * d..(i + 1) * d])).sum::<f64>() / self.grid as f64
    }
}

pub fn mode_index(k_modes: usize, d: usize, n: i64, c: usize) -> usize {
    (n + k_modes as i64) as usize * d + c
}

pub fn k_modes_of(modes: &Modes, d: usize) -> usize {
    assert!(modes.len().is_multiple_of(d) && (modes.len() / d) % 2 == 1, "malformed mode vector");
    (modes.len() / d - 1) / 2
}

/// Enforces `c_{-n} = conj(c_n)` by averaging.
pub fn symmetrize(modes: &mut Modes, k_modes: usize, d: usize) {
    let k = k_modes as i64;
    for c in 0..d {
        let i0 = mode_index(k_modes, d, 0, c);
        modes[i0] = Complex64::new(modes[i0].re, 0.0);
        for n in 1..=k {
            let ip = mode_index(k_modes, d, n, c);
            let im = mode_index(k_modes, d, -n, c);
            let avg = (modes[ip] + modes[im].conj()) * 0.5;
            modes[ip] = avg;
            modes[im] = avg.conj();
        }
    }
}

/// Largest violation of Hermitian symmetry.
pub fn hermitian_defect(modes: &Modes, d: usize) -> f64 {
    let k = k_modes_of(modes, d);
    let mut worst = 0.0f64;
    for c in 0..d {
        for n in 0..=k as i64 {
            let a = modes[mode_index(k, d, n, c)];
            let b = modes[mode_index(k, d, -n, c)];
            worst = worst.max((a - b.conj()).norm());
        }
    }
    worst
}

/// `d/dζ`: multiplies mode `n` by `2πin`.
pub fn derivative(modes: &Modes, d: usize) -> Modes {
    let k = k_modes_of(modes, d) as i64;
    Modes::from_fn(modes.len(), |i, _| {
        let n = (i / d) as i64 - k;
        modes[i] * Complex64::new(0.0, 2.0 * PI * n as f64)
    })
}

/// Modes of `u(· + s)`.
pub fn shift(modes: &Modes, d: usize, s: f64) -> Modes {
    let k = k_modes_of(modes, d) as i64;
    Modes::from_fn(modes.len(), |i, _| {
        let n = (i / d) as i64 - k;
        modes[i] * phase(n, s)
    })
}

/// `e^{2πins}` with the argument reduced modulo one before scaling.
pub fn phase(n: i64, s: f64) -> Complex64 {
    let x = (n as f64 * s).rem_euclid(1.0);
    Complex64::from_polar(1.0, 2.0 * PI * x)
}

/// `L²(0,1)` pairing `⟨a, b⟩ = Σ conj(a_n)·b_n`.
pub fn pairing(a: &Modes, b: &Modes) -> Complex64 {
    a.dotc(b)
}

pub fn evaluate(modes: &Modes, d: usize, zeta: f64) -> Vec<f64> {
    let k = k_modes_of(modes, d) as i64;
    let mut out = vec![0.0; d];
    for n in -k..=k {
        let e = phase(n, zeta);
        for (c, o) in out.iter_mut().enumerate() {
            *o += (modes[mode_index(k as usize, d, n, c)] * e).re;
        }
    }
    out
}

/// Zero-mode (average) per component.
pub fn mean(modes: &Modes, d: usize) -> Vec<f64> {
    let k = k_modes_of(modes, d);
    (0..d).map(|c| modes[mode_index(k, d, 0, c)].re).collect()
}

/// Constant profile.
pub fn constant(k_modes: usize, value: &[f64]) -> Modes {
    let d = value.len();
    let mut m = Modes::zeros((2 * k_modes + 1) * d);
    for (c, v) in value.iter().enumerate() {
        m[mode_index(k_modes, d, 0, c)] = Complex64::new(*v, 0.0);
    }
    m
}

/// Re-truncates to `new_k` modes (zero-padding when growing).
pub fn resize(modes: &Modes, d: usize, new_k: usize) -> Modes {
    let k = k_modes_of(modes, d) as i64;
    let mut out = Modes::zeros((2 * new_k + 1) * d);
    let m = k.min(new_k as i64);
    for n in -m..=m {
        for c in 0..d {
            out[mode_index(new_k, d, n, c)] = modes[mode_index(k as usize, d, n, c)];
        }
    }
    out
}

pub fn sup_norm(v: &Modes) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// A profile viewed as a lattice field in which `𝐓` is the shift by `k`.
#[derive(Clone)]
pub struct ProfileField<'a> {
    pub space: &'a FourierSpace,
    pub k: f64,
    pub dim: usize,
    pub modes: Modes,
}

impl<'a> ProfileField<'a> {
    pub fn new(space: &'a FourierSpace, k: f64, dim: usize, modes: Modes) -> Self {
        assert_eq!(modes.len(), space.n_modes() * dim);
        ProfileField { space, k, dim, modes }
    }
}

/// Applies a shift polynomial to a mode vector, `𝐓` acting as the shift by `k`.
pub fn apply_shift_op(op: &ShiftPolynomial, modes: &Modes, k: f64) -> Modes {
    let d = op.dim();
    let km = k_modes_of(modes, d) as i64;
    let mut out = Modes::zeros(modes.len());
    for n in -km..=km {
        let base = ((n + km) as usize) * d;
        for (p, a) in op.terms() {
            let ph = phase(n * p, k);
            for r in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..d {
                    acc += modes[base + c] * a[(r, c)];
                }
                out[base + r] += acc * ph;
            }
        }
    }
    out
}

impl LatticeField for ProfileField<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_op(&self, op: &ShiftPolynomial) -> Self {
        assert_eq!(op.dim(), self.dim);
        ProfileField { modes: apply_shift_op(op, &self.modes, self.k), ..self.clone() }
    }

    fn map_local(&self, out_dim: usize, f: &dyn Fn(&[f64], &mut [f64])) -> Self {
        let modes = self.space.map(&self.modes, self.dim, out_dim, f);
        ProfileField { space: self.space, k: self.k, dim: out_dim, modes }
    }

    fn map_pair(
        &self,
        other: &Self,
        out_dim: usize,
        f: &dyn Fn(&[f64], &[f64], &mut [f64]),
    ) -> Self {
        let (d1, d2) = (self.dim, other.dim);
        let g1 = self.space.to_grid(&self.modes, d1);
        let g2 = self.space.to_grid(&other.modes, d2);
        let m = self.space.grid();
        let mut o = vec![0.0; m * out_dim];
        for i in 0..m {
            f(&g1[i * d1..(i + 1) * d1], &g2[i * d2..(i + 1) * d2], &mut o[i * out_dim..(i + 1) * out_dim]);
        }
        ProfileField { space: self.space, k: self.k, dim: out_dim, modes: self.space.from_grid(&o, out_dim) }
    }

    fn add(&self, other: &Self) -> Self {
        ProfileField { modes: &self.modes + &other.modes, ..self.clone() }
    }
}

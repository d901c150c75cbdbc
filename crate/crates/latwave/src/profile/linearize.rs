//! Linearized profile operator and its Bloch expansion blocks in mode space.
//!
//! Each sandwich term `L_a ∘ M_a(u) ∘ R_a` becomes `diag(L_a) · Toep(M̂_a) · diag(R_a)`,
//! where the Toeplitz coefficients are grid DFT coefficients of the local
//! matrices. This is the exact Jacobian of the pseudospectral residual.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ProfileError, WaveProfile};
use crate::fourier::{self, FourierSpace, Modes};
use crate::model::{LocalStencil, SystemSpec};
use crate::shift::ShiftPolynomial;

type CMat = DMatrix<Complex64>;

/// Mode-block-diagonal operator: one `d×d` block per Fourier mode.
#[derive(Clone, Debug)]
struct BlockDiag(Vec<CMat>);

impl BlockDiag {
    fn of(op: &ShiftPolynomial, k_modes: usize, k: f64) -> Self {
        let km = k_modes as i64;
        BlockDiag((-km..=km).map(|n| op.mode_block(n, k)).collect())
    }

    fn is_identity(&self) -> bool {
        self.0.iter().all(|b| {
            b.iter().enumerate().all(|(i, z)| {
                let diag = i % b.nrows() == i / b.nrows();
                *z == Complex64::new(if diag { 1.0 } else { 0.0 }, 0.0)
            })
        })
    }

    fn apply(&self, v: &Modes, d: usize) -> Modes {
        let mut out = Modes::zeros(v.len());
        for (n, b) in self.0.iter().enumerate() {
            let x = v.rows(n * d, d);
            out.rows_mut(n * d, d).copy_from(&(b * x));
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Term {
    left: [BlockDiag; 3],
    right: [BlockDiag; 3],
    toeplitz: CMat,
}

/// Linearization of the profile equation about a fixed profile, without the
/// `−ω∂_ζ` part, kept in factored form.
#[derive(Clone, Debug)]
pub struct ProfileOperator {
    k_modes: usize,
    dim: usize,
    terms: Vec<Term>,
}

/// `L`, `L⁽¹⁾ = c + P⁽¹⁾`, `L⁽²⁾` and `L* = Lᴴ`.
#[derive(Clone, Debug)]
pub struct LinearizationMatrices {
    pub l: CMat,
    pub l1: CMat,
    pub l2: CMat,
    pub l_adj: CMat,
    /// `L⁽¹⁾ − c`: the shift part of the first-order block, equal to `∂_k` of the vector field applied through `∂_ζ`.
    pub p1: CMat,
}

impl ProfileOperator {
    pub fn new(sys: &SystemSpec, space: &FourierSpace, k: f64, modes: &Modes) -> Self {
        let d = sys.dim();
        let km = space.k_modes();
        let grid = space.grid();
        let here = space.to_grid(modes, d);
        let next = space.to_grid(&fourier::shift(modes, d, k), d);
        let prev = space.to_grid(&fourier::shift(modes, d, -k), d);
        let lin = sys.linear_terms();
        let mut mids: Vec<Vec<f64>> = vec![vec![0.0; grid * d * d]; lin.len()];
        for i in 0..grid {
            let s = i * d..(i + 1) * d;
            let st = LocalStencil { prev: &prev[s.clone()], here: &here[s.clone()], next: &next[s] };
            for (a, m) in sys.local_blocks(&st).into_iter().enumerate() {
                for r in 0..d {
                    for c in 0..d {
                        mids[a][i * d * d + r * d + c] = m[(r, c)];
                    }
                }
            }
        }
        let nm = 2 * km + 1;
        let terms = lin
            .iter()
            .zip(mids)
            .map(|(t, mid)| {
                let coef = space.from_grid_truncated(&mid, d * d, 2 * km);
                let dd = d * d;
                let toeplitz = CMat::from_fn(nm * d, nm * d, |row, col| {
                    let (n, r) = (row / d, row % d);
                    let (m, c) = (col / d, col % d);
                    let q = n as i64 - m as i64;
                    coef[((q + 2 * km as i64) as usize) * dd + r * d + c]
                });
                let (l1, l2) = t.left.bloch_expand();
                let (r1, r2) = t.right.bloch_expand();
                Term {
                    left: [BlockDiag::of(&t.left, km, k), BlockDiag::of(&l1, km, k), BlockDiag::of(&l2, km, k)],
                    right: [BlockDiag::of(&t.right, km, k), BlockDiag::of(&r1, km, k), BlockDiag::of(&r2, km, k)],
                    toeplitz,
                }
            })
            .collect();
        ProfileOperator { k_modes: km, dim: d, terms }
    }

    pub fn of_wave(sys: &SystemSpec, u: &WaveProfile) -> Self {
        Self::new(sys, &FourierSpace::new(u.k_modes()), u.k_value(), &u.modes)
    }

    pub fn size(&self) -> usize {
        (2 * self.k_modes + 1) * self.dim
    }

    fn sandwich(&self, out: &mut CMat, left: &BlockDiag, t: &CMat, right: &BlockDiag) {
        let d = self.dim;
        let mut tmp = t.clone();
        if !right.is_identity() {
            for (m, b) in right.0.iter().enumerate() {
                let cols = t.columns(m * d, d) * b;
                tmp.columns_mut(m * d, d).copy_from(&cols);
            }
        }
        if left.is_identity() {
            *out += tmp;
        } else {
            for (n, b) in left.0.iter().enumerate() {
                let rows = b * tmp.rows(n * d, d);
                let mut o = out.rows_mut(n * d, d);
                o += rows;
            }
        }
    }

    /// Order-`j` coefficient of the Bloch expansion of the vector-field part.
    pub fn block(&self, order: usize) -> CMat {
        let n = self.size();
        let mut out = CMat::zeros(n, n);
        for t in &self.terms {
            for i in 0..=order {
                if i < 3 && order - i < 3 {
                    self.sandwich(&mut out, &t.left[i], &t.toeplitz, &t.right[order - i]);
                }
            }
        }
        out
    }

    /// Matrix of `v ↦ −ωv′ + DF_k(u)v`.
    pub fn l(&self, omega: f64) -> CMat {
        let mut m = self.block(0);
        let d = self.dim;
        let km = self.k_modes as i64;
        for idx in 0..self.size() {
            let n = (idx / d) as i64 - km;
            m[(idx, idx)] -= Complex64::new(0.0, 2.0 * std::f64::consts::PI * n as f64 * omega);
        }
        m
    }

    /// Applies `DF_k(u)` of order `order` without assembling the matrix.
    pub fn apply_block(&self, order: usize, v: &Modes) -> Modes {
        let d = self.dim;
        let mut out = Modes::zeros(v.len());
        for t in &self.terms {
            for i in 0..=order {
                if i < 3 && order - i < 3 {
                    let x = t.right[order - i].apply(v, d);
                    let x = &t.toeplitz * x;
                    out += t.left[i].apply(&x, d);
                }
            }
        }
        out
    }
}

pub fn linearization_matrices(sys: &SystemSpec, u: &WaveProfile) -> Result<LinearizationMatrices, ProfileError> {
    if u.dim != sys.dim() {
        return Err(ProfileError::DimensionMismatch { expected: sys.dim(), got: u.dim });
    }
    let op = ProfileOperator::of_wave(sys, u);
    let l = op.l(u.omega);
    let p1 = op.block(1);
    let mut l1 = p1.clone();
    let c = u.speed();
    for i in 0..l1.nrows() {
        l1[(i, i)] += c;
    }
    Ok(LinearizationMatrices { l_adj: l.adjoint(), l, l1, l2: op.block(2), p1 })
}

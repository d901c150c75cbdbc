//! Shipped example nonlinearities.

use nalgebra::DMatrix;

use super::{BalanceLaw, HessianBlocks, LocalHamiltonian, Reaction};

/// Planar λ–ω kinetics `f(u) = (1−|u|²)u + (c₀ + c₁|u|²)Ru`, `R` the quarter turn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaOmega {
    pub c0: f64,
    pub c1: f64,
}

impl LambdaOmega {
    /// Squared amplitude of the plane wave of wavenumber `k` at coupling `mu`.
    pub fn plane_wave_radius_sq(mu: f64, k: f64) -> f64 {
        1.0 - 2.0 * mu * (1.0 - (2.0 * std::f64::consts::PI * k).cos())
    }
}

impl Reaction for LambdaOmega {
    fn name(&self) -> &'static str {
        "lambda-omega"
    }
    fn parameters(&self) -> Vec<(&'static str, f64)> {
        vec![("c0", self.c0), ("c1", self.c1)]
    }
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let s = u[0] * u[0] + u[1] * u[1];
        let rot = self.c0 + self.c1 * s;
        out[0] = (1.0 - s) * u[0] - rot * u[1];
        out[1] = (1.0 - s) * u[1] + rot * u[0];
    }
    fn jacobian(&self, u: &[f64], jac: &mut DMatrix<f64>) {
        let (x, y) = (u[0], u[1]);
        let s = x * x + y * y;
        let rot = self.c0 + self.c1 * s;
        // (1−s)I − 2uuᵀ + rot·R + 2c₁ R u uᵀ with Ru = (−y, x)
        jac[(0, 0)] = 1.0 - s - 2.0 * x * x - 2.0 * self.c1 * y * x;
        jac[(0, 1)] = -2.0 * x * y - rot - 2.0 * self.c1 * y * y;
        jac[(1, 0)] = -2.0 * x * y + rot + 2.0 * self.c1 * x * x;
        jac[(1, 1)] = 1.0 - s - 2.0 * y * y + 2.0 * self.c1 * x * y;
    }
}

/// Linear kinetics `f(u) = A u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearReaction {
    pub matrix: DMatrix<f64>,
}

impl Reaction for LinearReaction {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn parameters(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..u.len()).map(|c| self.matrix[(r, c)] * u[c]).sum();
        }
    }
    fn jacobian(&self, _u: &[f64], jac: &mut DMatrix<f64>) {
        jac.copy_from(&self.matrix);
    }
}

/// Viscous roll-wave balance law in conservative variables `(r, w)`:
/// `f_r = w`, `f_w = w²/r + r²/2`, `B = ν`, `g = r − w|w|/r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RollWaves {
    pub nu: f64,
}

impl BalanceLaw for RollWaves {
    fn name(&self) -> &'static str {
        "roll-waves"
    }
    fn parameters(&self) -> Vec<(&'static str, f64)> {
        vec![("nu", self.nu)]
    }
    fn conserved_dim(&self) -> usize {
        1
    }
    fn relaxing_dim(&self) -> usize {
        1
    }
    fn flux(&self, u: &[f64], out: &mut [f64]) {
        let (r, w) = (u[0], u[1]);
        out[0] = w;
        out[1] = w * w / r + 0.5 * r * r;
    }
    fn flux_jacobian(&self, u: &[f64], jac: &mut DMatrix<f64>) {
        let (r, w) = (u[0], u[1]);
        jac[(0, 0)] = 0.0;
        jac[(0, 1)] = 1.0;
        jac[(1, 0)] = -w * w / (r * r) + r;
        jac[(1, 1)] = 2.0 * w / r;
    }
    fn viscosity(&self, _u: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = self.nu;
    }
    fn viscosity_jacobian(&self, _u: &[f64], _y: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }
    fn source(&self, u: &[f64], out: &mut [f64]) {
        let (r, w) = (u[0], u[1]);
        out[0] = r - w * w.abs() / r;
    }
    fn source_jacobian(&self, u: &[f64], jac: &mut DMatrix<f64>) {
        let (r, w) = (u[0], u[1]);
        jac[(0, 0)] = 1.0 + w * w.abs() / (r * r);
        jac[(0, 1)] = -2.0 * w.abs() / r;
    }
    fn equilibrium(&self, r: &[f64]) -> Option<Vec<f64>> {
        (r[0] > 0.0).then(|| vec![r[0]])
    }
}

/// `H(u, v) = v²/2 + a₂u²/2 + a₄u⁴/4`, scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuarticChain {
    pub a2: f64,
    pub a4: f64,
}

impl QuarticChain {
    pub fn potential(&self, u: f64) -> f64 {
        0.5 * self.a2 * u * u + 0.25 * self.a4 * u.powi(4)
    }
}

impl LocalHamiltonian for QuarticChain {
    fn name(&self) -> &'static str {
        "quartic-chain"
    }
    fn parameters(&self) -> Vec<(&'static str, f64)> {
        vec![("a2", self.a2), ("a4", self.a4)]
    }
    fn dim(&self) -> usize {
        1
    }
    fn density(&self, u: &[f64], v: &[f64]) -> f64 {
        0.5 * v[0] * v[0] + self.potential(u[0])
    }
    fn grad_u(&self, u: &[f64], _v: &[f64], out: &mut [f64]) {
        out[0] = self.a2 * u[0] + self.a4 * u[0].powi(3);
    }
    fn grad_v(&self, _u: &[f64], v: &[f64], out: &mut [f64]) {
        out[0] = v[0];
    }
    fn hessian(&self, u: &[f64], _v: &[f64]) -> HessianBlocks {
        HessianBlocks {
            uu: DMatrix::from_element(1, 1, self.a2 + 3.0 * self.a4 * u[0] * u[0]),
            uv: DMatrix::zeros(1, 1),
            vu: DMatrix::zeros(1, 1),
            vv: DMatrix::from_element(1, 1, 1.0),
        }
    }
}

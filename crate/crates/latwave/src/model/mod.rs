//! Lattice dynamical systems: the reaction–diffusion, mixed (viscous balance law)
//! and Hamiltonian classes, with their right-hand sides and linearizations.

mod field;
mod linear;
pub mod systems;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ring::RingState;
use crate::shift::ShiftPolynomial;

pub use field::LatticeField;
pub use linear::{LinearTerm, LocalStencil};
pub use systems::{LambdaOmega, LinearReaction, QuarticChain, RollWaves};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("B-matrix is not symmetric (asymmetry {0:.3e})")]
    AsymmetricB(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what}: supplied Jacobian differs from finite differences by {err:.3e} (relative)")]
    JacobianMismatch { what: String, err: f64 },
    #[error("operation requires the {0} class")]
    WrongClass(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemClass {
    ReactionDiffusion,
    Mixed,
    Hamiltonian,
}

impl SystemClass {
    pub fn tag(&self) -> &'static str {
        match self {
            SystemClass::ReactionDiffusion => "reaction-diffusion",
            SystemClass::Mixed => "mixed",
            SystemClass::Hamiltonian => "hamiltonian",
        }
    }
}

/// Pointwise kinetics `f` of a reaction–diffusion lattice.
pub trait Reaction: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn parameters(&self) -> Vec<(&'static str, f64)>;
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64], out: &mut [f64]);
    fn jacobian(&self, u: &[f64], jac: &mut DMatrix<f64>);
}

/// Fluxes, viscosity and source of a mixed-class lattice. The state is
/// `u = (r, w)` with `r` the `d₁` conserved and `w` the `d₂` relaxing components.
pub trait BalanceLaw: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn parameters(&self) -> Vec<(&'static str, f64)>;
    fn conserved_dim(&self) -> usize;
    fn relaxing_dim(&self) -> usize;
    /// `(f_r, f_w)`, length `d`.
    fn flux(&self, u: &[f64], out: &mut [f64]);
    /// `d × d`.
    fn flux_jacobian(&self, u: &[f64], jac: &mut DMatrix<f64>);
    /// `B(u)`, `d₂ × d₂`.
    fn viscosity(&self, u: &[f64], out: &mut DMatrix<f64>);
    /// `∂(B(u) y)/∂u` for a fixed `y ∈ ℝ^{d₂}`, `d₂ × d`.
    fn viscosity_jacobian(&self, u: &[f64], y: &[f64], out: &mut DMatrix<f64>);
    /// `g(u)`, length `d₂`.
    fn source(&self, u: &[f64], out: &mut [f64]);
    /// `d₂ × d`.
    fn source_jacobian(&self, u: &[f64], jac: &mut DMatrix<f64>);
    /// Relaxing components of the constant equilibrium with conserved part `r`.
    fn equilibrium(&self, r: &[f64]) -> Option<Vec<f64>>;
}

pub struct HessianBlocks {
    pub uu: DMatrix<f64>,
    pub uv: DMatrix<f64>,
    pub vu: DMatrix<f64>,
    pub vv: DMatrix<f64>,
}

/// Local energy density `H(u, v)` of a Hamiltonian lattice, `v` standing for `D̃u`.
pub trait LocalHamiltonian: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn parameters(&self) -> Vec<(&'static str, f64)>;
    fn dim(&self) -> usize;
    fn density(&self, u: &[f64], v: &[f64]) -> f64;
    fn grad_u(&self, u: &[f64], v: &[f64], out: &mut [f64]);
    fn grad_v(&self, u: &[f64], v: &[f64], out: &mut [f64]);
    fn hessian(&self, u: &[f64], v: &[f64]) -> HessianBlocks;
}

#[derive(Clone, Debug)]
pub struct RdSystem {
    pub mu: f64,
    pub reaction: Arc<dyn Reaction>,
    lap: ShiftPolynomial,
}

#[derive(Clone, Debug)]
pub struct MixedSystem {
    pub eta: f64,
    pub law: Arc<dyn BalanceLaw>,
    ops: MixedOps,
}

#[derive(Clone, Debug)]
struct MixedOps {
    /// `−D₁ ⊗ P_r`
    d1: ShiftPolynomial,
    /// `−D₂ ⊗ P_w`
    d2: ShiftPolynomial,
    /// `D₃ ⊗ P_w`
    d3: ShiftPolynomial,
    /// `D₄ ⊗ P_w`
    d4: ShiftPolynomial,
}

#[derive(Clone, Debug)]
pub struct HamSystem {
    pub eta: f64,
    pub b: DMatrix<f64>,
    pub hamiltonian: Arc<dyn LocalHamiltonian>,
    ops: HamOps,
}

#[derive(Clone, Debug)]
struct HamOps {
    /// `D̃ = η(𝐓 − Id)`
    dt: ShiftPolynomial,
    /// `D̃* = η(𝐓⁻¹ − Id)`
    dt_star: ShiftPolynomial,
    /// `J = D·B` with `D = (η/2)(𝐓 − 𝐓⁻¹)`
    j: ShiftPolynomial,
}

#[derive(Clone, Debug)]
pub enum SystemSpec {
    ReactionDiffusion(RdSystem),
    Mixed(MixedSystem),
    Hamiltonian(HamSystem),
}

/// Name and numeric parameters, as echoed into serialized artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub class: SystemClass,
    pub name: String,
    pub parameters: BTreeMap<String, f64>,
}

fn block_projector(d: usize, range: std::ops::Range<usize>) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |r, c| if r == c && range.contains(&r) { 1.0 } else { 0.0 })
}

impl SystemSpec {
    pub fn reaction_diffusion(mu: f64, reaction: Arc<dyn Reaction>) -> Self {
        let d = reaction.dim();
        let lap = ShiftPolynomial::scalar(d, &[(1, mu), (0, -2.0 * mu), (-1, mu)]);
        SystemSpec::ReactionDiffusion(RdSystem { mu, reaction, lap })
    }

    pub fn mixed(eta: f64, law: Arc<dyn BalanceLaw>) -> Self {
        let (d1, d2) = (law.conserved_dim(), law.relaxing_dim());
        let d = d1 + d2;
        let pr = block_projector(d, 0..d1);
        let pw = block_projector(d, d1..d);
        let fwd = ShiftPolynomial::scalar(d, &[(1, eta), (0, -eta)]);
        let bwd = ShiftPolynomial::scalar(d, &[(0, eta), (-1, -eta)]);
        let ops = MixedOps {
            d1: fwd.right_mul(&pr).scaled(-1.0),
            d2: bwd.right_mul(&pw).scaled(-1.0),
            d3: bwd.right_mul(&pw),
            d4: fwd.right_mul(&pw),
        };
        SystemSpec::Mixed(MixedSystem { eta, law, ops })
    }

    pub fn hamiltonian(
        eta: f64,
        b: DMatrix<f64>,
        hamiltonian: Arc<dyn LocalHamiltonian>,
    ) -> Result<Self, ModelError> {
        let d = hamiltonian.dim();
        if b.nrows() != d || b.ncols() != d {
            return Err(ModelError::DimensionMismatch { expected: d, got: b.nrows() });
        }
        let asym = (&b - b.transpose()).amax();
        if asym > 1e-14 * b.amax().max(1.0) {
            return Err(ModelError::AsymmetricB(asym));
        }
        let dt = ShiftPolynomial::scalar(d, &[(1, eta), (0, -eta)]);
        let dt_star = dt.adjoint();
        let j = ShiftPolynomial::scalar(d, &[(1, 0.5 * eta), (-1, -0.5 * eta)]).right_mul(&b);
        let ops = HamOps { dt, dt_star, j };
        Ok(SystemSpec::Hamiltonian(HamSystem { eta, b, hamiltonian, ops }))
    }

    /// Reaction–diffusion λ–ω lattice.
    pub fn lambda_omega(mu: f64, c0: f64, c1: f64) -> Self {
        Self::reaction_diffusion(mu, Arc::new(LambdaOmega { c0, c1 }))
    }

    /// Mixed-class roll-wave lattice.
    pub fn roll_waves(eta: f64, nu: f64) -> Self {
        Self::mixed(eta, Arc::new(RollWaves { nu }))
    }

    /// Scalar Hamiltonian chain with `B = 1` and quartic on-site potential.
    pub fn quartic_chain(eta: f64, a2: f64, a4: f64) -> Self {
        Self::hamiltonian(eta, DMatrix::identity(1, 1), Arc::new(QuarticChain { a2, a4 }))
            .expect("scalar identity is symmetric")
    }

    pub fn class(&self) -> SystemClass {
        match self {
            SystemSpec::ReactionDiffusion(_) => SystemClass::ReactionDiffusion,
            SystemSpec::Mixed(_) => SystemClass::Mixed,
            SystemSpec::Hamiltonian(_) => SystemClass::Hamiltonian,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::ReactionDiffusion(s) => s.reaction.dim(),
            SystemSpec::Mixed(s) => s.law.conserved_dim() + s.law.relaxing_dim(),
            SystemSpec::Hamiltonian(s) => s.hamiltonian.dim(),
        }
    }

    /// Number of components whose averages parametrize the wave family.
    pub fn conserved_count(&self) -> usize {
        match self {
            SystemSpec::ReactionDiffusion(_) => 0,
            SystemSpec::Mixed(s) => s.law.conserved_dim(),
            SystemSpec::Hamiltonian(s) => s.hamiltonian.dim(),
        }
    }

    pub fn has_energy(&self) -> bool {
        matches!(self, SystemSpec::Hamiltonian(_))
    }

    /// Size of the modulation system: 1, `d₁ + 1` or `d + 2`.
    pub fn modulation_size(&self) -> usize {
        1 + self.conserved_count() + usize::from(self.has_energy())
    }

    pub fn descriptor(&self) -> SystemDescriptor {
        let (name, mut params): (&str, Vec<(&str, f64)>) = match self {
            SystemSpec::ReactionDiffusion(s) => {
                let mut p = s.reaction.parameters();
                p.push(("mu", s.mu));
                (s.reaction.name(), p)
            }
            SystemSpec::Mixed(s) => {
                let mut p = s.law.parameters();
                p.push(("eta", s.eta));
                (s.law.name(), p)
            }
            SystemSpec::Hamiltonian(s) => {
                let mut p = s.hamiltonian.parameters();
                p.push(("eta", s.eta));
                (s.hamiltonian.name(), p)
            }
        };
        params.sort_by(|a, b| a.0.cmp(b.0));
        SystemDescriptor {
            class: self.class(),
            name: name.to_string(),
            parameters: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    /// The constant-coefficient difference operators of the class, by name.
    pub fn operators(&self) -> Vec<(&'static str, ShiftPolynomial)> {
        match self {
            SystemSpec::ReactionDiffusion(s) => vec![("laplacian", s.lap.clone())],
            SystemSpec::Mixed(s) => vec![
                ("D1", s.ops.d1.scaled(-1.0)),
                ("D2", s.ops.d2.scaled(-1.0)),
                ("D3", s.ops.d3.clone()),
                ("D4", s.ops.d4.clone()),
            ],
            SystemSpec::Hamiltonian(s) => vec![
                ("Dtilde", s.ops.dt.clone()),
                ("Dtilde*", s.ops.dt_star.clone()),
                ("J", s.ops.j.clone()),
            ],
        }
    }

    /// Class vector field on any lattice-like field (ring states, profiles).
    pub fn vector_field<F: LatticeField>(&self, u: &F) -> F {
        match self {
            SystemSpec::ReactionDiffusion(s) => {
                let d = s.reaction.dim();
                let kin = u.map_local(d, &|x, o| s.reaction.eval(x, o));
                u.apply_op(&s.lap).add(&kin)
            }
            SystemSpec::Mixed(s) => {
                let d1 = s.law.conserved_dim();
                let d = d1 + s.law.relaxing_dim();
                let flux = u.map_local(d, &|x, o| s.law.flux(x, o));
                let y = u.apply_op(&s.ops.d4);
                let visc = u.map_pair(&y, d, &|x, yy, o| {
                    let d2 = d - d1;
                    let mut b = DMatrix::zeros(d2, d2);
                    s.law.viscosity(x, &mut b);
                    o[..d1].fill(0.0);
                    for r in 0..d2 {
                        o[d1 + r] = (0..d2).map(|c| b[(r, c)] * yy[d1 + c]).sum();
                    }
                });
                let src = u.map_local(d, &|x, o| {
                    o[..d1].fill(0.0);
                    s.law.source(x, &mut o[d1..]);
                });
                flux.apply_op(&s.ops.d1)
                    .add(&flux.apply_op(&s.ops.d2))
                    .add(&visc.apply_op(&s.ops.d3))
                    .add(&src)
            }
            SystemSpec::Hamiltonian(s) => {
                let delta = ham_variational(s, u);
                delta.apply_op(&s.ops.j)
            }
        }
    }

    /// `dU/dt` on a ring.
    pub fn rhs_full(&self, u: &RingState) -> RingState {
        self.vector_field(u)
    }

    /// Discrete Euler operator `δH[U] = ∇_UH(U, D̃U) + D̃*∇_vH(U, D̃U)`.
    pub fn variational_derivative<F: LatticeField>(&self, u: &F) -> Result<F, ModelError> {
        match self {
            SystemSpec::Hamiltonian(s) => Ok(ham_variational(s, u)),
            _ => Err(ModelError::WrongClass("Hamiltonian")),
        }
    }

    /// Energy density `H(U_j, (D̃U)_j)` and flux `½𝐓⁻¹(δH)·BδH + 𝐓⁻¹(∇_vH)·JδH`,
    /// satisfying `d/dt density = D̃[flux]` along trajectories.
    pub fn energy_density_flux<F: LatticeField>(&self, u: &F) -> Result<(F, F), ModelError> {
        let SystemSpec::Hamiltonian(s) = self else {
            return Err(ModelError::WrongClass("Hamiltonian"));
        };
        let d = s.hamiltonian.dim();
        let h = &s.hamiltonian;
        let y = u.apply_op(&s.ops.dt);
        let density = u.map_pair(&y, 1, &|x, v, o| o[0] = h.density(x, v));
        let gv = u.map_pair(&y, d, &|x, v, o| h.grad_v(x, v, o));
        let gu = u.map_pair(&y, d, &|x, v, o| h.grad_u(x, v, o));
        let delta = gu.add(&gv.apply_op(&s.ops.dt_star));
        let back = ShiftPolynomial::shift(d, -1);
        let b_delta = delta.apply_op(&ShiftPolynomial::monomial(0, s.b.clone()));
        let j_delta = delta.apply_op(&s.ops.j);
        let dot = |a: &[f64], b: &[f64], o: &mut [f64]| {
            o[0] = a.iter().zip(b).map(|(x, y)| x * y).sum();
        };
        let first = delta.apply_op(&back).map_pair(&b_delta, 1, &|a, b, o| {
            dot(a, b, o);
            o[0] *= 0.5;
        });
        let second = gv.apply_op(&back).map_pair(&j_delta, 1, &dot);
        Ok((density, first.add(&second)))
    }

    /// Total energy `Σ_j H(U_j, (D̃U)_j)` on a ring.
    pub fn ring_energy(&self, u: &RingState) -> Result<f64, ModelError> {
        let (density, _) = self.energy_density_flux(u)?;
        Ok(density.as_slice().iter().sum())
    }

    /// Constant states that are equilibria, parametrized by their conserved part.
    pub fn constant_equilibrium(&self, conserved: &[f64]) -> Option<Vec<f64>> {
        match self {
            SystemSpec::ReactionDiffusion(_) => None,
            SystemSpec::Mixed(s) => {
                let mut u = conserved.to_vec();
                u.extend(s.law.equilibrium(conserved)?);
                Some(u)
            }
            SystemSpec::Hamiltonian(_) => Some(conserved.to_vec()),
        }
    }

    /// Symbol of the linearization about a constant state at plane wave `e^{iθj}`.
    pub fn constant_state_symbol(&self, state: &[f64], theta: f64) -> DMatrix<Complex64> {
        let st = LocalStencil { prev: state, here: state, next: state };
        let blocks = self.local_blocks(&st);
        let mut m = DMatrix::<Complex64>::zeros(self.dim(), self.dim());
        for (t, b) in self.linear_terms().iter().zip(blocks) {
            let l = t.left.plane_wave_symbol(theta);
            let r = t.right.plane_wave_symbol(theta);
            m += l * b.map(|x| Complex64::new(x, 0.0)) * r;
        }
        m
    }

    /// Compares every supplied Jacobian with central finite differences at `states`.
    pub fn check_jacobians(&self, states: &[Vec<f64>], rel_tol: f64) -> Result<f64, ModelError> {
        let d = self.dim();
        let h = 1e-6;
        let mut worst = 0.0f64;
        let mut check = |what: &str,
                         n_out: usize,
                         f: &dyn Fn(&[f64], &mut [f64]),
                         jac: &DMatrix<f64>,
                         x: &[f64],
                         ncols: usize|
         -> Result<(), ModelError> {
            let mut fd = DMatrix::zeros(n_out, ncols);
            let (mut a, mut b) = (vec![0.0; n_out], vec![0.0; n_out]);
            for c in 0..ncols {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[c] += h;
                xm[c] -= h;
                f(&xp, &mut a);
                f(&xm, &mut b);
                for r in 0..n_out {
                    fd[(r, c)] = (a[r] - b[r]) / (2.0 * h);
                }
            }
            let err = (&fd - jac).amax() / fd.amax().max(1.0);
            worst = worst.max(err);
            if err > rel_tol {
                return Err(ModelError::JacobianMismatch { what: what.to_string(), err });
            }
            Ok(())
        };
        for x in states {
            if x.len() != d && !matches!(self, SystemSpec::Hamiltonian(_)) {
                return Err(ModelError::DimensionMismatch { expected: d, got: x.len() });
            }
            match self {
                SystemSpec::ReactionDiffusion(s) => {
                    let mut j = DMatrix::zeros(d, d);
                    s.reaction.jacobian(x, &mut j);
                    check("Df", d, &|u, o| s.reaction.eval(u, o), &j, x, d)?;
                }
                SystemSpec::Mixed(s) => {
                    let d1 = s.law.conserved_dim();
                    let d2 = d - d1;
                    let mut j = DMatrix::zeros(d, d);
                    s.law.flux_jacobian(x, &mut j);
                    check("Df", d, &|u, o| s.law.flux(u, o), &j, x, d)?;
                    let mut jg = DMatrix::zeros(d2, d);
                    s.law.source_jacobian(x, &mut jg);
                    check("Dg", d2, &|u, o| s.law.source(u, o), &jg, x, d)?;
                    let y: Vec<f64> = (0..d2).map(|i| 0.3 + 0.1 * i as f64).collect();
                    let mut jb = DMatrix::zeros(d2, d);
                    s.law.viscosity_jacobian(x, &y, &mut jb);
                    let by = |u: &[f64], o: &mut [f64]| {
                        let mut b = DMatrix::zeros(d2, d2);
                        s.law.viscosity(u, &mut b);
                        for r in 0..d2 {
                            o[r] = (0..d2).map(|c| b[(r, c)] * y[c]).sum();
                        }
                    };
                    check("D(By)", d2, &by, &jb, x, d)?;
                }
                SystemSpec::Hamiltonian(s) => {
                    if x.len() != 2 * d {
                        return Err(ModelError::DimensionMismatch { expected: 2 * d, got: x.len() });
                    }
                    let h = &s.hamiltonian;
                    let hb = h.hessian(&x[..d], &x[d..]);
                    let mut full = DMatrix::zeros(2 * d, 2 * d);
                    full.view_mut((0, 0), (d, d)).copy_from(&hb.uu);
                    full.view_mut((0, d), (d, d)).copy_from(&hb.uv);
                    full.view_mut((d, 0), (d, d)).copy_from(&hb.vu);
                    full.view_mut((d, d), (d, d)).copy_from(&hb.vv);
                    let grad = |z: &[f64], o: &mut [f64]| {
                        let (a, b) = o.split_at_mut(d);
                        h.grad_u(&z[..d], &z[d..], a);
                        h.grad_v(&z[..d], &z[d..], b);
                    };
                    check("Hessian", 2 * d, &grad, &full, x, 2 * d)?;
                    let mut g = vec![0.0; 2 * d];
                    grad(x, &mut g);
                    let gm = DMatrix::from_row_slice(1, 2 * d, &g);
                    check(
                        "gradient",
                        1,
                        &|z, o| o[0] = h.density(&z[..d], &z[d..]),
                        &gm,
                        x,
                        2 * d,
                    )?;
                }
            }
        }
        Ok(worst)
    }
}

fn ham_variational<F: LatticeField>(s: &HamSystem, u: &F) -> F {
    let d = s.hamiltonian.dim();
    let h = &s.hamiltonian;
    let y = u.apply_op(&s.ops.dt);
    let gu = u.map_pair(&y, d, &|x, v, o| h.grad_u(x, v, o));
    let gv = u.map_pair(&y, d, &|x, v, o| h.grad_v(x, v, o));
    gu.add(&gv.apply_op(&s.ops.dt_star))
}

//! Linearizations in sandwich form `Σ_a L_a ∘ M_a(U) ∘ R_a`, with constant
//! shift polynomials `L_a`, `R_a` and site-local matrices `M_a` that depend on
//! `U_{j-1}, U_j, U_{j+1}`.

use nalgebra::DMatrix;

use super::SystemSpec;
use crate::ring::RingState;
use crate::shift::ShiftPolynomial;

#[derive(Clone, Debug)]
pub struct LinearTerm {
    pub left: ShiftPolynomial,
    pub right: ShiftPolynomial,
}

/// Neighbourhood of one site.
#[derive(Clone, Copy, Debug)]
pub struct LocalStencil<'a> {
    pub prev: &'a [f64],
    pub here: &'a [f64],
    pub next: &'a [f64],
}

impl SystemSpec {
    pub fn linear_terms(&self) -> Vec<LinearTerm> {
        let d = self.dim();
        let id = ShiftPolynomial::identity(d);
        match self {
            SystemSpec::ReactionDiffusion(s) => vec![
                LinearTerm { left: s.lap.clone(), right: id.clone() },
                LinearTerm { left: id.clone(), right: id },
            ],
            SystemSpec::Mixed(s) => vec![
                LinearTerm { left: s.ops.d1.clone(), right: id.clone() },
                LinearTerm { left: s.ops.d2.clone(), right: id.clone() },
                LinearTerm { left: s.ops.d3.clone(), right: s.ops.d4.clone() },
                LinearTerm { left: s.ops.d3.clone(), right: id.clone() },
                LinearTerm { left: id.clone(), right: id },
            ],
            SystemSpec::Hamiltonian(s) => {
                let jd = s.ops.j.compose(&s.ops.dt_star);
                vec![
                    LinearTerm { left: s.ops.j.clone(), right: id.clone() },
                    LinearTerm { left: s.ops.j.clone(), right: s.ops.dt.clone() },
                    LinearTerm { left: jd.clone(), right: id },
                    LinearTerm { left: jd, right: s.ops.dt.clone() },
                ]
            }
        }
    }

    /// Site-local matrices, one per entry of [`SystemSpec::linear_terms`].
    pub fn local_blocks(&self, st: &LocalStencil) -> Vec<DMatrix<f64>> {
        let d = self.dim();
        match self {
            SystemSpec::ReactionDiffusion(s) => {
                let mut j = DMatrix::zeros(d, d);
                s.reaction.jacobian(st.here, &mut j);
                vec![DMatrix::identity(d, d), j]
            }
            SystemSpec::Mixed(s) => {
                let d1 = s.law.conserved_dim();
                let d2 = d - d1;
                let mut df = DMatrix::zeros(d, d);
                s.law.flux_jacobian(st.here, &mut df);
                let mut b = DMatrix::zeros(d2, d2);
                s.law.viscosity(st.here, &mut b);
                let mut bm = DMatrix::zeros(d, d);
                bm.view_mut((d1, d1), (d2, d2)).copy_from(&b);
                let y: Vec<f64> = (0..d2).map(|i| s.eta * (st.next[d1 + i] - st.here[d1 + i])).collect();
                let mut db = DMatrix::zeros(d2, d);
                s.law.viscosity_jacobian(st.here, &y, &mut db);
                let mut dbm = DMatrix::zeros(d, d);
                dbm.view_mut((d1, 0), (d2, d)).copy_from(&db);
                let mut dg = DMatrix::zeros(d2, d);
                s.law.source_jacobian(st.here, &mut dg);
                let mut dgm = DMatrix::zeros(d, d);
                dgm.view_mut((d1, 0), (d2, d)).copy_from(&dg);
                vec![df.clone(), df, bm, dbm, dgm]
            }
            SystemSpec::Hamiltonian(s) => {
                let v: Vec<f64> = (0..d).map(|i| s.eta * (st.next[i] - st.here[i])).collect();
                let h = s.hamiltonian.hessian(st.here, &v);
                vec![h.uu, h.uv, h.vu, h.vv]
            }
        }
    }

    /// Linearized right-hand side `A(U)V` on a ring.
    pub fn apply_linearization(&self, u: &RingState, v: &RingState) -> RingState {
        let d = self.dim();
        let l = u.sites();
        let blocks: Vec<Vec<DMatrix<f64>>> = (0..l)
            .map(|j| {
                self.local_blocks(&LocalStencil {
                    prev: u.site_offset(j, -1),
                    here: u.site(j),
                    next: u.site_offset(j, 1),
                })
            })
            .collect();
        let mut out = RingState::zeros(l, d);
        for (a, term) in self.linear_terms().iter().enumerate() {
            let rv = term.right.apply(v);
            let mid = RingState::from_fn(l, d, |j, o| {
                let m = &blocks[j][a];
                let x = rv.site(j);
                for r in 0..d {
                    o[r] = (0..d).map(|c| m[(r, c)] * x[c]).sum();
                }
            });
            out.axpy(1.0, &term.left.apply(&mid));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::RingState;

    fn fd_check(sys: &SystemSpec, u: &RingState, v: &RingState) -> f64 {
        let h = 1e-6;
        let mut up = u.clone();
        up.axpy(h, v);
        let mut um = u.clone();
        um.axpy(-h, v);
        let mut fd = sys.rhs_full(&up);
        fd.axpy(-1.0, &sys.rhs_full(&um));
        let fd = fd.scaled(0.5 / h);
        let mut diff = sys.apply_linearization(u, v);
        diff.axpy(-1.0, &fd);
        diff.max_abs() / fd.max_abs().max(1.0)
    }

    #[test]
    fn linearizations_match_finite_differences() {
        let l = 7;
        let wiggle = |j: usize, c: usize| ((1.7 * j as f64 + c as f64).sin()) * 0.3;
        let v2 = RingState::from_fn(l, 2, |j, s| {
            s[0] = (0.9 * j as f64).cos();
            s[1] = (1.3 * j as f64).sin();
        });
        let lo = SystemSpec::lambda_omega(0.5, 1.0, -1.0);
        let u = RingState::from_fn(l, 2, |j, s| {
            s[0] = 0.5 + wiggle(j, 0);
            s[1] = -0.2 + wiggle(j, 1);
        });
        assert!(fd_check(&lo, &u, &v2) < 1e-8);
        let rw = SystemSpec::roll_waves(0.8, 0.3);
        let u = RingState::from_fn(l, 2, |j, s| {
            s[0] = 1.2 + wiggle(j, 0);
            s[1] = 0.9 + wiggle(j, 1);
        });
        assert!(fd_check(&rw, &u, &v2) < 1e-8);
        let hc = SystemSpec::quartic_chain(1.1, 1.0, 0.8);
        let u = RingState::from_fn(l, 1, |j, s| s[0] = wiggle(j, 0) * 2.0);
        let v1 = RingState::from_fn(l, 1, |j, s| s[0] = (0.4 * j as f64).cos());
        assert!(fd_check(&hc, &u, &v1) < 1e-8);
    }
}

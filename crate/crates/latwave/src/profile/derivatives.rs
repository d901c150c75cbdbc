//! Parameter derivatives of a wave family and the adjoint element `u_ad`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::linearize::ProfileOperator;
use super::newton::{solve_checked, Bordered, Unknowns};
use super::{profile_energy, profile_variational, ProfileError, ProfileTargets, WaveProfile};
use crate::fourier::{self, mode_index, FourierSpace, Modes, ProfileField};
use crate::model::{LatticeField, SystemClass, SystemSpec};

type CMat = DMatrix<Complex64>;

#[derive(Clone, Debug)]
pub struct WaveDerivatives {
    pub dzeta: Modes,
    /// `∂_ku`, normalized so that `⟨u_ad, ∂_ku⟩ = 0`.
    pub dk: Modes,
    /// `∂_{M_i}u` for each conserved average.
    pub dmean: Vec<Modes>,
    pub denergy: Option<Modes>,
    pub u_ad: Modes,
    /// `δ_kH[u]` for the Hamiltonian class.
    pub delta_h: Option<Modes>,
    pub dk_omega: f64,
    pub dmean_omega: Vec<f64>,
    pub denergy_omega: Option<f64>,
}

impl WaveDerivatives {
    /// Largest violation among the normalization conditions on `u_ad`.
    pub fn normalization_defect(&self) -> f64 {
        let p = |v: &Modes| fourier::pairing(&self.u_ad, v);
        let mut worst = (p(&self.dzeta) - 1.0).norm().max(p(&self.dk).norm());
        for v in self.dmean.iter().chain(self.denergy.iter()) {
            worst = worst.max(p(v).norm());
        }
        worst
    }

    /// `∂_a u` and `∂_aω` for `a` running over the conserved averages and then the energy.
    pub fn parameter_directions(&self) -> Vec<(&Modes, f64)> {
        let mut out: Vec<(&Modes, f64)> = self.dmean.iter().zip(self.dmean_omega.iter().copied()).collect();
        if let (Some(v), Some(w)) = (&self.denergy, self.denergy_omega) {
            out.push((v, w));
        }
        out
    }
}

const MAX_CONDITION: f64 = 1e14;
const LS_RESIDUAL: f64 = 1e-8;
const RANK_RATIO: f64 = 1e-11;

/// `∂_k E` at fixed modes, `η⟨∇_vH(u, D̃u), T_k u′⟩`.
fn energy_k_derivative(sys: &SystemSpec, space: &FourierSpace, k: f64, modes: &Modes) -> f64 {
    let SystemSpec::Hamiltonian(s) = sys else { return 0.0 };
    let d = sys.dim();
    let f = ProfileField::new(space, k, d, modes.clone());
    let y = ProfileField::new(space, k, d, (fourier::shift(modes, d, k) - modes) * Complex64::new(s.eta, 0.0));
    let h = &s.hamiltonian;
    let gv = f.map_pair(&y, d, &|x, v, o| h.grad_v(x, v, o));
    let tu = fourier::shift(&fourier::derivative(modes, d), d, k);
    s.eta * fourier::pairing(&gv.modes, &tu).re
}

pub fn wave_derivatives(sys: &SystemSpec, u: &WaveProfile) -> Result<WaveDerivatives, ProfileError> {
    if u.dim != sys.dim() {
        return Err(ProfileError::DimensionMismatch { expected: sys.dim(), got: u.dim });
    }
    let d = sys.dim();
    let km = u.k_modes();
    let space = FourierSpace::new(km);
    let k = u.k_value();
    let energy = if sys.has_energy() { Some(profile_energy(sys, &space, k, &u.modes)?) } else { None };
    let targets = ProfileTargets { means: fourier::mean(&u.modes, d)[..sys.conserved_count()].to_vec(), energy, anchor: None };
    let dzeta = u.dzeta();
    let b = Bordered { sys, space: &space, k, targets: &targets, ref_dz: dzeta.clone(), ref_modes: u.modes.clone() };
    let n = b.n();
    let size = b.size();
    let x = Unknowns { modes: u.modes.clone(), omega: u.omega, slack: 0.0 };
    let op = ProfileOperator::new(sys, &space, k, &u.modes);
    let jac = b.jacobian(&x, &op)?;

    let n_mean = sys.conserved_count();
    let n_params = 1 + n_mean + usize::from(sys.has_energy());
    let mut rhs = CMat::zeros(size, n_params);
    let p1u = op.apply_block(1, &dzeta);
    rhs.view_mut((0, 0), (n, 1)).copy_from(&(-p1u));
    for row in b.mean_rows() {
        rhs[(row, 0)] = Complex64::new(0.0, 0.0);
    }
    if sys.has_energy() {
        rhs[(n + 1, 0)] = Complex64::new(-energy_k_derivative(sys, &space, k, &u.modes), 0.0);
        rhs[(n + 1, n_params - 1)] = Complex64::new(1.0, 0.0);
    }
    for (i, row) in b.mean_rows().into_iter().enumerate() {
        rhs[(row, 1 + i)] = Complex64::new(1.0, 0.0);
    }
    let (sol, _) = solve_checked(&jac, &rhs, MAX_CONDITION)?;
    let column = |j: usize| -> (Modes, f64) {
        let mut m: Modes = sol.view((0, j), (n, 1)).column(0).into_owned();
        fourier::symmetrize(&mut m, km, d);
        (m, sol[(n, j)].re)
    };
    let (dk_raw, dk_omega) = column(0);
    let (dmean, dmean_omega): (Vec<Modes>, Vec<f64>) = (0..n_mean).map(|i| column(1 + i)).unzip();
    let (denergy, denergy_omega) = if sys.has_energy() {
        let (m, w) = column(n_params - 1);
        (Some(m), Some(w))
    } else {
        (None, None)
    };
    let delta_h = if sys.class() == SystemClass::Hamiltonian {
        Some(profile_variational(sys, &space, k, &u.modes)?)
    } else {
        None
    };

    // u_ad: least-squares solution of L*x = Σ∂_{M_i}ω e_i + ∂_Eω δH with the pairing constraints.
    let l_adj = op.l(u.omega).adjoint();
    let mut target = Modes::zeros(n);
    for (i, w) in dmean_omega.iter().enumerate() {
        target[mode_index(km, d, 0, i)] += Complex64::new(*w, 0.0);
    }
    if let (Some(dh), Some(w)) = (&delta_h, denergy_omega) {
        target += dh * Complex64::new(w, 0.0);
    }
    let constraints: Vec<(&Modes, f64)> = std::iter::once((&dzeta, 1.0))
        .chain(dmean.iter().map(|m| (m, 0.0)))
        .chain(denergy.iter().map(|m| (m, 0.0)))
        .collect();
    let rows = n + constraints.len();
    let scale = super::newton::norm1(&l_adj).max(1.0);
    let mut a = CMat::zeros(rows, n);
    a.view_mut((0, 0), (n, n)).copy_from(&l_adj);
    let mut rhs = nalgebra::DVector::<Complex64>::zeros(rows);
    rhs.rows_mut(0, n).copy_from(&target);
    for (i, (v, val)) in constraints.iter().enumerate() {
        for c in 0..n {
            a[(n + i, c)] = v[c].conj() * scale;
        }
        rhs[n + i] = Complex64::new(val * scale, 0.0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > RANK_RATIO * smax).count();
    if rank < n {
        return Err(ProfileError::RankDeficiency { expected: n, found: rank });
    }
    let u_ad_raw = svd.solve(&rhs, RANK_RATIO * smax).map_err(|e| ProfileError::Document(e.to_string()))?;
    let sup = |v: &nalgebra::DVector<Complex64>| v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let ls = sup(&(&a * &u_ad_raw - &rhs)) / sup(&rhs).max(1.0);
    if ls > LS_RESIDUAL {
        return Err(ProfileError::RankDeficiency { expected: n, found: n - 1 });
    }
    let mut u_ad: Modes = u_ad_raw;
    fourier::symmetrize(&mut u_ad, km, d);
    let norm = fourier::pairing(&u_ad, &dzeta);
    u_ad /= norm.conj();
    let mut dk = dk_raw;
    let proj = fourier::pairing(&u_ad, &dk);
    dk -= &dzeta * proj;
    fourier::symmetrize(&mut dk, km, d);

    Ok(WaveDerivatives { dzeta, dk, dmean, denergy, u_ad, delta_h, dk_omega, dmean_omega, denergy_omega })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::linearization_matrices;
    use crate::profile::tests::lambda_omega_wave;
    use std::f64::consts::PI;

    #[test]
    fn lambda_omega_dispersion_derivative() {
        let (sys, u) = lambda_omega_wave(0.5, 1.0, -1.0, 1, 6, 16);
        let w = wave_derivatives(&sys, &u).unwrap();
        let exact = -(-2.0 * 0.5) * (2.0 * PI / 6.0).sin();
        assert!((w.dk_omega - exact).abs() < 1e-8, "{} vs {exact}", w.dk_omega);
        assert!((w.dk_omega - 0.8660254).abs() < 1e-7);
        assert!(w.normalization_defect() < 1e-10);
    }

    #[test]
    fn wavenumber_profile_identity() {
        // L∂_ku + L⁽¹⁾∂_ζu + k(∂_kc)∂_ζu = 0 with c = −ω/k.
        let (sys, u) = lambda_omega_wave(0.5, 1.0, -1.0, 1, 6, 16);
        let w = wave_derivatives(&sys, &u).unwrap();
        let m = linearization_matrices(&sys, &u).unwrap();
        let k = u.k_value();
        let dkc = -w.dk_omega / k + u.omega / (k * k);
        let r = &m.l * &w.dk + &m.l1 * &w.dzeta + &w.dzeta * Complex64::new(k * dkc, 0.0);
        assert!(fourier::sup_norm(&r) < 1e-8);
    }

    #[test]
    fn adjoint_is_in_kernel_for_reaction_diffusion() {
        let (sys, u) = lambda_omega_wave(0.5, 1.0, -1.0, 1, 6, 16);
        let w = wave_derivatives(&sys, &u).unwrap();
        let m = linearization_matrices(&sys, &u).unwrap();
        assert!(fourier::sup_norm(&(&m.l_adj * &w.u_ad)) < 1e-10);
        assert!(fourier::hermitian_defect(&w.u_ad, 2) < 1e-14);
    }
}

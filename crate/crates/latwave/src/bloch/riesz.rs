//! Spectral projector onto the critical multipliers and the reduced matrix `Ω_ξ`.

use num_complex::Complex64;

use super::{auto_radius, critical_count, lift_along, monodromy, symbol_generator, BlochError, DEFAULT_TOL};
use crate::fourier::{self, Modes};
use crate::linalg::{eigenvalues, CMat, CVec};
use crate::model::SystemSpec;
use crate::profile::{wave_derivatives, WaveDerivatives, WaveProfile};

#[derive(Clone, Debug)]
pub struct RieszOptions {
    /// Contour radius ε₀; `None` selects it from the spectrum at `ξ = 0`.
    pub radius: Option<f64>,
    pub nodes: usize,
    pub max_nodes: usize,
    pub projector_tol: f64,
    pub ode_tol: f64,
}

impl Default for RieszOptions {
    fn default() -> Self {
        RieszOptions { radius: None, nodes: 32, max_nodes: 4096, projector_tol: 1e-9, ode_tol: DEFAULT_TOL }
    }
}

#[derive(Clone, Debug)]
pub struct RieszBlock {
    pub xi: f64,
    pub radius: f64,
    /// Quadrature nodes used for the converged projector.
    pub nodes: usize,
    /// `Ω_ξ = [⟨q̃_α, (S_ξ − Id) q_β⟩]`.
    pub reduced: CMat,
    /// `Σ_ξ⁻¹ Ω_ξ Σ_ξ / (iξ)`; absent at `ξ = 0`.
    pub rescaled: Option<CMat>,
    pub q: CMat,
    pub q_dual: CMat,
    pub projector_trace: Complex64,
    /// `max |⟨q̃_α, q_β⟩ − δ_αβ|`.
    pub duality_defect: f64,
}

fn projector(s: &CMat, radius: f64, nodes: usize) -> CMat {
    let n = s.nrows();
    let id = CMat::identity(n, n);
    let mut p = CMat::zeros(n, n);
    for m in 0..nodes {
        let e = Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / nodes as f64);
        let z = e + 1.0;
        let r = (&id * z - s).lu().solve(&id).expect("contour avoids the spectrum");
        p += r * (e / nodes as f64);
    }
    p
}

fn matrix_of(cols: &[CVec]) -> CMat {
    CMat::from_columns(cols)
}

fn lifted_bases(sys: &SystemSpec, u: &WaveProfile, wd: &WaveDerivatives, xi: f64) -> Result<(CMat, CMat), BlochError> {
    let d = u.dim;
    let km = u.k_modes();
    let n_sites = u.k.as_rational().ok_or(BlochError::IrrationalWavenumber)?.1 as f64;
    let l = |v: &Modes| lift_along(u, v, 0.0);
    // Phase direction carries the first-order Bloch correction `iξ V^{∂_k u}`.
    let mut q = vec![l(&wd.dzeta)? + l(&wd.dk)? * Complex64::new(0.0, xi)];
    for v in &wd.dmean {
        q.push(l(v)?);
    }
    if let Some(v) = &wd.denergy {
        q.push(l(v)?);
    }
    let scale = Complex64::new(1.0 / n_sites, 0.0);
    let mut qd = vec![l(&wd.u_ad)? * scale];
    for c in 0..sys.conserved_count() {
        let mut e = vec![0.0; d];
        e[c] = 1.0;
        qd.push(l(&fourier::constant(km, &e))? * scale);
    }
    if let Some(h) = &wd.delta_h {
        qd.push(l(h)? * scale);
    }
    Ok((matrix_of(&q), matrix_of(&qd)))
}

pub fn riesz_block(sys: &SystemSpec, u: &WaveProfile, xi: f64, opts: &RieszOptions) -> Result<RieszBlock, BlochError> {
    let wd = wave_derivatives(sys, u)?;
    riesz_block_with(sys, u, &wd, xi, opts)
}

/// As [`riesz_block`] with precomputed wave derivatives.
pub fn riesz_block_with(
    sys: &SystemSpec,
    u: &WaveProfile,
    wd: &WaveDerivatives,
    xi: f64,
    opts: &RieszOptions,
) -> Result<RieszBlock, BlochError> {
    let radius = match opts.radius {
        Some(r) => r,
        None => auto_radius(sys, u, opts.ode_tol)?,
    };
    let s = monodromy(&symbol_generator(sys, u, xi)?, opts.ode_tol)?.s0;
    for lam in eigenvalues(&s)? {
        let dist = ((lam - 1.0).norm() - radius).abs();
        if dist < 0.1 * radius {
            return Err(BlochError::ContourTooClose { distance: dist, radius });
        }
    }
    let mut nodes = opts.nodes;
    let mut p = projector(&s, radius, nodes);
    loop {
        if nodes >= opts.max_nodes {
            break;
        }
        let next = projector(&s, radius, 2 * nodes);
        nodes *= 2;
        let change = (&next - &p).norm();
        p = next;
        if change <= opts.projector_tol {
            break;
        }
    }
    let expected = critical_count(sys);
    let trace = p.trace();
    let rank = trace.re.round();
    if rank < 0.0 || rank as usize != expected || (trace - rank).norm() > 1e-6 {
        return Err(BlochError::ProjectorRankMismatch { expected, found: rank.max(0.0) as usize });
    }
    let (q0, qd0) = lifted_bases(sys, u, wd, xi)?;
    let q = &p * q0;
    let qd = p.adjoint() * qd0;
    let gram = qd.adjoint() * &q;
    let ginv = gram.clone().try_inverse().ok_or(BlochError::ProjectorRankMismatch { expected, found: 0 })?;
    let q_dual = qd * ginv.adjoint();
    let n = s.nrows();
    let reduced = q_dual.adjoint() * (&s - CMat::identity(n, n)) * &q;
    let rescaled = (xi != 0.0).then(|| {
        let ixi = Complex64::new(0.0, xi);
        let mut w = reduced.clone();
        for a in 0..expected {
            for b in 0..expected {
                let left = if a == 0 { ixi } else { Complex64::new(1.0, 0.0) };
                let right = if b == 0 { 1.0 / ixi } else { Complex64::new(1.0, 0.0) };
                w[(a, b)] *= left * right / ixi;
            }
        }
        w
    });
    let dual = q_dual.adjoint() * &q;
    let duality_defect = (dual - CMat::identity(expected, expected)).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    Ok(RieszBlock { xi, radius, nodes, reduced, rescaled, q, q_dual, projector_trace: trace, duality_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::track_branches;
    use crate::presets::{lambda_omega_exact, Preset, WaveRequest};
    use crate::profile::{NewtonOptions, Wavenumber};

    #[test]
    fn reaction_diffusion_block_is_zero_at_origin() {
        let sys = SystemSpec::lambda_omega(0.5, 1.0, -1.0);
        let u = lambda_omega_exact(0.5, 1.0, -1.0, Wavenumber::rational(1, 6).unwrap(), 8).unwrap();
        let b = riesz_block(&sys, &u, 0.0, &RieszOptions::default()).unwrap();
        assert_eq!(b.reduced.shape(), (1, 1));
        assert!(b.reduced[(0, 0)].norm() < 1e-8);
        assert!(b.duality_defect < 1e-9);
    }

    #[test]
    fn mixed_block_at_origin_is_nilpotent() {
        let p = Preset::RollWaves { eta: 1.0, nu: 0.1 };
        let req = WaveRequest { k: (-1, 6), k_modes: 16, amplitude: 0.185, means: None, energy: None, base_mean: None };
        let sys = p.system();
        let u = p.wave(&req, &NewtonOptions::default()).unwrap();
        let wd = wave_derivatives(&sys, &u).unwrap();
        let b = riesz_block_with(&sys, &u, &wd, 0.0, &RieszOptions::default()).unwrap();
        let expect = wd.dmean_omega[0] / u.omega;
        assert!(b.reduced[(0, 0)].norm() < 1e-7);
        assert!(b.reduced[(1, 0)].norm() < 1e-7);
        assert!(b.reduced[(1, 1)].norm() < 1e-7);
        assert!((b.reduced[(0, 1)] - expect).norm() < 1e-7, "{} vs {expect}", b.reduced[(0, 1)]);
        // Trace against the tracked multipliers.
        let xi = 5e-4;
        let bx = riesz_block_with(&sys, &u, &wd, xi, &RieszOptions::default()).unwrap();
        let set = track_branches(&sys, &u, &[xi], Some(bx.radius), DEFAULT_TOL).unwrap();
        let sum: Complex64 = set.branches.iter().map(|br| br.values[0] - 1.0).sum();
        assert!((bx.reduced.trace() - sum).norm() < 1e-8);
    }
}

//! Bordered Newton iteration for the profile equations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::linearize::ProfileOperator;
use super::{
    profile_energy, profile_variational, profile_vector_field, AmplitudeAnchor, ProfileError, ProfileTargets,
    SolverMeta, WaveProfile, Wavenumber,
};
use crate::fourier::{self, mode_index, FourierSpace, Modes};
use crate::model::{SystemClass, SystemSpec};

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest acceptable 1-norm condition number of the bordered matrix.
    pub max_condition: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 25, max_condition: 1e13 }
    }
}

const COLLAPSE: f64 = 1e-6;

/// The square bordered system shared by the solver and the derivative solves.
pub(crate) struct Bordered<'a> {
    pub sys: &'a SystemSpec,
    pub space: &'a FourierSpace,
    pub k: f64,
    pub targets: &'a ProfileTargets,
    /// Phase reference `∂_ζu_ref` and `u_ref`.
    pub ref_dz: Modes,
    pub ref_modes: Modes,
}

#[derive(Clone, Debug)]
pub(crate) struct Unknowns {
    pub modes: Modes,
    pub omega: f64,
    pub slack: f64,
}

impl Bordered<'_> {
    pub fn d(&self) -> usize {
        self.sys.dim()
    }

    pub fn n(&self) -> usize {
        self.space.n_modes() * self.d()
    }

    pub fn has_slack(&self) -> bool {
        self.sys.class() == SystemClass::Hamiltonian
    }

    pub fn size(&self) -> usize {
        self.n() + 1 + usize::from(self.has_slack())
    }

    /// Zero-mode rows replaced by average constraints.
    pub fn mean_rows(&self) -> Vec<usize> {
        let km = self.space.k_modes();
        (0..self.sys.conserved_count()).map(|i| mode_index(km, self.d(), 0, i)).collect()
    }

    /// Row carrying the amplitude anchor, if any.
    pub fn anchor_row(&self) -> Option<usize> {
        let a = self.targets.anchor?;
        match self.sys.class() {
            SystemClass::Hamiltonian => Some(self.n() + 1),
            _ => Some(mode_index(self.space.k_modes(), self.d(), 0, a.component)),
        }
    }

    pub fn residual_modes(&self, x: &Unknowns) -> Modes {
        let mut r = profile_vector_field(self.sys, self.space, self.k, &x.modes);
        r -= fourier::derivative(&x.modes, self.d()) * Complex64::new(x.omega, 0.0);
        r
    }

    pub fn equations(&self, x: &Unknowns) -> Result<(CVec, Modes), ProfileError> {
        let n = self.n();
        let d = self.d();
        let km = self.space.k_modes();
        let res = self.residual_modes(x);
        let mut f = CVec::zeros(self.size());
        f.rows_mut(0, n).copy_from(&res);
        if self.has_slack() {
            let dh = profile_variational(self.sys, self.space, self.k, &x.modes)?;
            let mut top = f.rows_mut(0, n);
            top += dh * Complex64::new(x.slack, 0.0);
        }
        for (i, row) in self.mean_rows().into_iter().enumerate() {
            f[row] = x.modes[row] - self.targets.means[i];
        }
        f[n] = fourier::pairing(&self.ref_dz, &(&x.modes - &self.ref_modes));
        if self.has_slack() && self.targets.anchor.is_none() {
            let e = profile_energy(self.sys, self.space, self.k, &x.modes)?;
            f[n + 1] = Complex64::new(e - self.targets.energy.unwrap_or(0.0), 0.0);
        }
        if let (Some(row), Some(AmplitudeAnchor { component, amplitude })) = (self.anchor_row(), self.targets.anchor) {
            let c1 = x.modes[mode_index(km, d, 1, component)];
            let cm = x.modes[mode_index(km, d, -1, component)];
            f[row] = c1 * cm - amplitude * amplitude;
        }
        Ok((f, res))
    }

    /// Bordered Jacobian at `x` (the slack's own curvature term is omitted; it vanishes at solutions).
    pub fn jacobian(&self, x: &Unknowns, op: &ProfileOperator) -> Result<CMat, ProfileError> {
        let n = self.n();
        let d = self.d();
        let km = self.space.k_modes();
        let mut j = CMat::zeros(self.size(), self.size());
        j.view_mut((0, 0), (n, n)).copy_from(&op.l(x.omega));
        let dz = fourier::derivative(&x.modes, d);
        j.view_mut((0, n), (n, 1)).copy_from(&(-&dz));
        let dh = if self.has_slack() {
            let dh = profile_variational(self.sys, self.space, self.k, &x.modes)?;
            j.view_mut((0, n + 1), (n, 1)).copy_from(&dh);
            Some(dh)
        } else {
            None
        };
        for row in self.mean_rows() {
            j.row_mut(row).fill(Complex64::new(0.0, 0.0));
            j[(row, row)] = Complex64::new(1.0, 0.0);
        }
        for c in 0..n {
            j[(n, c)] = self.ref_dz[c].conj();
        }
        if let Some(dh) = dh {
            for c in 0..n {
                j[(n + 1, c)] = dh[c].conj();
            }
        }
        if let (Some(row), Some(a)) = (self.anchor_row(), self.targets.anchor) {
            j.row_mut(row).fill(Complex64::new(0.0, 0.0));
            let i1 = mode_index(km, d, 1, a.component);
            let im = mode_index(km, d, -1, a.component);
            j[(row, i1)] = x.modes[im];
            j[(row, im)] = x.modes[i1];
        }
        Ok(j)
    }
}

/// Solves `J x = b` returning the 1-norm condition estimate, or fails if singular.
pub(crate) fn solve_checked(j: &CMat, rhs: &CMat, max_condition: f64) -> Result<(CMat, f64), ProfileError> {
    let inv = j.clone().try_inverse().ok_or(ProfileError::SingularJacobian { condition: f64::INFINITY })?;
    let cond = norm1(j) * norm1(&inv);
    if !cond.is_finite() || cond > max_condition {
        return Err(ProfileError::SingularJacobian { condition: cond });
    }
    Ok((inv * rhs, cond))
}

pub(crate) fn norm1(m: &CMat) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn sup(v: &CVec) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn check_targets(sys: &SystemSpec, t: &ProfileTargets) -> Result<(), ProfileError> {
    let need = sys.conserved_count();
    if t.means.len() != need {
        return Err(ProfileError::InvalidTargets(format!("expected {need} averages, got {}", t.means.len())));
    }
    match (sys.class(), t.anchor, t.energy) {
        (SystemClass::ReactionDiffusion, Some(_), _) => {
            Err(ProfileError::InvalidTargets("amplitude anchors need a free conserved quantity".into()))
        }
        (SystemClass::Mixed, Some(a), _) if a.component >= need => {
            Err(ProfileError::InvalidTargets("anchor must sit on a conserved component".into()))
        }
        (SystemClass::Hamiltonian, Some(a), _) if a.component >= sys.dim() => {
            Err(ProfileError::InvalidTargets("anchor component out of range".into()))
        }
        (SystemClass::Hamiltonian, None, None) => Err(ProfileError::InvalidTargets("energy target required".into())),
        _ => Ok(()),
    }
}

/// Newton iteration on the bordered profile system, phase pinned to the guess.
///
/// With an amplitude anchor the average of the anchored component (mixed) or
/// the energy (Hamiltonian) is left free; the returned targets record the
/// values actually attained.
pub fn solve_profile(
    sys: &SystemSpec,
    k: Wavenumber,
    targets: &ProfileTargets,
    guess: &WaveProfile,
    opts: &NewtonOptions,
) -> Result<WaveProfile, ProfileError> {
    if guess.dim != sys.dim() {
        return Err(ProfileError::DimensionMismatch { expected: sys.dim(), got: guess.dim });
    }
    if k.value() == 0.0 {
        return Err(ProfileError::ZeroWavenumber);
    }
    check_targets(sys, targets)?;
    let d = sys.dim();
    let space = FourierSpace::new(guess.k_modes());
    let ref_modes = guess.modes.clone();
    let b = Bordered {
        sys,
        space: &space,
        k: k.value(),
        targets,
        ref_dz: fourier::derivative(&ref_modes, d),
        ref_modes,
    };
    let n = b.n();
    let mut x = Unknowns { modes: guess.modes.clone(), omega: guess.omega, slack: 0.0 };
    let (mut f, _) = b.equations(&x)?;
    let mut norm = sup(&f);
    let mut iterations = 0;
    let mut condition = f64::NAN;
    loop {
        if fourier::sup_norm(&fourier::derivative(&x.modes, d)) < COLLAPSE {
            return Err(ProfileError::NoConvergence {
                iterations,
                residual: norm,
                reason: "iterate collapsed to a constant state".into(),
            });
        }
        if norm <= opts.tol {
            break;
        }
        if iterations == opts.max_iter {
            return Err(ProfileError::NoConvergence { iterations, residual: norm, reason: "iteration cap reached".into() });
        }
        let op = ProfileOperator::new(sys, &space, b.k, &x.modes);
        let jac = b.jacobian(&x, &op)?;
        let rhs = CMat::from_column_slice(f.len(), 1, f.as_slice());
        let (step, cond) = solve_checked(&jac, &rhs, opts.max_condition)?;
        condition = cond;
        let mut lambda = 1.0;
        loop {
            let mut modes = &x.modes - step.rows(0, n).column(0) * Complex64::new(lambda, 0.0);
            fourier::symmetrize(&mut modes, space.k_modes(), d);
            let trial = Unknowns {
                modes,
                omega: x.omega - lambda * step[(n, 0)].re,
                slack: if b.has_slack() { x.slack - lambda * step[(n + 1, 0)].re } else { 0.0 },
            };
            let (ft, _) = b.equations(&trial)?;
            let nt = sup(&ft);
            if nt.is_finite() && (nt < norm || nt <= opts.tol) {
                x = trial;
                f = ft;
                norm = nt;
                break;
            }
            lambda *= 0.5;
            if lambda < 1.0 / 64.0 {
                return Err(ProfileError::NoConvergence {
                    iterations,
                    residual: norm,
                    reason: "damped step failed to reduce the residual".into(),
                });
            }
        }
        iterations += 1;
    }
    if b.has_slack() && x.slack.abs() > 1e-8 {
        return Err(ProfileError::NoConvergence {
            iterations,
            residual: norm,
            reason: format!("energy slack did not vanish ({:.3e})", x.slack),
        });
    }
    if x.omega.abs() <= opts.tol {
        return Err(ProfileError::NoConvergence { iterations, residual: norm, reason: "standing wave (ω = 0)".into() });
    }
    let res = b.residual_modes(&x);
    if condition.is_nan() {
        let op = ProfileOperator::new(sys, &space, b.k, &x.modes);
        let jac = b.jacobian(&x, &op)?;
        condition = jac.clone().try_inverse().map(|inv| norm1(&jac) * norm1(&inv)).unwrap_or(f64::INFINITY);
    }
    let means = fourier::mean(&x.modes, d)[..sys.conserved_count()].to_vec();
    let energy = if sys.has_energy() { Some(profile_energy(sys, &space, b.k, &x.modes)?) } else { None };
    Ok(WaveProfile {
        class: sys.class(),
        dim: d,
        k,
        omega: x.omega,
        modes: x.modes,
        targets: ProfileTargets { means, energy, anchor: targets.anchor },
        residual: fourier::sup_norm(&res),
        meta: SolverMeta { iterations, tolerance: opts.tol, grid: space.grid(), slack: x.slack, condition },
    })
}

//! Floquet–Bloch analysis of the linearization about a commensurable wave.

mod branches;
mod monodromy;
mod riesz;
mod symbol;
mod transform;

use thiserror::Error;

pub use crate::linalg::{eig_dense, EigError, EigenPair};
pub use branches::{auto_radius, branches_csv, critical_cluster, track_branches, track_branches_counted, BranchSet, SpectralBranch};
pub use monodromy::{evolution, monodromy, monodromy_expansion, BlochMonodromy, DEFAULT_TOL};
pub use riesz::{riesz_block, riesz_block_with, RieszBlock, RieszOptions};
pub use symbol::{lift, lift_along, symbol_generator, SymbolGenerator};
pub use transform::{dbt, idbt, idbt_complex, sampled_exponents, BlochSample};

use crate::model::SystemSpec;
use crate::ode::OdeError;
use crate::profile::ProfileError;

#[derive(Debug, Error)]
pub enum BlochError {
    #[error("ring of {sites} sites is not a multiple of the period {n}")]
    Divisibility { sites: usize, n: usize },
    #[error("wavenumber is not rational; the linearization has no lattice period")]
    IrrationalWavenumber,
    #[error("monodromy integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error("{found} multipliers in B(1, {radius:.3e}) at ξ = {xi:.6e}, expected {expected}")]
    BranchCountMismatch { xi: f64, expected: usize, found: usize, radius: f64 },
    #[error("branch matching ambiguous near ξ = {xi:.6e} (overlap {overlap:.3})")]
    MatchingAmbiguity { xi: f64, overlap: f64 },
    #[error("multiplier {distance:.3e} from the contour of radius {radius:.3e}")]
    ContourTooClose { distance: f64, radius: f64 },
    #[error("spectral projector has rank {found}, expected {expected}")]
    ProjectorRankMismatch { expected: usize, found: usize },
    #[error("empty ξ grid")]
    EmptyGrid,
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Number of multipliers at 1 for `ξ = 0`: the phase plus one per conserved
/// average plus one for the energy.
pub fn critical_count(sys: &SystemSpec) -> usize {
    sys.modulation_size()
}

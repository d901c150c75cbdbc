//! Periodic traveling waves of lattice dynamical systems, their Floquet–Bloch
//! spectra near the critical multiplier and the associated modulation theory.
pub mod bloch;
pub mod fourier;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod presets;
pub mod profile;
pub mod ring;
pub mod ringsim;
pub mod shift;
pub mod validate;
pub mod whitham;

pub use model::{SystemClass, SystemSpec};
pub use profile::{WaveProfile, Wavenumber};
pub use ring::RingState;
pub use shift::ShiftPolynomial;

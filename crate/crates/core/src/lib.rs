//! Numerical core for the tilted Bose-Hubbard chain.
//!
//! Two independent routes probe the same physics:
//!
//! * [`floquet`] and [`spectral`] build the one-period Floquet-Bloch
//!   propagator of the gauge-transformed, translation-invariant chain inside a
//!   single quasimomentum sector and score its nearest-neighbour eigenphase
//!   spacings against Poisson and Wigner-Dyson statistics.
//! * [`mps`] and [`tebd`] evolve separable Fock states of the open chain with
//!   a truncated, particle-number conserving matrix product state and expose
//!   the Schmidt spectra that decide whether such a simulation is cheap.
//!
//! [`oracle`] holds brute-force state-vector counterparts used to validate
//! both routes on small systems, and [`fock`] provides the shared basis and
//! operator machinery.

pub mod error;
pub mod floquet;
pub mod fock;
pub mod linalg;
pub mod mps;
pub mod oracle;
pub mod spectral;
pub mod tebd;

pub use error::{Error, Result};
pub use faer::c64;

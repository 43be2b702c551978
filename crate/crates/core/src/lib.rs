//! Genus-one complex Chern–Simons quantisation on the abelian torus model.
//!
//! The crate works on the Cartan-subalgebra model ℝ^{4r} of the moduli space,
//! with explicit polarisations, quantum connections in three presentations
//! (Hitchin–Witten on Hermite coefficients, complexified Hitchin on Fock
//! polynomials, and the explicit L2 form), the Bargmann transform between
//! them, and parallel transport on Teichmüller space.

pub mod cartan;
pub mod equivariant;
pub mod error;
pub mod bargmann;
pub mod basis;
pub mod frames;
pub mod linop;
pub mod quad;
pub mod quantops;
pub mod sections;
pub mod transport;

pub use error::{Error, Result};

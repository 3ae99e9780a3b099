//! Space-time cut finite element solver for coupled bulk-surface
//! convection-diffusion on time-dependent domains.
//!
//! A surfactant dissolved in the outer fluid phase Ω₁(t) and adsorbed on the
//! moving interface Γ(t) is modeled by two coupled convection-diffusion
//! equations, one in the bulk and one on the interface, exchanging mass
//! through an adsorption-desorption flux (Langmuir, Henry or Frumkin).
//! The interface is the zero contour of a piecewise-linear level set on a
//! uniformly refined background mesh. Each time slab solves a
//! discontinuous-in-time P1 ⊗ P1 system on the active cut patches, with
//! face-jump ghost penalties keeping the algebraic systems well conditioned
//! for arbitrary cut positions and an optional scalar Lagrange multiplier
//! enforcing the total surfactant mass at slab endpoints.
//!
//! Module layout follows the pipeline:
//! [`mesh`] → [`levelset`] → [`cutgeom`] → [`slabspace`] → [`forms`] →
//! [`solver`] → [`harness`].

pub mod cutgeom;
pub mod error;
pub mod forms;
pub mod harness;
pub mod levelset;
pub mod mesh;
pub mod quadrature;
pub mod slabspace;
pub mod solver;
pub mod vec2;

pub use error::{Error, Result};
pub use vec2::Vec2;

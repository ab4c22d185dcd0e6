//! Numerical laboratory for the Sherrington–Kirkpatrick model at high
//! temperature.
//!
//! The crate builds the iterative TAP construction on sampled
//! disorder, evaluates the deterministic state-evolution theory that tracks
//! it, and computes the conditional moments of the reduced partition
//! function that drive the conditional second-moment argument for the
//! replica-symmetric free energy.
//!
//! Module map:
//!
//! * [`quad`] – Gauss–Hermite expectations over standard Gaussians, `ψ`.
//! * [`scalar`] – fixed point `q`, state evolution, AT / main conditions,
//!   replica-symmetric free energy.
//! * [`tap`] – disorder, the TAP iteration, modified couplings and the
//!   conditional resampler.
//! * [`reduced`] – coin-tossing measure, restricted set, reduced partition
//!   function and its conditional moments.
//! * [`experiment`] – exact free energies, disorder averages, Hamiltonian
//!   decomposition, lower-bound pipeline.
//! * [`phase`] – phase boundaries in the `(T, h)` plane.

pub mod error;
pub mod experiment;
pub mod gray;
pub mod linalg;
pub mod phase;
pub mod quad;
pub mod reduced;
pub mod registry;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod summation;
pub mod tap;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use quad::{default_rule, gauss_hermite_rule, QuadratureRule};
pub use scalar::{ModelParams, OverlapFixedPoint, StateEvolutionTable};

//! Numerically exact memory kernels and inhomogeneous terms for the
//! generalized quantum master equations (GQMEs) of the spin-boson model.
//!
//! The pipeline has two halves. The dynamics half builds the thermo-field
//! double-space Hamiltonian of a spin-boson model, propagates it either as a
//! tensor train (fixed-rank projector-splitting integrator) or as a dense
//! state vector (Krylov reference backend), and extracts the electronic
//! propagator superoperator series `U(t)`. The GQME half differentiates
//! `U(t)` into projection-free inputs, solves the Volterra integral
//! equations for the memory kernel and inhomogeneous term of each GQME
//! variant, and integrates the resulting equations of motion with RK4,
//! including a memory-time truncation search.
//!
//! All quantities use reduced units: energies in units of the electronic
//! coupling, times in inverse couplings, and ħ = 1. Liouville-space indices
//! are ordered (DD, DA, AD, AA) throughout.

pub mod dense;
pub mod error;
pub mod gqme;
pub mod io;
pub mod ksl;
pub mod linalg;
pub mod model;
pub mod par;
pub mod pfi;
pub mod tfd;
pub mod tt;
pub mod volterra;

/// Complex double-precision scalar used everywhere in the crate.
pub type C64 = num_complex::Complex64;

pub use error::{Error, Result};
pub use model::{ElectronicLiouvillian, SpinBosonModel, SpinBosonParams};
pub use tfd::{Backend, PropagatorSeries};
pub use volterra::{GqmeType, InhomSeries, KernelSeries};

#[doc(hidden)]
pub mod testutil;

//! Simulator and analysis toolkit for dissipative preparation of Bell and
//! N-partite W states of qubits coupled to a common 1-D waveguide.
//!
//! The crate is organized around the physical pipeline:
//!
//! - [`hilbert`]: operators and states on the composite Hilbert space of N
//!   two-level systems (plus the three-level case used by [`qutrit`]).
//! - [`model`]: physical chain descriptions and the matrices entering the
//!   master equation (cooperative decay κ_jm, coherent coupling λ_jm, drive).
//! - [`lindblad`]: master-equation right-hand side and adaptive density-matrix
//!   integration with trace/Hermiticity/positivity control.
//! - [`spectral`]: single-excitation analysis of the effective non-Hermitian
//!   Hamiltonian — dark/bright eigenmodes and the W-state coupling condition.
//! - [`protocol`]: end-to-end preparation runs, fidelity-maximum location,
//!   drive-strength optimization and position-deviation sweeps.
//! - [`qutrit`]: the single driven three-level transmon used to bound leakage
//!   out of the qubit subspace.
//!
//! All angular frequencies and rates are in rad/μs and times in μs; a
//! "frequency/2π in MHz" value ν converts as ω = 2π·ν.

pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod lindblad;
pub mod model;
pub mod protocol;
pub mod qutrit;
pub mod spectral;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

//! Tight-binding wave packets in a time-dependent Markov ("flip process")
//! potential.
//!
//! Two independent routes to the same physics:
//!
//! * **Monte Carlo** — unitary propagation of single trajectories through a
//!   piecewise-constant Hamiltonian `H(t) = T + λ v(ω(t))`, averaged over an
//!   ensemble of flip-process realizations ([`ensemble`]).
//! * **Spectral** — the disorder-averaged density is a matrix element of a
//!   contraction semigroup on an augmented space; its fibered generator
//!   `L̂_k = iK̂_k + iλV̂ + B` is built in a truncated character basis and the
//!   diffusion matrix is read off the dispersion eigenvalue `E(k)` near zero
//!   ([`spectral`]).
//!
//! The two routes must agree; the integration suite in `tests/acceptance.rs`
//! checks that they do.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod evolve;
pub mod flip;
pub mod lattice;
pub mod rngstream;
pub mod sparse;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

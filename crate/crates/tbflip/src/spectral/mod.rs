//! The augmented-space route: sparse builders for K̂_k, V̂, B in the
//! character basis, dense tiny-instance oracles, the dispersion eigenvalue
//! E(k), the diffusion matrix, weak-coupling asymptotics, and the spectral
//! gap.

pub mod basis;
pub mod build;
pub mod dense;
pub mod report;
pub mod solve;

pub use basis::{CharacterBasis, Truncation};
pub use build::{build_b, build_k, build_l, build_v, dk_rhs, BuiltOperator};
pub use report::SpectralReport;

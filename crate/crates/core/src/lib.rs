//! Exact diagonalization of two interacting bosons on a non-Hermitian
//! Aubry-André-Harper lattice.
//!
//! The model is
//!
//! ```text
//! H = -J Σ_l (b†_l b_{l+1} + h.c.) - μ Σ_l e^{i(2παl + θ/L)} n_l + U/2 Σ_l n_l (n_l - 1)
//! ```
//!
//! restricted to the two-particle sector. Each module covers one family of
//! diagnostics:
//!
//! - [`model`]: Fock basis and dense Hamiltonians (two-boson, single-particle).
//! - [`spectral`]: eigendecomposition and PT-breaking indicators.
//! - [`localization`]: IPR/NPR statistics and phase classification.
//! - [`topology`]: spectral winding numbers under a phase twist.
//! - [`dynamics`]: postselected wavepacket evolution and jump forecasts.
//! - [`entanglement`]: number/configuration entanglement entropy.
//! - [`doublon`]: strong-coupling bound-pair band and effective Hamiltonian.
//! - [`sweep`]: parameter grids, configuration and file output.

pub mod doublon;
pub mod dynamics;
pub mod entanglement;
mod error;
pub mod localization;
pub mod model;
pub mod spectral;
pub mod sweep;
pub mod topology;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMat = faer::Mat<C64>;

pub use model::{Boundary, FockBasis, HamiltonianMatrix, ModelParams};
pub use spectral::SpectralDecomposition;

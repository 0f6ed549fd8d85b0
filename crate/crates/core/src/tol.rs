//! Centralized numeric tolerances.
//!
//! All algebraic identities (trace preservation, unitarity, probability
//! normalization) are checked at [`ALGEBRAIC`]; anything that goes through an
//! eigen- or singular-value decomposition uses the looser [`SPECTRAL`].

/// Tolerance for exact algebraic identities in f64.
pub const ALGEBRAIC: f64 = 1e-10;

/// Tolerance for quantities obtained through spectral decompositions.
pub const SPECTRAL: f64 = 1e-9;

/// Eigenvalues of a density operator may dip this far below zero before the
/// operator is rejected as non-positive.
pub const PSD_FLOOR: f64 = -1e-9;

/// Post-selection outcomes with probability below this are flagged as
/// unreachable rather than conditioned on. Sits well below [`ALGEBRAIC`] so
/// only exact zeros trigger it.
pub const UNREACHABLE_BRANCH: f64 = 1e-14;

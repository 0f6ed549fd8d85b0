//! Simulation of an entangled quantum SWITCH experiment.
//!
//! Two photonic SWITCHes share an entangled pair of control qubits while
//! their target qubits start in a product state. Post-selecting the controls
//! in the `{|+>, |->}` basis transfers the entanglement to the targets, which
//! can then violate a CHSH inequality even though only local gates acted on
//! them. This crate models the whole pipeline at the density-matrix level:
//!
//! * [`linalg`] — dense complex states, gates, partial trace, fidelity and
//!   concurrence for registers of up to a few qubits,
//! * [`switch`] — the controlled-order isometry and control post-selection,
//! * [`noise`] — source-entanglement degradation, order dephasing and
//!   Gaussian phase jitter,
//! * [`measurement`] — Born probabilities, seeded coincidence counts with
//!   detector efficiencies, and correlation values,
//! * [`bell`] — CHSH from states or counts and the Horodecki maximal-CHSH
//!   criterion,
//! * [`tomography`] — linear and maximum-likelihood two-qubit reconstruction
//!   with Monte Carlo error propagation,
//! * [`gpt`] — theory-independent product-state checks in the generalized
//!   probabilistic theory (GPT) framework,
//! * [`causal`] — causal decomposition of the three-party SWITCH behavior,
//! * [`pipeline`] — end-to-end experiment runs wiring the above together.

pub mod bell;
pub mod causal;
pub mod error;
pub mod gpt;
pub mod linalg;
pub mod measurement;
pub mod noise;
pub mod pipeline;
pub mod switch;
pub mod tol;
pub mod tomography;

pub use error::{Error, Result};
pub use linalg::{DensityOperator, GateSpec, StateVector};

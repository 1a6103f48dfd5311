//! Entanglement versus metrological capacity for two-qubit states.
//!
//! The crate samples random two-qubit density matrices, computes concurrence,
//! negativity and the relative entropy of entanglement, maximizes the quantum
//! Fisher information over local unitaries, pushes states through decoherence
//! channels, and fits and validates saturation models relating the two.
//!
//! Module map:
//! - [`linalg`]: 2×2/4×4 complex kernels (Hermitian eigensolver, Kronecker
//!   product, partial transpose, trace norm, matrix log).
//! - [`states`]: density matrices, Hilbert-Schmidt sampling, reference states.
//! - [`entanglement`]: concurrence, negativity, relative entropy of entanglement.
//! - [`metrology`]: QFI and its maximization over local unitaries.
//! - [`channels`]: amplitude damping, phase damping, depolarizing; sweeps.
//! - [`stats`]: binning, model fitting, cross-validation, bootstrap.
//! - [`pipeline`]: configuration, ensemble runs, analysis bundles, CLI.

pub mod channels;
pub mod entanglement;
pub mod linalg;
pub mod metrology;
pub mod optim;
pub mod pipeline;
pub mod seed;
pub mod states;
pub mod stats;

pub use linalg::{CMat, C64};
pub use states::{DensityMatrix, EnsembleRecord};

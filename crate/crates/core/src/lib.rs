//! Value iteration for finite Markov decision processes with the Projective
//! and Linear Extension accelerators.
//!
//! Models are stored row-compressed ([`MdpModel`]). The backup operators
//! (standard, Jacobi, Gauss-Seidel, GSJ and the undiscounted total-reward
//! backup) live in [`operators`], the accelerators in [`accelerators`], and
//! [`solver::run`] ties them together.

pub mod accelerators;
pub mod bench;
pub mod error;
pub mod generators;
pub mod model;
pub mod operators;
pub mod solver;
pub mod verification;

pub use accelerators::{AcceleratorKind, AlphaResult};
pub use error::{Error, Result};
pub use generators::{generate, Family, GeneratorSpec};
pub use model::{ActionSpec, MdpModel, Mode, Policy, ValueVector};
pub use operators::{OperatorKind, WeightedSums};
pub use solver::{run, InitialPoint, IterationReport, SolverConfig};

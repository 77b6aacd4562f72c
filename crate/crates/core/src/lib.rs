//! Spectral-Galerkin simulation of the stochastic nonlocal convective
//! Cahn–Hilliard equation with additive Q-Wiener noise, plus executable
//! checks of its energy identity, weak- and strong-solution identities and
//! pathwise uniqueness bound.

pub mod error;
pub mod io;
pub mod noise;
pub mod physics;
pub mod solver;
pub mod spectral;
pub mod test_function;
pub mod verify;

pub use error::{Error, Result};

pub use noise::{IcSpec, NoiseSpec, SeedLineage, ThetaSpec, WienerPath};
pub use physics::{ConvolutionBackend, KernelSpec, KernelTable, PotentialMode, VelocitySpec};
pub use solver::{Simulator, SolverConfig, Stepper, Trajectory, TrajectoryStatus};
pub use spectral::{BasisSpec, Domain, GridField, SpectralField};
pub use test_function::{TestFunction, TimeProfile};

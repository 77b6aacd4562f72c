//! Executable checks: the Itô energy balance, moment bounds along an `m`
//! ladder, the weak-solution characteristic-functional identity, the
//! strong-solution residual and the pathwise Gronwall bound.

mod convergence;
mod energy;
mod functional;
mod moments;
mod report;
mod strong;
mod uniqueness;
mod weak;

pub use convergence::{
    energy_convergence, strong_order_study, EnergyConvergence, StrongOrderEntry, StrongOrderStudy, EXACT_FLOOR,
};
pub use energy::{energy, energy_functional, energy_identity_residual, gradient_mu_norm, EnergyLedger};
pub use functional::c_functional;
pub use moments::{
    estimate_moments, path_functionals, MomentReport, MomentRow, NormExponents, FUNCTIONAL_NAMES, HOLDER_BETA,
};
pub use report::{render_table, ReportHeader, Tolerance};
pub use strong::{strong_residual, LineagePolicy, StrongEntry, StrongReport, DEFAULT_EPSILON};
pub use uniqueness::{
    gronwall_constant, gronwall_constant_for, uniqueness_gronwall, GronwallTolerance, UniquenessReport,
};
pub use weak::{weak_bias_fit, weak_solution_check, PathSource, WeakBiasFit, WeakEntry, WeakReport};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::solver::{Simulator, Trajectory};

/// Slack and round-off allowance for the discrete Gronwall test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallTolerance {
    /// Relative slack on `K`.
    pub slack: f64,
    pub absolute: f64,
    pub relative: f64,
}

impl Default for GronwallTolerance {
    fn default() -> Self {
        Self {
            slack: 0.1,
            absolute: 1e-15,
            relative: 1e-9,
        }
    }
}

/// `K = (2‖∇J‖²_{L¹} + ‖u‖²_{L∞}) / c0`.
pub fn gronwall_constant(grad_j_l1: f64, u_sup: f64, c0: f64) -> f64 {
    (2.0 * grad_j_l1 * grad_j_l1 + u_sup * u_sup) / c0
}

pub fn gronwall_constant_for(sim: &Simulator) -> f64 {
    gronwall_constant(sim.kernel().grad_l1_norm(), sim.velocity().sup_norm(), sim.c0())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    /// `G(t_n) = Σ_{k≥1} r_k² / (μ_k − 1)` with `r = φ1 − φ2`.
    pub g: Vec<f64>,
    pub k: f64,
    pub k_effective: f64,
    /// Steps `n` at which `G(t_{n+1}) > G(t_n)(1 + K_eff Δt) + tol`.
    pub violations: Vec<usize>,
    /// Largest `G(t_{n+1}) / (G(t_n)(1 + K_eff Δt) + tol)`.
    pub worst_ratio: f64,
    pub max_mean_gap: f64,
    pub bitwise_identical: bool,
    pub tolerance: GronwallTolerance,
}

impl UniquenessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.max_mean_gap == 0.0
    }
}

/// Checks the discrete Gronwall bound between two trajectories on one path.
pub fn uniqueness_gronwall(
    sim: &Simulator,
    first: &Trajectory,
    second: &Trajectory,
    tolerance: GronwallTolerance,
) -> Result<UniquenessReport> {
    if first.times() != second.times() {
        return Err(invalid("trajectories are recorded at different times"));
    }
    let (p1, p2) = (first.path(), second.path());
    if p1.lineage() != p2.lineage() || p1.increments() != p2.increments() {
        return Err(Error::LineageMismatch("trajectories were driven by different paths".into()));
    }
    if first.initial().coeffs()[0] != second.initial().coeffs()[0] {
        return Err(invalid("initial mean modes differ"));
    }
    if !first.is_completed() || !second.is_completed() {
        return Err(Error::Trajectory("uniqueness check needs completed trajectories".into()));
    }
    let lambda: Vec<f64> = sim.basis().eigenvalues().iter().map(|mu| mu - 1.0).collect();
    let mut g = Vec::with_capacity(first.times().len());
    let mut max_mean_gap = 0.0f64;
    let mut bitwise_identical = true;
    for (a, b) in first.states().iter().zip(second.states()) {
        let r = a.sub(b);
        max_mean_gap = max_mean_gap.max(r.coeffs()[0].abs());
        bitwise_identical &= a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| x.to_bits() == y.to_bits());
        g.push(r.coeffs().iter().zip(&lambda).skip(1).map(|(rk, l)| rk * rk / l).sum());
    }
    let k = gronwall_constant_for(sim);
    let k_effective = k * (1.0 + tolerance.slack);
    let mut violations = Vec::new();
    let mut worst_ratio = 0.0f64;
    for (n, w) in first.times().windows(2).enumerate() {
        let bound = g[n] * (1.0 + k_effective * (w[1] - w[0])) + tolerance.absolute + tolerance.relative * g[n];
        worst_ratio = worst_ratio.max(g[n + 1] / bound);
        if g[n + 1] > bound {
            violations.push(n);
        }
    }
    Ok(UniquenessReport {
        times: first.times().to_vec(),
        g,
        k,
        k_effective,
        violations,
        worst_ratio,
        max_mean_gap,
        bitwise_identical,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{KernelSpec, VelocitySpec};
    use crate::solver::SolverConfig;
    use crate::spectral::SpectralField;

    #[test]
    fn k_is_monotone() {
        let base = gronwall_constant(1.0, 1.0, 1.5);
        assert!(gronwall_constant(1.5, 1.0, 1.5) >= base);
        assert!(gronwall_constant(1.0, 2.0, 1.5) >= base);
        assert_eq!(gronwall_constant(0.0, 0.0, 1.5), 0.0);
    }

    #[test]
    fn identical_runs() {
        let sim = Simulator::new(SolverConfig {
            horizon: 0.01,
            ..SolverConfig::desk()
        })
        .unwrap();
        let phi0 = SpectralField::mode(sim.basis().clone(), 2, 0.3).unwrap();
        let t = sim.simulate(&phi0, 5).unwrap();
        let u = sim.simulate(&phi0, 5).unwrap();
        let r = uniqueness_gronwall(&sim, &t, &u, GronwallTolerance::default()).unwrap();
        assert!(r.bitwise_identical && r.passed());
        assert!(r.g.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn perturbed_run_respects_bound() {
        let sim = Simulator::new(SolverConfig {
            lengths: vec![1.0, 1.0],
            modes: 10,
            horizon: 0.02,
            kernel: KernelSpec::Gaussian {
                amplitude: 10.0,
                width: 0.3,
            },
            velocity: VelocitySpec::StreamVortex { amplitude: 0.5 },
            ..SolverConfig::desk()
        })
        .unwrap();
        let b = sim.basis().clone();
        let phi0 = SpectralField::new(b.clone(), (0..10).map(|k| 0.2 / (k + 1) as f64).collect()).unwrap();
        let pert = phi0.add(&SpectralField::mode(b, 1, 1e-3).unwrap());
        let t1 = sim.simulate(&phi0, 1).unwrap();
        let t2 = sim.simulate(&pert, 1).unwrap();
        let r = uniqueness_gronwall(&sim, &t1, &t2, GronwallTolerance::default()).unwrap();
        assert!(r.k > 0.0);
        assert!(r.passed(), "violations at {:?}", r.violations);
        assert!(!r.bitwise_identical);

        let t3 = sim.simulate(&pert, 2).unwrap();
        assert!(uniqueness_gronwall(&sim, &t1, &t3, GronwallTolerance::default()).is_err());
        let shifted = phi0.add(&SpectralField::mode(sim.basis().clone(), 0, 1e-3).unwrap());
        let t4 = sim.simulate(&shifted, 1).unwrap();
        assert!(uniqueness_gronwall(&sim, &t1, &t4, GronwallTolerance::default()).is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::physics::{ConvolutionBackend, KernelTables, PotentialMode};
use crate::solver::{Simulator, Trajectory};
use crate::spectral::{GridField, SpectralField};

/// `Z(φ) = ∫ (aφ²/2 + F(φ)) − ½ (J∗φ, φ)` by grid quadrature.
pub fn energy_functional(
    phi: &SpectralField,
    tables: &KernelTables,
    a: &GridField,
    potential: PotentialMode,
    backend: ConvolutionBackend,
) -> Result<f64> {
    let grid = phi.evaluate();
    let conv = tables.convolve(&grid, backend)?;
    let w = grid.basis().grid().weight;
    let local: f64 = grid
        .values()
        .iter()
        .zip(a.values())
        .map(|(p, a)| 0.5 * a * p * p + potential.value(*p))
        .sum();
    Ok(w * local - 0.5 * conv.inner(&grid))
}

/// [`energy_functional`] with the simulator's kernel, `a` and potential.
pub fn energy(sim: &Simulator, phi: &SpectralField) -> Result<f64> {
    energy_functional(phi, sim.kernel(), sim.a(), sim.config().potential, sim.config().convolution)
}

/// Running terms of the Itô energy balance along one trajectory.
///
/// `residual[n] = energy[n] − energy[0] − drift_work[n] − martingale[n] − correction[n]`,
/// with the last three cumulative from `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub drift_work: Vec<f64>,
    pub martingale: Vec<f64>,
    pub correction: Vec<f64>,
    pub residual: Vec<f64>,
}

impl EnergyLedger {
    pub fn final_residual(&self) -> f64 {
        *self.residual.last().expect("nonempty ledger")
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Recomputes each residual from the stored columns.
    pub fn closes(&self) -> bool {
        (0..self.times.len()).all(|n| {
            self.energy[n] - self.energy[0] - self.drift_work[n] - self.martingale[n] - self.correction[n]
                == self.residual[n]
        })
    }
}

/// Builds the [`EnergyLedger`] of a densely recorded, completed trajectory.
pub fn energy_identity_residual(sim: &Simulator, traj: &Trajectory) -> Result<EnergyLedger> {
    if traj.config_hash() != sim.config_hash() {
        return Err(Error::LineageMismatch(
            "trajectory was produced under a different configuration".into(),
        ));
    }
    if !traj.is_completed() {
        return Err(Error::Trajectory("energy ledger needs a completed trajectory".into()));
    }
    if traj.record_stride() != 1 {
        return Err(invalid("energy ledger needs every step recorded (record_stride = 1)"));
    }
    let dt = traj.dt();
    let path = traj.path();
    let potential = sim.config().potential;
    let weight = sim.basis().grid().weight;
    let density = sim.noise_density();
    let trace = sim.noise_kernel_trace();

    let n_states = traj.states().len();
    let mut ledger = EnergyLedger {
        times: traj.times().to_vec(),
        energy: Vec::with_capacity(n_states),
        drift_work: vec![0.0],
        martingale: vec![0.0],
        correction: vec![0.0],
        residual: Vec::with_capacity(n_states),
    };
    for (n, state) in traj.states().iter().enumerate() {
        ledger.energy.push(energy(sim, state)?);
        if n + 1 == n_states {
            break;
        }
        let parts = sim.drift_parts(state)?;
        let mu = parts.mu.coeffs();
        let work: f64 = mu.iter().zip(parts.drift.coeffs()).map(|(m, b)| m * b).sum::<f64>() * dt;
        let mart: f64 = mu.iter().zip(path.increment(n)).map(|(m, w)| m * w).sum();
        let grid = state.evaluate();
        let local: f64 = grid
            .values()
            .iter()
            .zip(sim.a().values())
            .zip(density)
            .map(|((p, a), s)| (a + potential.second_derivative(*p)) * s)
            .sum();
        let corr = 0.5 * dt * (weight * local - trace);
        ledger.drift_work.push(ledger.drift_work[n] + work);
        ledger.martingale.push(ledger.martingale[n] + mart);
        ledger.correction.push(ledger.correction[n] + corr);
    }
    for n in 0..n_states {
        ledger.residual.push(
            ledger.energy[n] - ledger.energy[0] - ledger.drift_work[n] - ledger.martingale[n] - ledger.correction[n],
        );
    }
    Ok(ledger)
}

/// `Σ_n Δt_n ‖∇μ_m(t_n)‖²` over the recorded states (left-point rule).
pub fn gradient_mu_norm(sim: &Simulator, traj: &Trajectory) -> Result<f64> {
    let lambda: Vec<f64> = sim.basis().eigenvalues().iter().map(|mu| mu - 1.0).collect();
    let mut acc = 0.0;
    for (i, w) in traj.times().windows(2).enumerate() {
        let mu = sim.drift_parts(&traj.states()[i])?.mu;
        acc += (w[1] - w[0]) * grad_sq(&lambda, mu.coeffs());
    }
    Ok(acc)
}

pub(crate) fn grad_sq(lambda: &[f64], mu: &[f64]) -> f64 {
    lambda.iter().zip(mu).map(|(l, m)| l * m * m).sum()
}

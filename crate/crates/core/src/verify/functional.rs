use crate::error::{Error, Result};
use crate::solver::{Simulator, StepView, Trajectory};
use crate::spectral::SpectralField;
use crate::test_function::TestFunction;

/// Streams `C(φ, v) = −(φ0, v(0)) − ∫∫ φ u·∇v − ∫∫ (aφ + F′(φ) − J∗φ) Δv − ∫ (φ, ∂v/∂t)`
/// for a separable `v = g(t) e_k`, trapezoid rule in time.
#[derive(Debug, Clone)]
pub(crate) struct CAccumulator {
    v: TestFunction,
    horizon: f64,
    lambda: f64,
    /// `w_q (u·∇e_k)(x_q)`; `None` without convection.
    convection: Option<Vec<f64>>,
    acc: f64,
}

impl CAccumulator {
    pub(crate) fn new(sim: &Simulator, v: TestFunction) -> Result<Self> {
        v.validate(sim.horizon(), sim.basis().m())?;
        let basis = sim.basis();
        let convection = sim.velocity().components().map(|u| {
            let grads = SpectralField::mode(basis.clone(), v.mode, 1.0)
                .expect("mode in range")
                .gradient_evaluate();
            let w = basis.grid().weight;
            (0..basis.grid().len())
                .map(|q| w * u.iter().zip(&grads).map(|(ui, gi)| ui.values()[q] * gi.values()[q]).sum::<f64>())
                .collect()
        });
        Ok(Self {
            v,
            horizon: sim.horizon(),
            lambda: basis.eigenvalues()[v.mode] - 1.0,
            convection,
            acc: 0.0,
        })
    }

    /// Adds one node with time weight `weight`.
    pub(crate) fn add(&mut self, weight: f64, time: f64, coeffs: &[f64], grid: &[f64], mu: &[f64]) {
        let k = self.v.mode;
        let g = self.v.g(time, self.horizon);
        let dg = self.v.dg(time, self.horizon);
        let conv = self
            .convection
            .as_ref()
            .map_or(0.0, |w| w.iter().zip(grid).map(|(a, b)| a * b).sum());
        self.acc += weight * (g * conv - g * self.lambda * mu[k] + dg * coeffs[k]);
    }

    pub(crate) fn add_view(&mut self, view: &StepView<'_>, dt: f64, steps: usize) {
        let weight = if view.step == 0 || view.step == steps { 0.5 * dt } else { dt };
        self.add(weight, view.time, view.coeffs, view.grid, view.mu);
    }

    pub(crate) fn finish(&self, phi0: &[f64]) -> f64 {
        -self.v.g(0.0, self.horizon) * phi0[self.v.mode] - self.acc
    }
}

/// `C(φ, v)` over the recorded states of `traj`, with `phi0` the prescribed
/// initial condition.
pub fn c_functional(sim: &Simulator, traj: &Trajectory, v: &TestFunction, phi0: &SpectralField) -> Result<f64> {
    if !traj.is_completed() {
        return Err(Error::Trajectory("C(φ, v) needs a completed trajectory".into()));
    }
    let times = traj.times();
    let t_end = *times.last().expect("nonempty");
    if (t_end - sim.horizon()).abs() > 1e-9 * sim.horizon() {
        return Err(Error::Trajectory("trajectory does not reach the horizon".into()));
    }
    let mut acc = CAccumulator::new(sim, *v)?;
    let last = times.len() - 1;
    for (i, state) in traj.states().iter().enumerate() {
        let left = if i > 0 { times[i] - times[i - 1] } else { 0.0 };
        let right = if i < last { times[i + 1] - times[i] } else { 0.0 };
        let mu = sim.drift_parts(state)?.mu;
        let grid = state.evaluate();
        acc.add(0.5 * (left + right), times[i], state.coeffs(), grid.values(), mu.coeffs());
    }
    Ok(acc.finish(phi0.coeffs()))
}

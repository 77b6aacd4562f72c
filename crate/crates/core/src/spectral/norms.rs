use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::SpectralField;

/// `(Σ_k μ_k^s c_k²)^{1/2}`.
///
/// `s = 0` is the `H` norm and `s = 1` the `H¹` norm exactly. `s = 2`,
/// `s = -2` and `s = -ε` are the fixed spectral equivalents used for `V`,
/// `V'` and `H^{-ε}` throughout the crate.
pub fn sobolev_norm(field: &SpectralField, s: f64) -> Result<f64> {
    if !(-2.0..=2.0).contains(&s) {
        return Err(invalid(format!("Sobolev exponent {s} outside [-2, 2]")));
    }
    Ok(weighted_norm_sq(field.coeffs(), field.basis().eigenvalues(), s).sqrt())
}

pub(crate) fn weighted_norm_sq(coeffs: &[f64], eigenvalues: &[f64], s: f64) -> f64 {
    coeffs
        .iter()
        .zip(eigenvalues)
        .map(|(c, mu)| mu.powf(s) * c * c)
        .sum()
}

/// `(∫ φ⁴)^{1/4}` by quadrature on the padded grid.
pub fn l4_norm(field: &SpectralField) -> f64 {
    let grid = field.evaluate();
    let w = field.basis().grid().weight;
    (w * grid.values().iter().map(|v| v.powi(4)).sum::<f64>()).powf(0.25)
}

/// Pair window for [`holder_seminorm`].
///
/// Series with at most `max_samples` entries use every pair; longer series
/// are thinned to about `max_samples` evenly strided samples (always keeping
/// the endpoints) before all pairs are taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderWindow {
    pub max_samples: usize,
}

impl Default for HolderWindow {
    fn default() -> Self {
        Self { max_samples: 512 }
    }
}

impl HolderWindow {
    fn indices(&self, n: usize) -> Vec<usize> {
        if n <= self.max_samples.max(2) {
            return (0..n).collect();
        }
        let stride = n.div_ceil(self.max_samples.max(2) - 1);
        let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
        if *idx.last().unwrap() != n - 1 {
            idx.push(n - 1);
        }
        idx
    }
}

/// Sampled Hölder seminorm `max_{i<j} ‖φ_j − φ_i‖_s / |t_j − t_i|^β`.
///
/// Only sampled pairs are visited, so this is a lower estimate of the true
/// seminorm.
pub fn holder_seminorm(
    times: &[f64],
    states: &[SpectralField],
    beta: f64,
    s: f64,
    window: HolderWindow,
) -> Result<f64> {
    if times.len() != states.len() {
        return Err(invalid("times and states differ in length"));
    }
    if states.len() < 2 {
        return Err(invalid("Hölder seminorm needs at least two samples"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("Hölder exponent {beta} outside (0, 1)")));
    }
    if !(-2.0..=2.0).contains(&s) {
        return Err(invalid(format!("Sobolev exponent {s} outside [-2, 2]")));
    }
    let mu = states[0].basis().eigenvalues();
    let weights: Vec<f64> = mu.iter().map(|m| m.powf(s)).collect();
    let idx = window.indices(states.len());
    let mut best = 0.0f64;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let dt = (times[j] - times[i]).abs();
            if dt == 0.0 {
                continue;
            }
            let num: f64 = states[i]
                .coeffs()
                .iter()
                .zip(states[j].coeffs())
                .zip(&weights)
                .map(|((x, y), w)| w * (y - x) * (y - x))
                .sum();
            best = best.max(num.sqrt() / dt.powf(beta));
        }
    }
    Ok(best)
}

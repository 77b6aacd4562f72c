use serde::{Deserialize, Serialize};

use super::functional::c_functional;
use super::report::render_table;
use crate::error::{invalid, Error, Result};
use crate::noise::{white_noise_pairing, WienerPath};
use crate::solver::{Simulator, Trajectory};
use crate::spectral::{sobolev_norm, SpectralField};
use crate::test_function::TestFunction;

/// Default `ε` of the `H^{−ε}` initial-condition mismatch.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Whether [`strong_residual`] insists that the path produced the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineagePolicy {
    Strict,
    /// For negative controls that pair a trajectory with a foreign path.
    AllowMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongEntry {
    pub v: TestFunction,
    pub label: String,
    pub c_value: f64,
    pub pairing: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongReport {
    pub entries: Vec<StrongEntry>,
    /// `‖φ(0) − φ0‖_{H^{−ε}}`.
    pub ic_mismatch: f64,
    pub epsilon: f64,
    pub lineage_matched: bool,
}

impl StrongReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.residual))
    }

    pub fn to_text(&self) -> String {
        let mut rows = vec![vec!["v".to_string(), "C(phi,v)".into(), "pairing".into(), "residual".into()]];
        for e in &self.entries {
            rows.push(vec![
                e.label.clone(),
                format!("{:.6e}", e.c_value),
                format!("{:.6e}", e.pairing),
                format!("{:.3e}", e.residual),
            ]);
        }
        rows.push(vec![format!("ic mismatch (eps={})", self.epsilon), format!("{:.3e}", self.ic_mismatch)]);
        render_table(&rows)
    }
}

/// `|C(φ, v) − ⟨∂w/∂t, v⟩|` for each `v`, plus the initial-condition mismatch.
pub fn strong_residual(
    sim: &Simulator,
    traj: &Trajectory,
    path: &WienerPath,
    phi0: &SpectralField,
    battery: &[TestFunction],
    epsilon: f64,
    policy: LineagePolicy,
) -> Result<StrongReport> {
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return Err(invalid("ε must lie in (0, 1/4)"));
    }
    if traj.config_hash() != sim.config_hash() {
        return Err(Error::LineageMismatch("trajectory was produced under a different configuration".into()));
    }
    let produced = traj.path();
    let lineage_matched = produced.lineage() == path.lineage()
        && produced.steps() == path.steps()
        && produced.increments() == path.increments();
    if policy == LineagePolicy::Strict && !lineage_matched {
        return Err(Error::LineageMismatch(format!(
            "trajectory came from {:?}, residual requested against {:?}",
            produced.lineage(),
            path.lineage()
        )));
    }
    if (path.horizon() - sim.horizon()).abs() > 1e-9 * sim.horizon() {
        return Err(invalid("path horizon differs from the run horizon"));
    }
    let entries = battery
        .iter()
        .map(|v| {
            let c_value = c_functional(sim, traj, v, phi0)?;
            let pairing = white_noise_pairing(path, v)?;
            Ok(StrongEntry {
                v: *v,
                label: v.label(),
                c_value,
                pairing,
                residual: (c_value - pairing).abs(),
            })
        })
        .collect::<Result<_>>()?;
    let ic_mismatch = sobolev_norm(&traj.initial().sub(phi0), -epsilon)?;
    Ok(StrongReport {
        entries,
        ic_mismatch,
        epsilon,
        lineage_matched,
    })
}

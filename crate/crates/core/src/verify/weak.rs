use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functional::CAccumulator;
use super::report::{render_table, verdict};
use crate::error::{invalid, Result};
use crate::noise::{sample_path, wiener_char_functional, IcSpec};
use crate::solver::{Simulator, SolverConfig, TrajectoryStatus};
use crate::test_function::TestFunction;

/// Where each path's increments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSource {
    /// Drawn at the simulator's own `dt`.
    Native,
    /// Drawn at `dt / factor` and summed down, so runs at `dt` and `dt / factor`
    /// share one Brownian path.
    Coarsened { factor: usize },
}

/// One `(ξ, v)` pair of the battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakEntry {
    pub xi_index: usize,
    pub v: TestFunction,
    pub label: String,
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakReport {
    pub entries: Vec<WeakEntry>,
    pub n_paths: u64,
    pub blowups: u64,
    pub dt: f64,
    /// `3/√N`.
    pub clt_band: f64,
}

impl WeakReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.discrepancy))
    }

    pub fn passes(&self, allowance: f64) -> bool {
        self.blowups == 0 && self.entries.iter().all(|e| e.discrepancy <= self.clt_band + allowance)
    }

    pub fn to_text(&self, allowance: f64) -> String {
        let mut rows = vec![vec![
            "xi".to_string(),
            "v".into(),
            "|LHS-RHS|".into(),
            "band".into(),
            "verdict".into(),
        ]];
        for e in &self.entries {
            let band = self.clt_band + allowance;
            rows.push(vec![
                e.xi_index.to_string(),
                e.label.clone(),
                format!("{:.3e}", e.discrepancy),
                format!("{band:.3e}"),
                verdict(e.discrepancy <= band),
            ]);
        }
        render_table(&rows)
    }
}

struct PathOutcome {
    phases: Vec<f64>,
    c_values: Vec<f64>,
    completed: bool,
}

/// Monte-Carlo left side `E[exp(i⟨φ(0), ξ⟩ + iC(φ, v))]` against the closed
/// form `Ξ̂(ξ) · exp(−½ ϑ_k ∫ g²)` for every `(ξ, v)` pair.
pub fn weak_solution_check(
    sim: &Simulator,
    ic: &IcSpec,
    battery: &[TestFunction],
    xis: &[Vec<f64>],
    paths: Range<u64>,
    source: PathSource,
) -> Result<WeakReport> {
    let m = sim.basis().m();
    ic.validate(m)?;
    if paths.is_empty() {
        return Err(invalid("weak check needs at least one path"));
    }
    for xi in xis {
        if xi.len() > m {
            return Err(invalid("ξ has more coefficients than retained modes"));
        }
    }
    let accumulators: Vec<CAccumulator> = battery
        .iter()
        .map(|v| CAccumulator::new(sim, *v))
        .collect::<Result<_>>()?;
    let steps = sim.steps();
    let dt = sim.dt();
    let noise = &sim.config().noise;

    let outcomes: Vec<PathOutcome> = paths
        .clone()
        .into_par_iter()
        .map(|i| -> Result<PathOutcome> {
            let phi0 = ic.sample(sim.basis(), noise.master_seed, i)?;
            let path = match source {
                PathSource::Native => sample_path(noise, sim.basis(), steps, dt, i)?,
                PathSource::Coarsened { factor } => {
                    sample_path(noise, sim.basis(), steps * factor, dt / factor as f64, i)?.coarsen(factor)?
                }
            };
            let mut accs = accumulators.clone();
            let traj = sim.simulate_observed(&phi0, Arc::new(path), &mut |view| {
                for a in accs.iter_mut() {
                    a.add_view(view, dt, steps);
                }
            })?;
            let phases = xis
                .iter()
                .map(|xi| xi.iter().zip(phi0.coeffs()).map(|(a, b)| a * b).sum())
                .collect();
            Ok(PathOutcome {
                phases,
                c_values: accs.iter().map(|a| a.finish(phi0.coeffs())).collect(),
                completed: traj.status() == TrajectoryStatus::Completed,
            })
        })
        .collect::<Result<_>>()?;

    let n = outcomes.len() as u64;
    let blowups = outcomes.iter().filter(|o| !o.completed).count() as u64;
    let mut entries = Vec::new();
    for (xi_index, xi) in xis.iter().enumerate() {
        let mut padded = xi.clone();
        padded.resize(m, 0.0);
        let ic_hat = ic.char_functional(&padded);
        for (j, v) in battery.iter().enumerate() {
            let mut lhs = Complex::new(0.0, 0.0);
            for o in outcomes.iter().filter(|o| o.completed) {
                lhs += Complex::from_polar(1.0, o.phases[xi_index] + o.c_values[j]);
            }
            lhs /= (n - blowups).max(1) as f64;
            let rhs = ic_hat * wiener_char_functional(v, sim.thetas(), sim.horizon())?;
            entries.push(WeakEntry {
                xi_index,
                v: *v,
                label: v.label(),
                lhs: [lhs.re, lhs.im],
                rhs: [rhs.re, rhs.im],
                discrepancy: (lhs - rhs).norm(),
            });
        }
    }
    Ok(WeakReport {
        entries,
        n_paths: n,
        blowups,
        dt,
        clt_band: 3.0 / (n as f64).sqrt(),
    })
}

/// Weak check at `dt` and `dt/2` on shared paths, with the bias constant fit
/// per entry as `C = |D(dt) − D(dt/2)| / (dt/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakBiasFit {
    pub coarse: WeakReport,
    pub fine: WeakReport,
    pub bias_constants: Vec<f64>,
    /// `3/√N + C·dt_fine` per entry.
    pub tolerances: Vec<f64>,
    pub passed: bool,
}

pub fn weak_bias_fit(
    config: &SolverConfig,
    ic: &IcSpec,
    battery: &[TestFunction],
    xis: &[Vec<f64>],
    paths: Range<u64>,
) -> Result<WeakBiasFit> {
    let coarse_sim = Simulator::new(config.clone())?;
    let fine_sim = Simulator::new(config.with_dt(config.dt / 2.0))?;
    let coarse = weak_solution_check(&coarse_sim, ic, battery, xis, paths.clone(), PathSource::Coarsened { factor: 2 })?;
    let fine = weak_solution_check(&fine_sim, ic, battery, xis, paths, PathSource::Native)?;
    let h = fine.dt;
    let bias_constants: Vec<f64> = coarse
        .entries
        .iter()
        .zip(&fine.entries)
        .map(|(c, f)| (c.discrepancy - f.discrepancy).abs() / (coarse.dt - h))
        .collect();
    let tolerances: Vec<f64> = bias_constants.iter().map(|c| fine.clt_band + c * h).collect();
    let passed = fine.blowups == 0
        && coarse.blowups == 0
        && fine.entries.iter().zip(&tolerances).all(|(e, t)| e.discrepancy <= *t);
    Ok(WeakBiasFit {
        coarse,
        fine,
        bias_constants,
        tolerances,
        passed,
    })
}

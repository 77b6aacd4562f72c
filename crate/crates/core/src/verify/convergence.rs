//! Step-halving studies driven by one refined Brownian path per sample.
//!
//! The finest path is drawn natively and every coarser level sums runs of its
//! increments, so all levels see the same realisation.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::energy::energy_identity_residual;
use super::report::render_table;
use super::strong::{strong_residual, LineagePolicy};
use crate::error::{invalid, Result};
use crate::noise::{sample_path, IcSpec, WienerPath};
use crate::solver::Simulator;
use crate::spectral::SpectralField;
use crate::test_function::TestFunction;

/// Residuals at or below this carry no order information and count as exact.
pub const EXACT_FLOOR: f64 = 1e-13;

fn ladder(sim: &Simulator, halvings: usize) -> Result<Vec<Simulator>> {
    if halvings == 0 || halvings > 10 {
        return Err(invalid("step-halving studies need between 1 and 10 halvings"));
    }
    (0..=halvings)
        .map(|l| sim.with_dt(sim.dt() / (1u64 << l) as f64))
        .collect()
}

fn refined_path(sim: &Simulator, halvings: usize, path_index: u64) -> Result<WienerPath> {
    let factor = 1usize << halvings;
    sample_path(
        &sim.config().noise,
        sim.basis(),
        sim.steps() * factor,
        sim.dt() / factor as f64,
        path_index,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyConvergence {
    pub dts: Vec<f64>,
    /// `|R(T)|` of the energy ledger at each `dt`.
    pub residuals: Vec<f64>,
    /// `|R(dt)| / |R(dt/2)|` per halving.
    pub ratios: Vec<f64>,
    pub required_ratio: f64,
    pub passed: bool,
}

impl EnergyConvergence {
    pub fn to_text(&self) -> String {
        let mut rows = vec![vec!["dt".to_string(), "|R(T)|".into(), "ratio".into()]];
        for (i, (dt, r)) in self.dts.iter().zip(&self.residuals).enumerate() {
            let ratio = if i == 0 { String::new() } else { format!("{:.3}", self.ratios[i - 1]) };
            rows.push(vec![format!("{dt:e}"), format!("{r:.4e}"), ratio]);
        }
        render_table(&rows)
    }
}

/// Energy-ledger residual `|R(T)|` at `dt, dt/2, …, dt/2^halvings`.
pub fn energy_convergence(
    sim: &Simulator,
    phi0: &SpectralField,
    path_index: u64,
    halvings: usize,
    required_ratio: f64,
) -> Result<EnergyConvergence> {
    let sims = ladder(sim, halvings)?;
    let fine = refined_path(sim, halvings, path_index)?;
    let mut residuals = Vec::with_capacity(sims.len());
    for (l, s) in sims.iter().enumerate() {
        let path = Arc::new(fine.coarsen(1 << (halvings - l))?);
        let traj = s.simulate_with_path(phi0, path)?;
        residuals.push(energy_identity_residual(s, &traj)?.final_residual().abs());
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(EnergyConvergence {
        dts: sims.iter().map(|s| s.dt()).collect(),
        passed: ratios.iter().all(|r| *r >= required_ratio),
        residuals,
        ratios,
        required_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongOrderEntry {
    pub label: String,
    /// Root-mean-square residual over paths at each `dt`.
    pub rms: Vec<f64>,
    /// Least-squares slope of `log rms` against `log dt`; `None` if exact.
    pub order: Option<f64>,
    /// Wrong-path RMS residual at the finest `dt`.
    pub control_rms: f64,
    pub control_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongOrderStudy {
    pub dts: Vec<f64>,
    pub n_paths: u64,
    pub entries: Vec<StrongOrderEntry>,
    pub required_order: f64,
    pub required_control_ratio: f64,
    pub passed: bool,
}

impl StrongOrderStudy {
    pub fn min_order(&self) -> Option<f64> {
        self.entries.iter().filter_map(|e| e.order).reduce(f64::min)
    }

    pub fn min_control_ratio(&self) -> f64 {
        self.entries.iter().map(|e| e.control_ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["v".to_string()];
        header.extend(self.dts.iter().map(|dt| format!("rms@{dt:e}")));
        header.extend(["order".to_string(), "control".into(), "control/matched".into()]);
        let mut rows = vec![header];
        for e in &self.entries {
            let mut row = vec![e.label.clone()];
            row.extend(e.rms.iter().map(|r| format!("{r:.3e}")));
            row.push(e.order.map_or("exact".into(), |o| format!("{o:.3}")));
            row.push(format!("{:.3e}", e.control_rms));
            row.push(format!("{:.1}", e.control_ratio));
            rows.push(row);
        }
        render_table(&rows)
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Strong residual under step halving, with a wrong-path negative control.
///
/// The control pairs each finest-level trajectory with the path of index
/// `paths.end + (i − paths.start)`, which no sample in `paths` uses.
pub fn strong_order_study(
    sim: &Simulator,
    ic: &IcSpec,
    battery: &[TestFunction],
    paths: Range<u64>,
    halvings: usize,
    epsilon: f64,
) -> Result<StrongOrderStudy> {
    if paths.is_empty() || battery.is_empty() {
        return Err(invalid("strong order study needs paths and test functions"));
    }
    let sims = ladder(sim, halvings)?;
    let n_paths = paths.end - paths.start;
    let noise = &sim.config().noise;
    // Per path: squared residuals [level][v] and the control [v].
    let per_path: Vec<(Vec<Vec<f64>>, Vec<f64>)> = paths
        .clone()
        .into_par_iter()
        .map(|i| -> Result<_> {
            let phi0 = ic.sample(sim.basis(), noise.master_seed, i)?;
            let fine = refined_path(sim, halvings, i)?;
            let mut levels = Vec::with_capacity(sims.len());
            let mut control = Vec::new();
            for (l, s) in sims.iter().enumerate() {
                let path = Arc::new(fine.coarsen(1 << (halvings - l))?);
                let traj = s.simulate_with_path(&phi0, path.clone())?;
                let r = strong_residual(s, &traj, &path, &phi0, battery, epsilon, LineagePolicy::Strict)?;
                levels.push(r.entries.iter().map(|e| e.residual * e.residual).collect());
                if l == halvings {
                    let other = sample_path(noise, s.basis(), s.steps(), s.dt(), paths.end + (i - paths.start))?;
                    let w = strong_residual(s, &traj, &other, &phi0, battery, epsilon, LineagePolicy::AllowMismatch)?;
                    control = w.entries.iter().map(|e| e.residual * e.residual).collect();
                }
            }
            Ok((levels, control))
        })
        .collect::<Result<_>>()?;

    let xs: Vec<f64> = sims.iter().map(|s| s.dt().ln()).collect();
    let required_order = 0.5;
    let required_control_ratio = 10.0;
    let entries: Vec<StrongOrderEntry> = battery
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let rms: Vec<f64> = (0..sims.len())
                .map(|l| (per_path.iter().map(|p| p.0[l][j]).sum::<f64>() / n_paths as f64).sqrt())
                .collect();
            let control_rms = (per_path.iter().map(|p| p.1[j]).sum::<f64>() / n_paths as f64).sqrt();
            let order = if rms.iter().all(|r| *r <= EXACT_FLOOR) {
                None
            } else {
                let ys: Vec<f64> = rms.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
                Some(slope(&xs, &ys))
            };
            StrongOrderEntry {
                label: v.label(),
                control_ratio: control_rms / rms[halvings].max(EXACT_FLOOR),
                rms,
                order,
                control_rms,
            }
        })
        .collect();
    let passed = entries
        .iter()
        .all(|e| e.order.is_none_or(|o| o >= required_order) && e.control_ratio >= required_control_ratio);
    Ok(StrongOrderStudy {
        dts: sims.iter().map(|s| s.dt()).collect(),
        n_paths,
        entries,
        required_order,
        required_control_ratio,
        passed,
    })
}

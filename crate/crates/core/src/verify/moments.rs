use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{render_table, verdict};
use crate::error::{invalid, Result};
use crate::noise::{sample_path, IcSpec};
use crate::solver::{Simulator, SolverConfig};
use crate::spectral::{holder_seminorm, sobolev_norm, HolderWindow};

pub const FUNCTIONAL_NAMES: [&str; 5] = ["l2_U", "linf_H", "l4_L4", "c2/5_Vprime", "grad_mu_L2_H"];

/// Time-Hölder exponent of the path-regularity functional.
pub const HOLDER_BETA: f64 = 0.4;

/// Recorded samples per path used by the Hölder estimator.
const HOLDER_SAMPLES: usize = 500;

/// Integrability exponents reported for completeness; they gate nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormExponents {
    pub p_prime: f64,
    pub q_prime: f64,
}

impl NormExponents {
    /// `q′` from `2/3 + 1/p′ + 1/q′ = 1`.
    pub fn from_p_prime(p_prime: f64) -> Self {
        Self {
            p_prime,
            q_prime: 1.0 / (1.0 - 2.0 / 3.0 - 1.0 / p_prime),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub m: usize,
    pub n_paths: u64,
    pub blowups: u64,
    pub means: [f64; 5],
    /// Three standard errors.
    pub half_widths: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// Max over `m` divided by median over `m`, per functional.
    pub ratios: [f64; 5],
    pub ratio_limit: f64,
    /// False when any path blew up; such a report carries no verdict.
    pub valid: bool,
    pub passed: bool,
    pub record_stride: usize,
    pub exponents: NormExponents,
}

impl MomentReport {
    pub fn to_text(&self) -> String {
        let mut rows = vec![{
            let mut h = vec!["m".to_string(), "paths".into(), "blowups".into()];
            h.extend(FUNCTIONAL_NAMES.iter().map(|s| s.to_string()));
            h
        }];
        for r in &self.rows {
            let mut row = vec![r.m.to_string(), r.n_paths.to_string(), r.blowups.to_string()];
            row.extend(
                r.means
                    .iter()
                    .zip(&r.half_widths)
                    .map(|(m, h)| format!("{m:.4e}±{h:.1e}")),
            );
            rows.push(row);
        }
        let mut ratio = vec!["max/median".to_string(), String::new(), String::new()];
        ratio.extend(self.ratios.iter().map(|r| format!("{r:.3}")));
        rows.push(ratio);
        let mut v = vec!["verdict".to_string(), String::new(), String::new()];
        v.extend(self.ratios.iter().map(|r| verdict(self.valid && *r <= self.ratio_limit)));
        rows.push(v);
        render_table(&rows)
    }
}

/// The five functionals of one path; `None` if it blew up.
pub fn path_functionals(sim: &Simulator, ic: &IcSpec, path_index: u64) -> Result<Option<[f64; 5]>> {
    let basis = sim.basis();
    let phi0 = ic.sample(basis, sim.config().noise.master_seed, path_index)?;
    let path = sample_path(&sim.config().noise, basis, sim.steps(), sim.dt(), path_index)?;
    let mu = basis.eigenvalues();
    let lambda: Vec<f64> = mu.iter().map(|m| m - 1.0).collect();
    let weight = basis.grid().weight;
    let (dt, steps) = (sim.dt(), sim.steps());
    let (mut l2_u, mut linf_h, mut l4, mut grad_mu) = (0.0, 0.0f64, 0.0, 0.0);
    let traj = sim.simulate_observed(&phi0, Arc::new(path), &mut |view| {
        let trap = if view.step == 0 || view.step == steps { 0.5 * dt } else { dt };
        let h1: f64 = view.coeffs.iter().zip(mu).map(|(c, m)| m * c * c).sum();
        let h0: f64 = view.coeffs.iter().map(|c| c * c).sum();
        let q4: f64 = weight * view.grid.iter().map(|p| p.powi(4)).sum::<f64>();
        l2_u += trap * h1;
        l4 += trap * q4;
        linf_h = linf_h.max(h0);
        if view.step < steps {
            grad_mu += dt * lambda.iter().zip(view.mu).map(|(l, m)| l * m * m).sum::<f64>();
        }
    })?;
    if !traj.is_completed() {
        return Ok(None);
    }
    let sup_vprime = traj
        .states()
        .iter()
        .map(|s| sobolev_norm(s, -2.0))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let holder = holder_seminorm(traj.times(), traj.states(), HOLDER_BETA, -2.0, HolderWindow::default())?;
    Ok(Some([l2_u, linf_h, l4, sup_vprime + holder, grad_mu]))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Monte-Carlo means of the five functionals along an `m` ladder, with
/// the non-explosion verdict `max/median ≤ 2` per functional.
pub fn estimate_moments(config: &SolverConfig, ic: &IcSpec, m_list: &[usize], paths: Range<u64>) -> Result<MomentReport> {
    if paths.end < paths.start + 2 {
        return Err(invalid("moment estimates need at least two paths"));
    }
    if m_list.is_empty() {
        return Err(invalid("moment estimates need at least one mode count"));
    }
    let steps = config.steps()?;
    let record_stride = steps.div_ceil(HOLDER_SAMPLES).max(1);
    let mut rows = Vec::new();
    for &m in m_list {
        let sim = Simulator::new(SolverConfig {
            record_stride,
            ..config.with_modes(m)
        })?;
        ic.validate(m)?;
        let results: Vec<Option<[f64; 5]>> = paths
            .clone()
            .into_par_iter()
            .map(|i| path_functionals(&sim, ic, i))
            .collect::<Result<_>>()?;
        let ok: Vec<[f64; 5]> = results.iter().flatten().copied().collect();
        let n = ok.len() as f64;
        let mut means = [0.0; 5];
        let mut half_widths = [0.0; 5];
        for f in 0..5 {
            let mean = ok.iter().map(|r| r[f]).sum::<f64>() / n.max(1.0);
            let var = if ok.len() > 1 {
                ok.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            means[f] = mean;
            half_widths[f] = 3.0 * (var / n.max(1.0)).sqrt();
        }
        rows.push(MomentRow {
            m,
            n_paths: results.len() as u64,
            blowups: (results.len() - ok.len()) as u64,
            means,
            half_widths,
        });
    }
    let mut ratios = [0.0; 5];
    for (f, ratio) in ratios.iter_mut().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r.means[f]).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let med = median(&vals);
        *ratio = if max == 0.0 { 1.0 } else { max / med };
    }
    let valid = rows.iter().all(|r| r.blowups == 0);
    let ratio_limit = 2.0;
    Ok(MomentReport {
        passed: valid && ratios.iter().all(|r| *r <= ratio_limit),
        rows,
        ratios,
        ratio_limit,
        valid,
        record_stride,
        exponents: NormExponents::from_p_prime(3.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;

    #[test]
    fn exponents_identity() {
        let e = NormExponents::from_p_prime(3.5);
        assert!((2.0 / 3.0 + 1.0 / e.p_prime + 1.0 / e.q_prime - 1.0).abs() < 1e-14);
        assert!((e.q_prime - 21.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_ensemble() {
        let config = SolverConfig {
            noise: NoiseSpec::zero(0),
            horizon: 0.01,
            ..SolverConfig::desk()
        };
        let ic = IcSpec::Deterministic { coeffs: vec![0.0, 0.3] };
        let r = estimate_moments(&config, &ic, &[4, 8], 0..3).unwrap();
        assert!(r.valid);
        for row in &r.rows {
            assert!(row.half_widths.iter().all(|h| *h < 1e-12));
            // The H-norm decays along the deterministic run, so the sup is the start.
            assert!((row.means[1] - 0.09).abs() < 1e-15);
        }
    }

    #[test]
    fn more_noise_raises_linf_h() {
        let config = SolverConfig {
            horizon: 0.05,
            ..SolverConfig::desk()
        };
        let ic = IcSpec::Deterministic { coeffs: vec![] };
        let low = estimate_moments(&config, &ic, &[4], 0..40).unwrap();
        let high_config = SolverConfig {
            noise: config.noise.scaled(4.0),
            ..config
        };
        let high = estimate_moments(&high_config, &ic, &[4], 0..40).unwrap();
        assert!(high.rows[0].means[1] > low.rows[0].means[1]);
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
    }
}

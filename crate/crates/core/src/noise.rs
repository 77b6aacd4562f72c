//! Q-Wiener increments on the shared eigenbasis, the trace condition
//! `K(Q)`, the white-noise pairing and the Gaussian characteristic
//! functional of that pairing.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(master_seed, path_index, purpose)` with one sub-stream per mode, so
//! increments of mode `k` do not depend on `m`, on the number of steps
//! drawn, or on the order in which paths are generated.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{enumerate_modes, BasisSpec, Domain, SpectralField};
use crate::test_function::TestFunction;

/// Default number of modes probed by [`validate_kq`].
pub const DEFAULT_KQ_PROBE_DEPTH: usize = 1024;

const PURPOSE_NOISE: u64 = 0x6e6f_6973_65;
const PURPOSE_IC: u64 = 0x6963;

/// Eigenvalues `ϑ_k` of `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSpec {
    /// `ϑ_k` for the leading modes; modes past the list carry no noise.
    Explicit { values: Vec<f64> },
    /// `ϑ_k = sigma2 · μ_k^{−q}`.
    Power { sigma2: f64, q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub thetas: ThetaSpec,
    pub master_seed: u64,
}

impl NoiseSpec {
    pub fn zero(master_seed: u64) -> Self {
        Self {
            thetas: ThetaSpec::Explicit { values: vec![] },
            master_seed,
        }
    }

    pub fn power(sigma2: f64, q: f64, master_seed: u64) -> Self {
        Self {
            thetas: ThetaSpec::Power { sigma2, q },
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.thetas {
            ThetaSpec::Explicit { values } => {
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid("every ϑ_k must be finite and nonnegative"));
                }
            }
            ThetaSpec::Power { sigma2, q } => {
                if !(sigma2.is_finite() && *sigma2 >= 0.0 && q.is_finite() && *q >= 0.0) {
                    return Err(invalid("power family needs sigma2 ≥ 0 and q ≥ 0"));
                }
            }
        }
        Ok(())
    }

    /// `ϑ_k` for modes with the given eigenvalues.
    pub fn thetas_for(&self, eigenvalues: &[f64]) -> Vec<f64> {
        match &self.thetas {
            ThetaSpec::Explicit { values } => (0..eigenvalues.len())
                .map(|k| values.get(k).copied().unwrap_or(0.0))
                .collect(),
            ThetaSpec::Power { sigma2, q } => eigenvalues.iter().map(|mu| sigma2 * mu.powf(-q)).collect(),
        }
    }

    pub fn thetas(&self, basis: &BasisSpec) -> Vec<f64> {
        self.thetas_for(basis.eigenvalues())
    }

    /// Copy with every `ϑ_k` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let thetas = match &self.thetas {
            ThetaSpec::Explicit { values } => ThetaSpec::Explicit {
                values: values.iter().map(|v| v * factor).collect(),
            },
            ThetaSpec::Power { sigma2, q } => ThetaSpec::Power {
                sigma2: sigma2 * factor,
                q: *q,
            },
        };
        Self {
            thetas,
            master_seed: self.master_seed,
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.thetas {
            ThetaSpec::Explicit { values } => values.iter().all(|v| *v == 0.0),
            ThetaSpec::Power { sigma2, .. } => *sigma2 == 0.0,
        }
    }
}

/// Partial sum of `K(Q) = Σ (μ_k−1)^{(d−1)/2} ϑ_k` with a dyadic tail test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KqReport {
    pub partial_sum: f64,
    pub probe_depth: usize,
    /// Sums over mode-index blocks `[0,1), [1,2), [2,4), …`.
    pub block_sums: Vec<f64>,
    pub tail_ratio: Option<f64>,
    /// Tail heuristic verdict: last block zero, or last/previous block `< 0.9`.
    pub converges: bool,
    /// Whether the verdict gates the run (generator families only).
    pub gating: bool,
}

impl KqReport {
    pub fn passes_gate(&self) -> bool {
        self.converges || !self.gating
    }
}

pub fn validate_kq(spec: &NoiseSpec, domain: &Domain, probe_depth: usize) -> Result<KqReport> {
    spec.validate()?;
    if probe_depth < 4 {
        return Err(invalid("K(Q) probe depth must be at least 4"));
    }
    let modes = enumerate_modes(domain, probe_depth);
    let eigenvalues: Vec<f64> = modes.iter().map(|(_, mu)| *mu).collect();
    let thetas = spec.thetas_for(&eigenvalues);
    let expo = (domain.dim() as f64 - 1.0) / 2.0;
    let terms: Vec<f64> = eigenvalues
        .iter()
        .zip(&thetas)
        .map(|(mu, th)| if *th == 0.0 { 0.0 } else { (mu - 1.0).powf(expo) * th })
        .collect();
    let mut block_sums = vec![terms[0]];
    let mut start = 1;
    while 2 * start <= terms.len() {
        block_sums.push(terms[start..2 * start].iter().sum());
        start *= 2;
    }
    let last = block_sums[block_sums.len() - 1];
    let prev = block_sums[block_sums.len() - 2];
    let tail_ratio = (prev > 0.0).then(|| last / prev);
    let converges = last == 0.0 || tail_ratio.is_some_and(|r| r < 0.9);
    Ok(KqReport {
        partial_sum: terms.iter().sum(),
        probe_depth: terms.len(),
        block_sums,
        tail_ratio,
        converges,
        gating: matches!(spec.thetas, ThetaSpec::Power { .. }),
    })
}

/// Identifies the random stream a path was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub path_index: u64,
    /// Number of native steps summed into each increment.
    pub coarsening: u64,
}

/// Increments `ΔW^n_k`, row-major `[steps × m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    increments: Vec<f64>,
    steps: usize,
    modes: usize,
    dt: f64,
    lineage: SeedLineage,
}

impl WienerPath {
    pub fn new(increments: Vec<f64>, steps: usize, modes: usize, dt: f64, lineage: SeedLineage) -> Result<Self> {
        if increments.len() != steps * modes || steps == 0 || modes == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} increments for {steps} steps × {modes} modes",
                increments.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) || increments.iter().any(|v| !v.is_finite()) {
            return Err(invalid("path needs positive dt and finite increments"));
        }
        Ok(Self {
            increments,
            steps,
            modes,
            dt,
            lineage,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn lineage(&self) -> SeedLineage {
        self.lineage
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.modes..(step + 1) * self.modes]
    }

    /// Sums each run of `factor` consecutive increments.
    pub fn coarsen(&self, factor: usize) -> Result<WienerPath> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(invalid(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps
            )));
        }
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * self.modes];
        for n in 0..steps {
            let row = &mut increments[n * self.modes..(n + 1) * self.modes];
            for j in 0..factor {
                for (r, v) in row.iter_mut().zip(self.increment(n * factor + j)) {
                    *r += v;
                }
            }
        }
        Ok(WienerPath {
            increments,
            steps,
            modes: self.modes,
            dt: self.dt * factor as f64,
            lineage: SeedLineage {
                coarsening: self.lineage.coarsening * factor as u64,
                ..self.lineage
            },
        })
    }
}

fn keyed_rng(master_seed: u64, path_index: u64, purpose: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&path_index.to_le_bytes());
    seed[16..24].copy_from_slice(&purpose.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Draws `ΔW^n_k = √(ϑ_k dt) ξ` for `steps` steps on the modes of `basis`.
pub fn sample_path(spec: &NoiseSpec, basis: &BasisSpec, steps: usize, dt: f64, path_index: u64) -> Result<WienerPath> {
    spec.validate()?;
    if steps == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("path sampling needs steps ≥ 1 and dt > 0"));
    }
    let thetas = spec.thetas(basis);
    let m = thetas.len();
    let mut increments = vec![0.0; steps * m];
    let mut rng = keyed_rng(spec.master_seed, path_index, PURPOSE_NOISE);
    for (k, theta) in thetas.iter().enumerate() {
        if *theta == 0.0 {
            continue;
        }
        let sd = (theta * dt).sqrt();
        rng.set_stream(k as u64);
        rng.set_word_pos(0);
        for n in 0..steps {
            let xi: f64 = rng.sample(StandardNormal);
            increments[n * m + k] = sd * xi;
        }
    }
    WienerPath::new(
        increments,
        steps,
        m,
        dt,
        SeedLineage {
            master_seed: spec.master_seed,
            path_index,
            coarsening: 1,
        },
    )
}

/// `w_m(t_n) = Σ_{j<n} ΔW^j` for `n = 0..=steps`, row-major `[(steps+1) × m]`.
pub fn path_cumsum(path: &WienerPath) -> Vec<f64> {
    let m = path.modes;
    let mut out = vec![0.0; (path.steps + 1) * m];
    for n in 0..path.steps {
        for k in 0..m {
            out[(n + 1) * m + k] = out[n * m + k] + path.increments[n * m + k];
        }
    }
    out
}

/// `⟨∂w/∂t, v⟩ = −∫ w_k(t) g′(t) dt` by the trapezoid rule on the path grid.
pub fn white_noise_pairing(path: &WienerPath, v: &TestFunction) -> Result<f64> {
    let horizon = path.horizon();
    v.validate(horizon, path.modes)?;
    let m = path.modes;
    let dt = path.dt;
    let mut w = 0.0;
    let mut acc = 0.0;
    for n in 0..=path.steps {
        let weight = if n == 0 || n == path.steps { 0.5 } else { 1.0 };
        acc += weight * w * v.dg(n as f64 * dt, horizon);
        if n < path.steps {
            w += path.increments[n * m + v.mode];
        }
    }
    Ok(-acc * dt)
}

/// Itô-sum form `Σ_n g(t_n) ΔW^n_k` of the same pairing.
pub fn ito_pairing(path: &WienerPath, v: &TestFunction) -> Result<f64> {
    let horizon = path.horizon();
    v.validate(horizon, path.modes)?;
    Ok((0..path.steps)
        .map(|n| v.g(n as f64 * path.dt, horizon) * path.increment(n)[v.mode])
        .sum())
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Composite five-point Gauss–Legendre quadrature on `[a, b]`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * acc
}

/// `E[exp(i⟨∂w/∂t, v⟩)] = exp(−½ ϑ_k ∫₀ᵀ g²)`.
pub fn wiener_char_functional(v: &TestFunction, thetas: &[f64], horizon: f64) -> Result<Complex<f64>> {
    v.validate(horizon, thetas.len())?;
    let int_g2 = gauss_legendre(|t| v.g(t, horizon).powi(2), 0.0, horizon, 64);
    Ok(Complex::new((-0.5 * thetas[v.mode] * int_g2).exp(), 0.0))
}

/// Law of the initial condition, drawn independently of the noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum IcSpec {
    /// Fixed leading coefficients; the rest are zero.
    Deterministic { coeffs: Vec<f64> },
    /// Independent `N(mean_k, variance_k)` coefficients; missing entries are zero.
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
}

impl IcSpec {
    pub fn validate(&self, modes: usize) -> Result<()> {
        let lists: Vec<&Vec<f64>> = match self {
            IcSpec::Deterministic { coeffs } => vec![coeffs],
            IcSpec::Gaussian { mean, variance } => {
                if variance.iter().any(|v| *v < 0.0) {
                    return Err(invalid("initial-condition variances must be nonnegative"));
                }
                vec![mean, variance]
            }
        };
        for list in lists {
            if list.len() > modes {
                return Err(invalid(format!(
                    "initial condition lists {} modes but the basis has {modes}",
                    list.len()
                )));
            }
            if list.iter().any(|v| !v.is_finite()) {
                return Err(invalid("initial-condition entries must be finite"));
            }
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            IcSpec::Deterministic { .. } => true,
            IcSpec::Gaussian { variance, .. } => variance.iter().all(|v| *v == 0.0),
        }
    }

    fn padded(list: &[f64], m: usize) -> Vec<f64> {
        (0..m).map(|k| list.get(k).copied().unwrap_or(0.0)).collect()
    }

    /// Draws `φ0` for `path_index` from a stream disjoint from every noise stream.
    pub fn sample(&self, basis: &std::sync::Arc<BasisSpec>, master_seed: u64, path_index: u64) -> Result<SpectralField> {
        let m = basis.m();
        self.validate(m)?;
        match self {
            IcSpec::Deterministic { coeffs } => SpectralField::new(basis.clone(), Self::padded(coeffs, m)),
            IcSpec::Gaussian { mean, variance } => {
                let mut rng = keyed_rng(master_seed, path_index, PURPOSE_IC);
                let mean = Self::padded(mean, m);
                let var = Self::padded(variance, m);
                let coeffs = mean
                    .iter()
                    .zip(&var)
                    .map(|(mu, v)| {
                        let xi: f64 = rng.sample(StandardNormal);
                        mu + v.sqrt() * xi
                    })
                    .collect();
                SpectralField::new(basis.clone(), coeffs)
            }
        }
    }

    /// `E[exp(i⟨φ0, ξ⟩)]`.
    pub fn char_functional(&self, xi: &[f64]) -> Complex<f64> {
        let (mean, var): (Vec<f64>, Vec<f64>) = match self {
            IcSpec::Deterministic { coeffs } => (Self::padded(coeffs, xi.len()), vec![0.0; xi.len()]),
            IcSpec::Gaussian { mean, variance } => {
                (Self::padded(mean, xi.len()), Self::padded(variance, xi.len()))
            }
        };
        let phase: f64 = mean.iter().zip(xi).map(|(a, b)| a * b).sum();
        let damp: f64 = var.iter().zip(xi).map(|(v, b)| v * b * b).sum();
        Complex::from_polar((-0.5 * damp).exp(), phase)
    }
}

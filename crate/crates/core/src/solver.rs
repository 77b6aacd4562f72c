//! Galerkin system `dφ_m = π_m(−u·∇φ_m + Δμ_m) dt + dw_m`: drift assembly,
//! Euler–Maruyama and diagonally stabilised IMEX steppers, and single-path
//! simulation with a sup-norm blow-up cap.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::noise::{sample_path, validate_kq, IcSpec, KqReport, NoiseSpec, WienerPath, DEFAULT_KQ_PROBE_DEPTH};
use crate::physics::{
    coefficient_a, kernel_table, validate_c0, velocity_eval, ConvolutionBackend, ConvolutionWorkspace,
    KernelSpec, KernelTables, PotentialMode, VelocityField, VelocitySpec,
};
use crate::spectral::{build_basis, BasisSpec, Domain, GridField, SpectralField, DEFAULT_PADDING};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    #[default]
    Em,
    Imex,
}

/// Everything that determines a trajectory apart from `φ0` and the path index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub lengths: Vec<f64>,
    pub modes: usize,
    #[serde(default = "default_padding")]
    pub padding: f64,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub velocity: VelocitySpec,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub potential: PotentialMode,
    #[serde(default)]
    pub convolution: ConvolutionBackend,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub stepper: Stepper,
    /// IMEX stabilisation `S`; `None` means `max a + 2`.
    #[serde(default)]
    pub stab: Option<f64>,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_probe")]
    pub kq_probe_depth: usize,
}

fn default_padding() -> f64 {
    DEFAULT_PADDING
}
fn default_blowup() -> f64 {
    1e6
}
fn default_stride() -> usize {
    1
}
fn default_probe() -> usize {
    DEFAULT_KQ_PROBE_DEPTH
}

impl SolverConfig {
    /// `d = 1`, `L = 1`, `m = 8`, `T = 0.5`, `dt = 1e-4`, `J ≡ 2.5`, `ϑ_k = 0.01 μ_k^{−2}`.
    pub fn desk() -> Self {
        Self {
            lengths: vec![1.0],
            modes: 8,
            padding: DEFAULT_PADDING,
            kernel: KernelSpec::Constant { level: 2.5 },
            velocity: VelocitySpec::Zero,
            noise: NoiseSpec::power(0.01, 2.0, 0),
            potential: PotentialMode::Quartic,
            convolution: ConvolutionBackend::Auto,
            horizon: 0.5,
            dt: 1e-4,
            stepper: Stepper::Em,
            stab: None,
            blowup_threshold: default_blowup(),
            record_stride: 1,
            kq_probe_depth: DEFAULT_KQ_PROBE_DEPTH,
        }
    }

    /// Hex digest of the canonical JSON serialisation.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn steps(&self) -> Result<usize> {
        let raw = self.horizon / self.dt;
        let steps = raw.round();
        if !(steps >= 1.0) || (raw - steps).abs() > 1e-9 * raw.max(1.0) {
            return Err(invalid(format!(
                "horizon {} is not a positive integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Scalar parameter checks that need no basis.
    pub fn check_parameters(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.horizon >= self.dt) {
            return Err(invalid("horizon must be at least dt"));
        }
        self.steps()?;
        if !(self.blowup_threshold > 0.0) {
            return Err(invalid("blowup_threshold must be positive"));
        }
        if let Some(s) = self.stab {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("stab must be a finite nonnegative number"));
            }
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride must be at least 1"));
        }
        if self.modes == 0 {
            return Err(invalid("mode count must be at least 1"));
        }
        if !(self.padding >= 1.0) {
            return Err(invalid("padding must be at least 1"));
        }
        self.noise.validate()?;
        self.kernel.validate()
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }

    pub fn with_modes(&self, modes: usize) -> Self {
        Self { modes, ..self.clone() }
    }
}

/// One assumption check in a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub name: String,
    pub passed: bool,
    pub measured: String,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config_hash: String,
    pub gates: Vec<GateResult>,
    pub c0: Option<f64>,
    pub velocity_sup: Option<f64>,
    pub kq: Option<KqReport>,
    pub grid_nodes: Option<usize>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn first_failure(&self) -> Option<&GateResult> {
        self.gates.iter().find(|g| !g.passed)
    }
}

/// Runs every gate, continuing past failures where later gates still make sense.
pub fn validate_config(config: &SolverConfig) -> ValidationReport {
    let mut gates = Vec::new();
    let mut report = |name: &str, res: std::result::Result<String, String>| {
        let (passed, measured, reason) = match res {
            Ok(m) => (true, m, None),
            Err(r) => (false, String::new(), Some(r)),
        };
        gates.push(GateResult {
            name: name.into(),
            passed,
            measured,
            reason,
        });
        passed
    };
    let mut out = ValidationReport {
        config_hash: config.config_hash(),
        gates: vec![],
        c0: None,
        velocity_sup: None,
        kq: None,
        grid_nodes: None,
    };
    report("parameters", config.check_parameters().map(|_| "ok".into()).map_err(|e| e.to_string()));
    let basis = Domain::new(config.lengths.clone()).and_then(|d| build_basis(&d, config.modes, config.padding));
    let basis = match basis {
        Ok(b) => {
            out.grid_nodes = Some(b.grid().len());
            report("basis", Ok(format!("grid {:?}", b.grid().shape)));
            b
        }
        Err(e) => {
            report("basis", Err(e.to_string()));
            out.gates = gates;
            return out;
        }
    };
    match velocity_eval(&config.velocity, &basis) {
        Ok(u) => {
            out.velocity_sup = Some(u.sup_norm());
            report(
                "velocity",
                Ok(format!("sup |u| = {:e}, max |div u| = {:e}", u.sup_norm(), u.max_divergence())),
            );
        }
        Err(e) => {
            report("velocity", Err(e.to_string()));
        }
    }
    match kernel_table(&config.kernel, &basis).and_then(|t| coefficient_a(&t)) {
        Ok(a) => {
            report("kernel", Ok(format!("min a = {}", a.min())));
            match validate_c0(&a) {
                Ok(c0) => {
                    out.c0 = Some(c0);
                    report("c0", Ok(format!("c0 = {c0}")));
                }
                Err(e) => {
                    report("c0", Err(e.to_string()));
                }
            }
        }
        Err(e) => {
            report("kernel", Err(e.to_string()));
        }
    }
    match validate_kq(&config.noise, basis.domain(), config.kq_probe_depth) {
        Ok(kq) => {
            let msg = format!(
                "K(Q) partial sum = {:e}, tail ratio = {}{}",
                kq.partial_sum,
                kq.tail_ratio.map_or("n/a".into(), |r| format!("{r:.4}")),
                if kq.gating { "" } else { " (advisory)" }
            );
            let res = if kq.passes_gate() {
                Ok(msg)
            } else {
                Err(format!("K(Q) dyadic block sums do not decay: {msg}"))
            };
            out.kq = Some(kq);
            report("noise_trace", res);
        }
        Err(e) => {
            report("noise_trace", Err(e.to_string()));
        }
    }
    out.gates = gates;
    out
}

/// Per-step assembly buffers; one per thread.
#[derive(Default)]
pub struct StepWorkspace {
    phi: Vec<f64>,
    conv: Vec<f64>,
    mu: Vec<f64>,
    scratch: Vec<f64>,
    grad: Vec<f64>,
    adv: Vec<f64>,
    mu_hat: Vec<f64>,
    adv_hat: Vec<f64>,
    drift: Vec<f64>,
    next: Vec<f64>,
    conv_ws: ConvolutionWorkspace,
}

/// Quantities assembled at one step state, handed to an observer.
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub coeffs: &'a [f64],
    /// `φ` on the quadrature grid.
    pub grid: &'a [f64],
    /// `π_m μ`.
    pub mu: &'a [f64],
    pub drift: &'a [f64],
}

impl<'a> StepView<'a> {
    fn new(step: usize, time: f64, coeffs: &'a [f64], ws: &'a StepWorkspace) -> Self {
        Self {
            step,
            time,
            coeffs,
            grid: &ws.phi,
            mu: &ws.mu_hat,
            drift: &ws.drift,
        }
    }
}

/// Pieces of the drift at one state.
#[derive(Debug, Clone)]
pub struct DriftParts {
    /// `π_m μ`.
    pub mu: SpectralField,
    /// `π_m(u·∇φ)`, with the mean mode set to zero.
    pub convection: SpectralField,
    /// `−π_m(u·∇φ) + Δμ_m`.
    pub drift: SpectralField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    BlowUp { step: usize },
}

/// Recorded states of one path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<SpectralField>,
    path: Arc<WienerPath>,
    status: TrajectoryStatus,
    config_hash: String,
    record_stride: usize,
    dt: f64,
}

impl Trajectory {
    /// Assembles a trajectory from stored parts, checking its invariants.
    pub fn from_parts(
        times: Vec<f64>,
        states: Vec<SpectralField>,
        path: Arc<WienerPath>,
        status: TrajectoryStatus,
        config_hash: String,
        record_stride: usize,
        dt: f64,
    ) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::Trajectory("times and states differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Trajectory("times must be strictly increasing".into()));
        }
        if status == TrajectoryStatus::Completed && states.iter().any(|s| !s.is_finite()) {
            return Err(Error::Trajectory("completed trajectory holds non-finite states".into()));
        }
        Ok(Self {
            times,
            states,
            path,
            status,
            config_hash,
            record_stride,
            dt,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[SpectralField] {
        &self.states
    }

    pub fn path(&self) -> &Arc<WienerPath> {
        &self.path
    }

    pub fn status(&self) -> TrajectoryStatus {
        self.status
    }

    pub fn is_completed(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn record_stride(&self) -> usize {
        self.record_stride
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn initial(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("nonempty")
    }
}

/// Validated model plus precomputed operators for one [`SolverConfig`].
pub struct Simulator {
    config: SolverConfig,
    hash: String,
    basis: Arc<BasisSpec>,
    kernel: KernelTables,
    a: GridField,
    c0: f64,
    velocity: VelocityField,
    thetas: Vec<f64>,
    kq: KqReport,
    stab: f64,
    lambda: Vec<f64>,
    steps: usize,
    // Σ_k ϑ_k e_k(x_q)² and Σ_k ϑ_k (J∗e_k, e_k), for the Itô correction.
    noise_density: Vec<f64>,
    noise_kernel_trace: f64,
}

impl std::fmt::Debug for Simulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulator")
            .field("config_hash", &self.hash)
            .field("c0", &self.c0)
            .field("stab", &self.stab)
            .finish()
    }
}

impl Simulator {
    /// Builds the model and runs every gate; any failure stops here.
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.check_parameters()?;
        let steps = config.steps()?;
        let domain = Domain::new(config.lengths.clone())?;
        let basis = build_basis(&domain, config.modes, config.padding)?;
        let velocity = velocity_eval(&config.velocity, &basis)?;
        let kernel = kernel_table(&config.kernel, &basis)?;
        let a = coefficient_a(&kernel)?;
        let c0 = validate_c0(&a)?;
        let kq = validate_kq(&config.noise, &domain, config.kq_probe_depth)?;
        if !kq.passes_gate() {
            return Err(Error::AssumptionViolation {
                assumption: "vii",
                reason: format!(
                    "K(Q) dyadic block sums do not decay (tail ratio {:?})",
                    kq.tail_ratio
                ),
            });
        }
        let thetas = config.noise.thetas(&basis);
        let stab = config.stab.unwrap_or(a.max() + 2.0);
        let lambda: Vec<f64> = basis.eigenvalues().iter().map(|mu| mu - 1.0).collect();

        let n = basis.grid().len();
        let mut noise_density = vec![0.0; n];
        let mut noise_kernel_trace = 0.0;
        for (k, theta) in thetas.iter().enumerate() {
            if *theta == 0.0 {
                continue;
            }
            let ek = SpectralField::mode(basis.clone(), k, 1.0)?.evaluate();
            for (d, v) in noise_density.iter_mut().zip(ek.values()) {
                *d += theta * v * v;
            }
            let jek = kernel.convolve(&ek, ConvolutionBackend::Direct)?;
            noise_kernel_trace += theta * jek.inner(&ek);
        }

        Ok(Self {
            hash: config.config_hash(),
            config,
            basis,
            kernel,
            a,
            c0,
            velocity,
            thetas,
            kq,
            stab,
            lambda,
            steps,
            noise_density,
            noise_kernel_trace,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn basis(&self) -> &Arc<BasisSpec> {
        &self.basis
    }

    pub fn kernel(&self) -> &KernelTables {
        &self.kernel
    }

    pub fn a(&self) -> &GridField {
        &self.a
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn velocity(&self) -> &VelocityField {
        &self.velocity
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn kq(&self) -> &KqReport {
        &self.kq
    }

    pub fn stab(&self) -> f64 {
        self.stab
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    pub(crate) fn noise_density(&self) -> &[f64] {
        &self.noise_density
    }

    pub(crate) fn noise_kernel_trace(&self) -> f64 {
        self.noise_kernel_trace
    }

    /// Rebuilds with a different step, keeping everything else.
    pub fn with_dt(&self, dt: f64) -> Result<Simulator> {
        Simulator::new(self.config.with_dt(dt))
    }

    /// Fills `ws.mu_hat`, `ws.adv_hat` and `ws.drift` at `c`; returns `max |φ|` on the grid.
    fn assemble(&self, c: &[f64], ws: &mut StepWorkspace) -> f64 {
        let basis = &self.basis;
        basis.synthesize_into(c, &mut ws.phi);
        let sup = ws.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.kernel
            .convolve_into(&ws.phi, &mut ws.conv, self.config.convolution, &mut ws.conv_ws);
        let potential = self.config.potential;
        ws.mu.clear();
        ws.mu.extend(
            ws.phi
                .iter()
                .zip(self.a.values())
                .zip(&ws.conv)
                .map(|((p, a), j)| a * p - j + potential.derivative(*p)),
        );
        basis.analyze_into(&ws.mu, &mut ws.scratch, &mut ws.mu_hat);

        ws.adv_hat.clear();
        ws.adv_hat.resize(c.len(), 0.0);
        if let Some(u) = self.velocity.components() {
            ws.adv.clear();
            ws.adv.resize(ws.phi.len(), 0.0);
            for (axis, ui) in u.iter().enumerate() {
                basis.synthesize_derivative_into(c, axis, &mut ws.grad);
                for ((a, g), uv) in ws.adv.iter_mut().zip(&ws.grad).zip(ui.values()) {
                    *a += uv * g;
                }
            }
            basis.analyze_into(&ws.adv, &mut ws.scratch, &mut ws.adv_hat);
            // The exact convection term is H-orthogonal to constants.
            ws.adv_hat[0] = 0.0;
        }

        ws.drift.clear();
        ws.drift.extend(
            self.lambda
                .iter()
                .zip(&ws.mu_hat)
                .zip(&ws.adv_hat)
                .map(|((l, mu), adv)| -l * mu - adv),
        );
        sup
    }

    fn check_state(&self, sup: f64, values: &[f64], step: usize) -> Result<()> {
        if !sup.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step,
                reason: "non-finite state".into(),
            });
        }
        if sup > self.config.blowup_threshold {
            return Err(Error::BlowUp {
                step,
                reason: format!(
                    "sup |φ| = {sup:e} exceeds the cap {:e}",
                    self.config.blowup_threshold
                ),
            });
        }
        Ok(())
    }

    fn own(&self, phi: &SpectralField) -> Result<()> {
        let same = Arc::ptr_eq(phi.basis(), &self.basis)
            || (phi.basis().modes() == self.basis.modes() && phi.basis().domain() == self.basis.domain());
        if !same {
            return Err(Error::ShapeMismatch("state does not live on this basis".into()));
        }
        Ok(())
    }

    /// `b(φ)`.
    pub fn drift(&self, phi: &SpectralField) -> Result<SpectralField> {
        Ok(self.drift_parts(phi)?.drift)
    }

    pub fn drift_parts(&self, phi: &SpectralField) -> Result<DriftParts> {
        self.own(phi)?;
        let mut ws = StepWorkspace::default();
        self.assemble(phi.coeffs(), &mut ws);
        if ws.drift.iter().chain(&ws.mu_hat).any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: 0,
                reason: "non-finite drift".into(),
            });
        }
        let wrap = |v: Vec<f64>| SpectralField::new(self.basis.clone(), v);
        Ok(DriftParts {
            mu: wrap(ws.mu_hat)?,
            convection: wrap(ws.adv_hat)?,
            drift: wrap(ws.drift)?,
        })
    }

    fn step_into(&self, stepper: Stepper, c: &[f64], dw: &[f64], ws: &mut StepWorkspace, step: usize) -> Result<()> {
        let sup = self.assemble(c, ws);
        self.check_state(sup, &ws.phi, step)?;
        let dt = self.config.dt;
        ws.next.clear();
        match stepper {
            Stepper::Em => ws
                .next
                .extend(c.iter().zip(&ws.drift).zip(dw).map(|((c, b), w)| c + dt * b + w)),
            Stepper::Imex => {
                let s = self.stab;
                ws.next.extend(
                    c.iter()
                        .zip(&ws.drift)
                        .zip(dw)
                        .zip(&self.lambda)
                        .map(|(((c, b), w), l)| (c + dt * (b + s * l * c) + w) / (1.0 + dt * s * l)),
                );
            }
        }
        if ws.next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: step + 1,
                reason: "non-finite state".into(),
            });
        }
        Ok(())
    }

    fn single_step(&self, stepper: Stepper, phi: &SpectralField, dw: &[f64]) -> Result<SpectralField> {
        self.own(phi)?;
        if dw.len() != self.basis.m() {
            return Err(Error::ShapeMismatch("increment length differs from the mode count".into()));
        }
        let mut ws = StepWorkspace::default();
        self.step_into(stepper, phi.coeffs(), dw, &mut ws, 0)?;
        let next = SpectralField::new(self.basis.clone(), ws.next)?;
        let mut probe = Vec::new();
        self.basis.synthesize_into(next.coeffs(), &mut probe);
        let sup = probe.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.check_state(sup, &probe, 1)?;
        Ok(next)
    }

    /// `φ + dt·b(φ) + ΔW`.
    pub fn step_em(&self, phi: &SpectralField, dw: &[f64]) -> Result<SpectralField> {
        self.single_step(Stepper::Em, phi, dw)
    }

    /// Diagonal stabilised step with `SΔφ` implicit.
    pub fn step_imex(&self, phi: &SpectralField, dw: &[f64]) -> Result<SpectralField> {
        self.single_step(Stepper::Imex, phi, dw)
    }

    /// Samples path `path_index` and integrates from `phi0`.
    pub fn simulate(&self, phi0: &SpectralField, path_index: u64) -> Result<Trajectory> {
        let path = sample_path(&self.config.noise, &self.basis, self.steps, self.config.dt, path_index)?;
        self.simulate_with_path(phi0, Arc::new(path))
    }

    /// Integrates along a given path, which must match the step count, `dt` and `m`.
    pub fn simulate_with_path(&self, phi0: &SpectralField, path: Arc<WienerPath>) -> Result<Trajectory> {
        self.simulate_observed(phi0, path, &mut |_| {})
    }

    /// As [`Simulator::simulate_with_path`], calling `observer` at every
    /// step state `n = 0..=steps` (the final state included) with the
    /// quantities assembled there.
    pub fn simulate_observed(
        &self,
        phi0: &SpectralField,
        path: Arc<WienerPath>,
        observer: &mut dyn FnMut(&StepView<'_>),
    ) -> Result<Trajectory> {
        self.own(phi0)?;
        if !phi0.is_finite() {
            return Err(invalid("initial state must be finite"));
        }
        if path.steps() != self.steps
            || path.modes() != self.basis.m()
            || (path.dt() - self.config.dt).abs() > 1e-12 * self.config.dt
        {
            return Err(Error::ShapeMismatch(format!(
                "path has {} steps × {} modes at dt {}, run needs {} × {} at dt {}",
                path.steps(),
                path.modes(),
                path.dt(),
                self.steps,
                self.basis.m(),
                self.config.dt
            )));
        }
        let stride = self.config.record_stride;
        let dt = self.config.dt;
        let stepper = self.config.stepper;
        let mut times = vec![0.0];
        let mut states = vec![SpectralField::new(self.basis.clone(), phi0.coeffs().to_vec())?];
        let mut ws = StepWorkspace::default();
        let mut c = phi0.coeffs().to_vec();
        let mut status = TrajectoryStatus::Completed;
        for n in 0..self.steps {
            match self.step_into(stepper, &c, path.increment(n), &mut ws, n) {
                Ok(()) => {
                    observer(&StepView::new(n, n as f64 * dt, &c, &ws));
                    std::mem::swap(&mut c, &mut ws.next);
                }
                Err(Error::BlowUp { step, .. }) => {
                    status = TrajectoryStatus::BlowUp { step };
                    break;
                }
                Err(e) => return Err(e),
            }
            if (n + 1) % stride == 0 || n + 1 == self.steps {
                times.push((n + 1) as f64 * dt);
                states.push(SpectralField::new(self.basis.clone(), c.clone())?);
            }
        }
        if status == TrajectoryStatus::Completed {
            let sup = self.assemble(&c, &mut ws);
            let finite = ws.mu_hat.iter().chain(&ws.drift).all(|v| v.is_finite());
            if !finite || self.check_state(sup, &ws.phi, self.steps).is_err() {
                status = TrajectoryStatus::BlowUp { step: self.steps };
                times.pop();
                states.pop();
            } else {
                observer(&StepView::new(self.steps, self.steps as f64 * dt, &c, &ws));
            }
        }
        Trajectory::from_parts(times, states, path, status, self.hash.clone(), stride, dt)
    }

    /// Runs `paths` in parallel with `φ0` drawn from `ic`, mapping each
    /// trajectory through `f`; results come back in path order.
    pub fn run_paths<T: Send>(
        &self,
        ic: &IcSpec,
        paths: Range<u64>,
        f: impl Fn(u64, Trajectory) -> Result<T> + Sync + Send,
    ) -> Result<Vec<T>> {
        ic.validate(self.basis.m())?;
        paths
            .into_par_iter()
            .map(|i| {
                let phi0 = ic.sample(&self.basis, self.config.noise.master_seed, i)?;
                let traj = self.simulate(&phi0, i)?;
                f(i, traj)
            })
            .collect()
    }
}

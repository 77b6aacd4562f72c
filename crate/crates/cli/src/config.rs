//! Run configuration: a versioned TOML schema in which every key is
//! optional, resolved against the desk defaults with each default recorded.

use std::path::{Path, PathBuf};

use nlch_core::io::read_kernel_table;
use nlch_core::spectral::DEFAULT_PADDING;
use nlch_core::test_function::default_battery;
use nlch_core::verify::{GronwallTolerance, DEFAULT_EPSILON};
use nlch_core::{
    ConvolutionBackend, IcSpec, KernelSpec, KernelTable, NoiseSpec, PotentialMode, SolverConfig, Stepper,
    TestFunction, ThetaSpec, VelocitySpec,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub domain: DomainSection,
    pub kernel: Option<KernelInput>,
    pub velocity: Option<VelocitySpec>,
    #[serde(default)]
    pub noise: NoiseSection,
    pub initial: Option<IcSpec>,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lengths: Option<Vec<f64>>,
    pub modes: Option<usize>,
    pub padding: Option<f64>,
}

/// Kernel families accepted in a config; `table_file` is read at load time.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelInput {
    Gaussian { amplitude: f64, width: f64 },
    Constant { level: f64 },
    Table(KernelTable),
    TableFile { path: PathBuf },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub thetas: Option<ThetaSpec>,
    pub master_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub stepper: Option<Stepper>,
    pub stab: Option<f64>,
    pub record_stride: Option<usize>,
    pub blowup_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub potential: Option<PotentialMode>,
    pub convolution: Option<ConvolutionBackend>,
    pub kq_probe_depth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Binary,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub path_index: Option<u64>,
    pub paths: Option<[u64; 2]>,
    pub shard_size: Option<u64>,
    pub formats: Option<Vec<OutputFormat>>,
    pub gnuplot: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub test_functions: Option<Vec<TestFunction>>,
    pub xis: Option<Vec<Vec<f64>>>,
    pub epsilon: Option<f64>,
    pub halvings: Option<usize>,
    pub energy_ratio: Option<f64>,
    pub weak_paths: Option<[u64; 2]>,
    pub linearized_allowance: Option<f64>,
    pub strong_paths: Option<[u64; 2]>,
    pub uniqueness_paths: Option<[u64; 2]>,
    pub perturbation: Option<f64>,
    pub perturb_mode: Option<usize>,
    pub gronwall_slack: Option<f64>,
    pub moment_modes: Option<Vec<usize>>,
    pub moment_paths: Option<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSettings {
    pub path_index: u64,
    pub paths: [u64; 2],
    pub shard_size: u64,
    pub formats: Vec<OutputFormat>,
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySettings {
    pub test_functions: Vec<TestFunction>,
    pub xis: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub halvings: usize,
    pub energy_ratio: f64,
    pub weak_paths: [u64; 2],
    pub linearized_allowance: f64,
    pub strong_paths: [u64; 2],
    pub uniqueness_paths: [u64; 2],
    pub perturbation: f64,
    pub perturb_mode: usize,
    pub gronwall_slack: f64,
    pub moment_modes: Vec<usize>,
    pub moment_paths: [u64; 2],
}

/// A parameter that was absent from the file and took its default.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Defaulted {
    pub key: String,
    pub value: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub schema_version: u32,
    pub solver: SolverConfig,
    pub initial: IcSpec,
    pub run: RunSettings,
    pub verify: VerifySettings,
    /// Where a tabulated kernel was read from, if anywhere.
    pub kernel_source: Option<PathBuf>,
    #[serde(skip)]
    pub defaulted: Vec<Defaulted>,
}

struct Defaults(Vec<Defaulted>);

impl Defaults {
    fn take<T: Serialize>(&mut self, key: &str, value: Option<T>, default: impl FnOnce() -> T) -> T {
        value.unwrap_or_else(|| {
            let d = default();
            self.0.push(Defaulted {
                key: key.to_string(),
                value: serde_json::to_value(&d).unwrap_or(serde_json::Value::Null),
            });
            d
        })
    }
}

fn range(r: [u64; 2], key: &str) -> Result<[u64; 2], Failure> {
    if r[1] <= r[0] {
        return Err(Failure::validation(format!("{key} = {r:?} is an empty path range")));
    }
    Ok(r)
}

impl ResolvedConfig {
    /// 16 hex digits of SHA-256 over the resolved configuration.
    /// Depends on content only: a tabulated kernel hashes by its values,
    /// not by the file it came from.
    pub fn hash(&self) -> String {
        let keyed = Self {
            kernel_source: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&keyed).expect("resolved config serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, Failure> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Failure::parse(format!("config: {e}")))?;
        resolve(raw, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn gronwall_tolerance(&self) -> GronwallTolerance {
        GronwallTolerance {
            slack: self.verify.gronwall_slack,
            ..GronwallTolerance::default()
        }
    }
}

fn resolve(raw: RawConfig, base_dir: &Path) -> Result<ResolvedConfig, Failure> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(Failure::parse(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            raw.schema_version
        )));
    }
    let desk = SolverConfig::desk();
    let mut d = Defaults(Vec::new());

    let mut kernel_source = None;
    let kernel = match raw.kernel {
        None => d.take("kernel", None, || desk.kernel.clone()),
        Some(KernelInput::Gaussian { amplitude, width }) => KernelSpec::Gaussian { amplitude, width },
        Some(KernelInput::Constant { level }) => KernelSpec::Constant { level },
        Some(KernelInput::Table(t)) => KernelSpec::Table(t),
        Some(KernelInput::TableFile { path }) => {
            let full = base_dir.join(&path);
            let file = std::fs::File::open(&full)
                .map_err(|e| Failure::parse(format!("cannot read kernel table {}: {e}", full.display())))?;
            let table = read_kernel_table(std::io::BufReader::new(file))
                .map_err(|e| Failure::parse(format!("kernel table {}: {e}", full.display())))?;
            kernel_source = Some(full);
            KernelSpec::Table(table)
        }
    };

    let solver = SolverConfig {
        lengths: d.take("domain.lengths", raw.domain.lengths, || desk.lengths.clone()),
        modes: d.take("domain.modes", raw.domain.modes, || desk.modes),
        padding: d.take("domain.padding", raw.domain.padding, || DEFAULT_PADDING),
        kernel,
        velocity: d.take("velocity", raw.velocity, || desk.velocity.clone()),
        noise: NoiseSpec {
            thetas: d.take("noise.thetas", raw.noise.thetas, || desk.noise.thetas.clone()),
            master_seed: d.take("noise.master_seed", raw.noise.master_seed, || desk.noise.master_seed),
        },
        potential: d.take("numerics.potential", raw.numerics.potential, || desk.potential),
        convolution: d.take("numerics.convolution", raw.numerics.convolution, || desk.convolution),
        horizon: d.take("time.horizon", raw.time.horizon, || desk.horizon),
        dt: d.take("time.dt", raw.time.dt, || desk.dt),
        stepper: d.take("time.stepper", raw.time.stepper, || desk.stepper),
        stab: match raw.time.stab {
            Some(s) => Some(s),
            None => d.take("time.stab", None, || None::<f64>),
        },
        blowup_threshold: d.take("time.blowup_threshold", raw.time.blowup_threshold, || desk.blowup_threshold),
        record_stride: d.take("time.record_stride", raw.time.record_stride, || desk.record_stride),
        kq_probe_depth: d.take("numerics.kq_probe_depth", raw.numerics.kq_probe_depth, || desk.kq_probe_depth),
    };
    let initial = d.take("initial", raw.initial, || IcSpec::Deterministic { coeffs: vec![] });

    let r = raw.run;
    let run = RunSettings {
        path_index: d.take("run.path_index", r.path_index, || 0),
        paths: range(d.take("run.paths", r.paths, || [0, 100]), "run.paths")?,
        shard_size: d.take("run.shard_size", r.shard_size, || 25),
        formats: d.take("run.formats", r.formats, || vec![OutputFormat::Csv, OutputFormat::Binary]),
        gnuplot: d.take("run.gnuplot", r.gnuplot, || false),
    };
    if run.shard_size == 0 {
        return Err(Failure::validation("run.shard_size must be positive"));
    }

    let v = raw.verify;
    let verify = VerifySettings {
        test_functions: d.take("verify.test_functions", v.test_functions, default_battery),
        xis: d.take("verify.xis", v.xis, || vec![vec![], vec![0.0, 1.0]]),
        epsilon: d.take("verify.epsilon", v.epsilon, || DEFAULT_EPSILON),
        halvings: d.take("verify.halvings", v.halvings, || 3),
        energy_ratio: d.take("verify.energy_ratio", v.energy_ratio, || 1.8),
        weak_paths: range(d.take("verify.weak_paths", v.weak_paths, || [0, 10_000]), "verify.weak_paths")?,
        linearized_allowance: d.take("verify.linearized_allowance", v.linearized_allowance, || 1e-3),
        strong_paths: range(d.take("verify.strong_paths", v.strong_paths, || [0, 16]), "verify.strong_paths")?,
        uniqueness_paths: range(
            d.take("verify.uniqueness_paths", v.uniqueness_paths, || [0, 10]),
            "verify.uniqueness_paths",
        )?,
        perturbation: d.take("verify.perturbation", v.perturbation, || 1e-3),
        perturb_mode: d.take("verify.perturb_mode", v.perturb_mode, || 1),
        gronwall_slack: d.take("verify.gronwall_slack", v.gronwall_slack, || GronwallTolerance::default().slack),
        moment_modes: d.take("verify.moment_modes", v.moment_modes, || vec![4, 8, 16, 32]),
        moment_paths: range(d.take("verify.moment_paths", v.moment_paths, || [0, 200]), "verify.moment_paths")?,
    };
    Ok(ResolvedConfig {
        schema_version: SCHEMA_VERSION,
        solver,
        initial,
        run,
        verify,
        kernel_source,
        defaulted: d.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ResolvedConfig, Failure> {
        ResolvedConfig::from_toml(text, Path::new("."))
    }

    #[test]
    fn minimal_config_is_the_desk_setup() {
        let c = parse("schema_version = 1").unwrap();
        assert_eq!(c.solver, SolverConfig::desk());
        let keys: Vec<&str> = c.defaulted.iter().map(|d| d.key.as_str()).collect();
        for k in ["domain.modes", "time.dt", "kernel", "noise.thetas", "verify.epsilon", "time.stab"] {
            assert!(keys.contains(&k), "{k} not echoed");
        }
    }

    #[test]
    fn explicit_values_are_not_reported_as_defaults() {
        let c = parse(
            r#"
            schema_version = 1
            [domain]
            modes = 12
            [time]
            dt = 2e-4
            stepper = "imex"
            [kernel]
            family = "gaussian"
            amplitude = 4.0
            width = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(c.solver.modes, 12);
        assert_eq!(c.solver.stepper, Stepper::Imex);
        assert!(c.defaulted.iter().all(|d| d.key != "domain.modes" && d.key != "kernel"));
    }

    #[test]
    fn unknown_keys_and_versions_are_parse_errors() {
        for text in [
            "schema_version = 1\nbogus = 3",
            "schema_version = 1\n[time]\ndtt = 1e-4",
            "schema_version = 1\n[kernel]\nfamily = \"constant\"\nlevel = 2.5\nextra = 1",
            "schema_version = 2",
            "modes = 3",
            "schema_version = 1\n[time\n",
        ] {
            assert_eq!(parse(text).unwrap_err().code, crate::failure::EXIT_PARSE, "{text}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse("schema_version = 1").unwrap();
        let b = parse("schema_version = 1\n[time]\ndt = 1e-4").unwrap();
        let c = parse("schema_version = 1\n[time]\ndt = 2e-4").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn empty_ranges_are_rejected() {
        let e = parse("schema_version = 1\n[run]\npaths = [5, 5]").unwrap_err();
        assert_eq!(e.code, crate::failure::EXIT_VALIDATION);
    }
}

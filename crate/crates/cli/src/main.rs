//! `nlch`: simulate and verify the stochastic nonlocal convective
//! Cahn–Hilliard model from a TOML configuration.
//!
//! Exit codes: 0 success, 2 validation failure, 3 verification failure,
//! 4 blow-up, 5 parse error, 1 anything else.

mod commands;
mod config;
mod ensemble;
mod failure;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Ctx, Print};
use config::ResolvedConfig;
use failure::{Failure, EXIT_PARSE};

#[derive(Parser)]
#[command(name = "nlch", version, about = "Spectral-Galerkin simulator and verification harness")]
struct Cli {
    /// Output root; overrides $NLCH_OUTPUT_ROOT.
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    /// What to print on stdout once the report is written.
    #[arg(long, global = true, value_enum, default_value_t = Print::Text)]
    print: Print,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration.
    config: PathBuf,
}

#[derive(Args)]
struct PathsArg {
    /// Path-index range `A..B`, overriding the configured one.
    #[arg(long, value_parser = parse_range)]
    paths: Option<[u64; 2]>,
}

#[derive(Subcommand)]
enum Command {
    /// Check every assumption gate without simulating.
    Validate(ConfigArg),
    /// Run one path and write its trajectory and Wiener path.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        path_index: Option<u64>,
        /// Drive the run with a stored path (`.csv` or binary) instead of sampling one.
        #[arg(long)]
        path_file: Option<PathBuf>,
    },
    /// Run a sharded, resumable ensemble.
    Ensemble {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        paths: PathsArg,
        #[arg(long)]
        shard_size: Option<u64>,
        /// Run only this shard number; the summary waits for all shards.
        #[arg(long)]
        shard: Option<usize>,
    },
    /// Energy-ledger residual under step halving.
    VerifyEnergy {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        path_index: Option<u64>,
    },
    /// Monte-Carlo weak-solution identity with a fitted time-step bias.
    VerifyWeak {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        paths: PathsArg,
    },
    /// Pathwise strong residual order and wrong-path control.
    VerifyStrong {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        paths: PathsArg,
    },
    /// Reproducibility and the Gronwall bound for perturbed initial data.
    VerifyUniqueness {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        paths: PathsArg,
    },
    /// Moment functionals along a ladder of mode counts.
    EstimateMoments {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        paths: PathsArg,
    },
}

fn parse_range(s: &str) -> Result<[u64; 2], String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    if b <= a {
        return Err(format!("empty range {s}"));
    }
    Ok([a, b])
}

fn load(path: &Path, edit: impl FnOnce(&mut ResolvedConfig)) -> Result<ResolvedConfig, Failure> {
    let mut c = ResolvedConfig::load(path)?;
    edit(&mut c);
    Ok(c)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let root = output::output_root(cli.output_root.as_deref());
    let ctx = |config| Ctx {
        config,
        root: root.clone(),
        print: cli.print,
    };
    match cli.command {
        Command::Validate(a) => commands::validate(&ctx(load(&a.config, |_| {})?)),
        Command::Simulate {
            config,
            path_index,
            path_file,
        } => {
            let c = load(&config.config, |c| {
                if let Some(i) = path_index {
                    c.run.path_index = i;
                }
            })?;
            commands::simulate(&ctx(c), path_file.as_deref())
        }
        Command::Ensemble {
            config,
            paths,
            shard_size,
            shard,
        } => {
            let c = load(&config.config, |c| {
                if let Some(p) = paths.paths {
                    c.run.paths = p;
                }
                if let Some(s) = shard_size {
                    c.run.shard_size = s;
                }
            })?;
            if c.run.shard_size == 0 {
                return Err(Failure::validation("shard size must be positive"));
            }
            ensemble::ensemble(&ctx(c), shard)
        }
        Command::VerifyEnergy { config, path_index } => {
            let c = load(&config.config, |c| {
                if let Some(i) = path_index {
                    c.run.path_index = i;
                }
            })?;
            commands::verify_energy(&ctx(c))
        }
        Command::VerifyWeak { config, paths } => {
            let c = load(&config.config, |c| {
                if let Some(p) = paths.paths {
                    c.verify.weak_paths = p;
                }
            })?;
            commands::verify_weak(&ctx(c))
        }
        Command::VerifyStrong { config, paths } => {
            let c = load(&config.config, |c| {
                if let Some(p) = paths.paths {
                    c.verify.strong_paths = p;
                }
            })?;
            commands::verify_strong(&ctx(c))
        }
        Command::VerifyUniqueness { config, paths } => {
            let c = load(&config.config, |c| {
                if let Some(p) = paths.paths {
                    c.verify.uniqueness_paths = p;
                }
            })?;
            commands::verify_uniqueness(&ctx(c))
        }
        Command::EstimateMoments { config, paths } => {
            let c = load(&config.config, |c| {
                if let Some(p) = paths.paths {
                    c.verify.moment_paths = p;
                }
            })?;
            commands::estimate_moments_cmd(&ctx(c))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

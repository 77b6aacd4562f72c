use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlch_core::io::{
    read_path_binary, read_path_csv, write_path_binary, write_path_csv, write_trajectory_binary,
    write_trajectory_csv,
};
use nlch_core::noise::{path_cumsum, sample_path};
use nlch_core::solver::validate_config;
use nlch_core::verify::{
    energy, energy_convergence, energy_identity_residual, estimate_moments, render_table, strong_order_study,
    uniqueness_gronwall, weak_bias_fit, weak_solution_check, PathSource, FUNCTIONAL_NAMES, HOLDER_BETA,
};
use nlch_core::{PotentialMode, Simulator, SolverConfig, SpectralField, Trajectory, TrajectoryStatus, WienerPath};
use serde::Serialize;

use crate::config::{OutputFormat, ResolvedConfig};
use crate::failure::{Failure, EXIT_BLOWUP, EXIT_OK, EXIT_VALIDATION, EXIT_VERIFICATION};
use crate::output::{header, tolerance, write_file, write_gnuplot, write_report, Report, ReportSpec, RunDir};

pub struct Ctx {
    pub config: ResolvedConfig,
    pub root: PathBuf,
    pub print: Print,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Print {
    Text,
    Json,
    None,
}

fn verdict_code(passed: bool) -> u8 {
    if passed {
        EXIT_OK
    } else {
        EXIT_VERIFICATION
    }
}

pub(crate) struct Finish<'a, B: Serialize> {
    pub dir: &'a RunDir,
    pub name: &'a str,
    pub spec: ReportSpec<'a>,
    pub passed: Option<bool>,
    pub code: u8,
    pub body: B,
    pub text: String,
}

pub(crate) fn finish<B: Serialize>(ctx: &Ctx, f: Finish<'_, B>) -> Result<u8, Failure> {
    let report = Report {
        header: header(&ctx.config, f.spec),
        solver_hash: ctx.config.solver.config_hash(),
        passed: f.passed,
        exit_code: f.code,
        config: ctx.config.clone(),
        defaulted: ctx.config.defaulted.clone(),
        body: f.body,
    };
    let text = write_report(f.dir, f.name, &report, &f.text)?;
    match ctx.print {
        Print::Text => print!("{text}"),
        Print::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| Failure::new(1, e.to_string()))?
        ),
        Print::None => {}
    }
    Ok(f.code)
}

pub(crate) fn simulator(config: &SolverConfig) -> Result<Simulator, Failure> {
    Ok(Simulator::new(config.clone())?)
}

pub(crate) fn range_of(r: [u64; 2]) -> std::ops::Range<u64> {
    r[0]..r[1]
}

// ---------------------------------------------------------------- validate

#[derive(Serialize)]
struct ValidateBody {
    report: nlch_core::solver::ValidationReport,
    initial_condition: Result<(), String>,
    test_functions: Result<(), String>,
}

pub fn validate(ctx: &Ctx) -> Result<u8, Failure> {
    let c = &ctx.config;
    let report = validate_config(&c.solver);
    let initial_condition = c.initial.validate(c.solver.modes).map_err(|e| e.to_string());
    let test_functions = c
        .verify
        .test_functions
        .iter()
        .try_for_each(|v| v.validate(c.solver.horizon, c.solver.modes))
        .map_err(|e| e.to_string());
    let passed = report.passed() && initial_condition.is_ok() && test_functions.is_ok();

    let mut rows = vec![vec!["gate".to_string(), "result".into(), "measured / reason".into()]];
    for g in &report.gates {
        rows.push(vec![
            g.name.clone(),
            if g.passed { "pass" } else { "FAIL" }.into(),
            g.reason.clone().unwrap_or_else(|| g.measured.clone()),
        ]);
    }
    for (name, r) in [("initial_condition", &initial_condition), ("test_functions", &test_functions)] {
        rows.push(vec![
            name.into(),
            if r.is_ok() { "pass" } else { "FAIL" }.into(),
            r.clone().err().unwrap_or_default(),
        ]);
    }
    let mut text = render_table(&rows);
    if let Some(kq) = &report.kq {
        text.push_str(&format!(
            "K(Q) partial sum {:.6e} over {} modes, tail ratio {}, gating {}\n",
            kq.partial_sum,
            kq.probe_depth,
            kq.tail_ratio.map_or("n/a".into(), |r| format!("{r:.3}")),
            kq.gating
        ));
    }
    let dir = RunDir::create(&ctx.root, "validate", c)?;
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: "validation",
            spec: ReportSpec {
                kind: "validate",
                path_range: [0, 0],
                modes: vec![c.solver.modes],
                dt: c.solver.dt,
                tolerances: vec![],
            },
            passed: Some(passed),
            code: if passed { EXIT_OK } else { EXIT_VALIDATION },
            body: ValidateBody {
                report,
                initial_condition,
                test_functions,
            },
            text,
        },
    )
}

// ---------------------------------------------------------------- simulate

fn load_path(file: &Path) -> Result<WienerPath, Failure> {
    let f = fs::File::open(file).map_err(|e| Failure::parse(format!("cannot read path {}: {e}", file.display())))?;
    let parsed = match file.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_path_csv(BufReader::new(f)),
        _ => read_path_binary(BufReader::new(f)),
    };
    parsed.map_err(|e| Failure::parse(format!("path file {}: {e}", file.display())))
}

fn check_path(sim: &Simulator, path: &WienerPath) -> Result<(), Failure> {
    if path.steps() != sim.steps()
        || path.modes() != sim.basis().m()
        || (path.dt() - sim.dt()).abs() > 1e-12 * sim.dt()
    {
        return Err(Failure::validation(format!(
            "path has {} steps × {} modes at dt {}, run needs {} × {} at dt {}",
            path.steps(),
            path.modes(),
            path.dt(),
            sim.steps(),
            sim.basis().m(),
            sim.dt()
        )));
    }
    Ok(())
}

/// Writes `<stem>.csv` / `<stem>.bin` for the trajectory and its path.
pub(crate) fn write_traj_files(config: &ResolvedConfig, dir: &Path, traj: &Trajectory, index: u64) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    let hash = config.hash();
    let label = Some(hash.as_str());
    if config.run.formats.contains(&OutputFormat::Csv) {
        files.push(write_file(&dir.join(format!("trajectory_{index}.csv")), |w| Ok(write_trajectory_csv(w, traj, label)?))?);
        files.push(write_file(&dir.join(format!("path_{index}.csv")), |w| Ok(write_path_csv(w, traj.path(), label)?))?);
    }
    if config.run.formats.contains(&OutputFormat::Binary) {
        files.push(write_file(&dir.join(format!("trajectory_{index}.bin")), |w| {
            Ok(write_trajectory_binary(w, traj, label)?)
        })?);
        files.push(write_file(&dir.join(format!("path_{index}.bin")), |w| Ok(write_path_binary(w, traj.path(), label)?))?);
    }
    Ok(files)
}

#[derive(Serialize)]
struct SimulateBody {
    path_index: u64,
    path_source: String,
    status: TrajectoryStatus,
    steps: usize,
    records: usize,
    final_time: f64,
    energy_initial: f64,
    energy_final: Option<f64>,
    /// `max_n |c0(t_n) − c0(0) − w0(t_n)|`.
    mass_drift: Option<f64>,
    files: Vec<PathBuf>,
}

pub fn simulate(ctx: &Ctx, path_file: Option<&Path>) -> Result<u8, Failure> {
    let c = &ctx.config;
    let sim = simulator(&c.solver)?;
    let index = c.run.path_index;
    let phi0 = c.initial.sample(sim.basis(), c.solver.noise.master_seed, index)?;
    let (path, path_source) = match path_file {
        Some(f) => {
            let p = load_path(f)?;
            check_path(&sim, &p)?;
            (p, f.display().to_string())
        }
        None => (
            sample_path(&c.solver.noise, sim.basis(), sim.steps(), sim.dt(), index)?,
            "sampled".to_string(),
        ),
    };
    let traj = sim.simulate_with_path(&phi0, Arc::new(path))?;
    let dir = RunDir::create(&ctx.root, "simulate", c)?;
    let files = write_traj_files(c, &dir.path, &traj, index)?;
    let completed = traj.is_completed();
    let m = sim.basis().m();
    let (energy_final, mass_drift) = if completed {
        let cum = path_cumsum(traj.path());
        let stride = traj.record_stride();
        let c00 = traj.initial().coeffs()[0];
        let drift = traj
            .states()
            .iter()
            .enumerate()
            .map(|(r, s)| {
                let n = (r * stride).min(traj.path().steps());
                (s.coeffs()[0] - c00 - cum[n * m]).abs()
            })
            .fold(0.0, f64::max);
        (Some(energy(&sim, traj.last())?), Some(drift))
    } else {
        (None, None)
    };
    if c.run.gnuplot {
        let names: Vec<String> = std::iter::once("t".to_string())
            .chain((0..m).map(|k| format!("c{k}")))
            .collect();
        let cols: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = traj
            .times()
            .iter()
            .zip(traj.states())
            .map(|(t, s)| std::iter::once(*t).chain(s.coeffs().iter().copied()).collect())
            .collect();
        write_gnuplot(&dir, "coefficients", &c.hash(), &cols, &rows, false)?;
    }
    let body = SimulateBody {
        path_index: index,
        path_source,
        status: traj.status(),
        steps: sim.steps(),
        records: traj.times().len(),
        final_time: *traj.times().last().expect("nonempty"),
        energy_initial: energy(&sim, &phi0)?,
        energy_final,
        mass_drift,
        files,
    };
    let text = render_table(&[
        vec!["path_index".into(), index.to_string()],
        vec!["path source".into(), body.path_source.clone()],
        vec!["status".into(), format!("{:?}", body.status)],
        vec!["steps / records".into(), format!("{} / {}", body.steps, body.records)],
        vec!["final time".into(), format!("{:e}", body.final_time)],
        vec!["energy initial".into(), format!("{:.6e}", body.energy_initial)],
        vec!["energy final".into(), body.energy_final.map_or("n/a".into(), |e| format!("{e:.6e}"))],
        vec!["mass drift".into(), body.mass_drift.map_or("n/a".into(), |e| format!("{e:.3e}"))],
        vec!["files".into(), body.files.len().to_string()],
    ]);
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: &format!("simulate_{index}"),
            spec: ReportSpec {
                kind: "simulate",
                path_range: [index, index + 1],
                modes: vec![m],
                dt: sim.dt(),
                tolerances: vec![],
            },
            passed: None,
            code: if completed { EXIT_OK } else { EXIT_BLOWUP },
            body,
            text,
        },
    )
}

// ---------------------------------------------------------------- verify-energy

#[derive(Serialize)]
struct EnergyBody {
    path_index: u64,
    record_stride_used: usize,
    base_ledger_max_abs_residual: f64,
    convergence: nlch_core::verify::EnergyConvergence,
}

pub fn verify_energy(ctx: &Ctx) -> Result<u8, Failure> {
    let c = &ctx.config;
    // The ledger needs every step.
    let sim = simulator(&SolverConfig {
        record_stride: 1,
        ..c.solver.clone()
    })?;
    let index = c.run.path_index;
    let phi0 = c.initial.sample(sim.basis(), c.solver.noise.master_seed, index)?;
    let base = sim.simulate(&phi0, index)?;
    if !base.is_completed() {
        return Err(Failure::new(EXIT_BLOWUP, format!("path {index} blew up at dt {}", sim.dt())));
    }
    let ledger = energy_identity_residual(&sim, &base)?;
    let conv = energy_convergence(&sim, &phi0, index, c.verify.halvings, c.verify.energy_ratio)?;
    let dir = RunDir::create(&ctx.root, "verify-energy", c)?;
    dir.write_with("ledger.csv", |w| {
        writeln!(w, "# config_hash={}", c.hash())?;
        writeln!(w, "# dt={:e} path_index={index}", sim.dt())?;
        writeln!(w, "t,energy,drift_work,martingale,correction,residual")?;
        for n in 0..ledger.times.len() {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                ledger.times[n],
                ledger.energy[n],
                ledger.drift_work[n],
                ledger.martingale[n],
                ledger.correction[n],
                ledger.residual[n]
            )?;
        }
        Ok(())
    })?;
    if c.run.gnuplot {
        let rows: Vec<Vec<f64>> = (0..ledger.times.len())
            .map(|n| {
                vec![
                    ledger.times[n],
                    ledger.energy[n],
                    ledger.drift_work[n],
                    ledger.martingale[n],
                    ledger.correction[n],
                    ledger.residual[n],
                ]
            })
            .collect();
        write_gnuplot(
            &dir,
            "ledger",
            &c.hash(),
            &["t", "energy", "drift_work", "martingale", "correction", "residual"],
            &rows,
            false,
        )?;
    }
    let text = format!(
        "energy ledger residual under step halving (need ratio ≥ {})\n{}",
        conv.required_ratio,
        conv.to_text()
    );
    let passed = conv.passed;
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: "energy",
            spec: ReportSpec {
                kind: "verify-energy",
                path_range: [index, index + 1],
                modes: vec![sim.basis().m()],
                dt: sim.dt(),
                tolerances: vec![tolerance(c, "halving_ratio", "verify.energy_ratio", c.verify.energy_ratio)],
            },
            passed: Some(passed),
            code: verdict_code(passed),
            body: EnergyBody {
                path_index: index,
                record_stride_used: 1,
                base_ledger_max_abs_residual: ledger.max_abs_residual(),
                convergence: conv,
            },
            text,
        },
    )
}

// ---------------------------------------------------------------- verify-weak

#[derive(Serialize)]
struct WeakBody {
    fit: nlch_core::verify::WeakBiasFit,
    linearized: Option<nlch_core::verify::WeakReport>,
}

pub fn verify_weak(ctx: &Ctx) -> Result<u8, Failure> {
    let c = &ctx.config;
    let v = &c.verify;
    let paths = range_of(v.weak_paths);
    let fit = weak_bias_fit(&c.solver, &c.initial, &v.test_functions, &v.xis, paths.clone())?;
    if fit.coarse.blowups + fit.fine.blowups > 0 {
        return Err(Failure::new(
            EXIT_BLOWUP,
            format!("{} weak-check paths blew up", fit.coarse.blowups + fit.fine.blowups),
        ));
    }
    let linearized = if c.solver.potential == PotentialMode::Linearized {
        let sim = simulator(&c.solver)?;
        Some(weak_solution_check(&sim, &c.initial, &v.test_functions, &v.xis, paths, PathSource::Native)?)
    } else {
        None
    };
    let lin_pass = linearized.as_ref().is_none_or(|r| r.passes(v.linearized_allowance));
    let passed = fit.passed && lin_pass;

    let mut rows = vec![vec![
        "xi".to_string(),
        "v".into(),
        "|LHS-RHS| dt".into(),
        "|LHS-RHS| dt/2".into(),
        "C".into(),
        "tolerance".into(),
        "result".into(),
    ]];
    for (i, (coarse, fine)) in fit.coarse.entries.iter().zip(&fit.fine.entries).enumerate() {
        rows.push(vec![
            coarse.xi_index.to_string(),
            coarse.label.clone(),
            format!("{:.3e}", coarse.discrepancy),
            format!("{:.3e}", fine.discrepancy),
            format!("{:.3}", fit.bias_constants[i]),
            format!("{:.3e}", fit.tolerances[i]),
            if fine.discrepancy <= fit.tolerances[i] { "pass" } else { "FAIL" }.into(),
        ]);
    }
    let mut text = format!(
        "weak identity over N={} paths, 3/sqrt(N) = {:.3e}\n{}",
        fit.fine.n_paths,
        fit.fine.clt_band,
        render_table(&rows)
    );
    if let Some(lin) = &linearized {
        text.push_str(&format!(
            "linearized potential at dt: max |LHS-RHS| {:.3e} against {:.3e}\n",
            lin.max_discrepancy(),
            lin.clt_band + v.linearized_allowance
        ));
    }
    let dir = RunDir::create(&ctx.root, "verify-weak", c)?;
    let dt = fit.fine.dt;
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: "weak",
            spec: ReportSpec {
                kind: "verify-weak",
                path_range: v.weak_paths,
                modes: vec![c.solver.modes],
                dt,
                tolerances: vec![
                    tolerance(c, "clt_band", "verify.weak_paths", fit.fine.clt_band),
                    tolerance(c, "linearized_allowance", "verify.linearized_allowance", v.linearized_allowance),
                ],
            },
            passed: Some(passed),
            code: verdict_code(passed),
            body: WeakBody { fit, linearized },
            text,
        },
    )
}

// ---------------------------------------------------------------- verify-strong

pub fn verify_strong(ctx: &Ctx) -> Result<u8, Failure> {
    let c = &ctx.config;
    let v = &c.verify;
    let sim = simulator(&c.solver)?;
    let study = strong_order_study(
        &sim,
        &c.initial,
        &v.test_functions,
        range_of(v.strong_paths),
        v.halvings,
        v.epsilon,
    )?;
    let passed = study.passed;
    let text = format!(
        "strong residual under step halving (order ≥ {}, control ratio ≥ {})\n{}",
        study.required_order,
        study.required_control_ratio,
        study.to_text()
    );
    let dir = RunDir::create(&ctx.root, "verify-strong", c)?;
    if c.run.gnuplot {
        let names: Vec<String> = std::iter::once("dt".to_string())
            .chain(study.entries.iter().map(|e| e.label.replace(' ', "_")))
            .collect();
        let cols: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = study
            .dts
            .iter()
            .enumerate()
            .map(|(l, dt)| std::iter::once(*dt).chain(study.entries.iter().map(|e| e.rms[l])).collect())
            .collect();
        write_gnuplot(&dir, "strong_rms", &c.hash(), &cols, &rows, true)?;
    }
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: "strong",
            spec: ReportSpec {
                kind: "verify-strong",
                path_range: v.strong_paths,
                modes: vec![c.solver.modes],
                dt: sim.dt(),
                tolerances: vec![tolerance(c, "epsilon", "verify.epsilon", v.epsilon)],
            },
            passed: Some(passed),
            code: verdict_code(passed),
            body: study,
            text,
        },
    )
}

// ---------------------------------------------------------------- verify-uniqueness

#[derive(Serialize)]
struct UniquenessRow {
    path_index: u64,
    bitwise_identical: bool,
    gronwall_held: bool,
    violations: usize,
    worst_ratio: f64,
    g_final: f64,
}

#[derive(Serialize)]
struct UniquenessBody {
    k: f64,
    k_effective: f64,
    perturbation: f64,
    perturb_mode: usize,
    rows: Vec<UniquenessRow>,
}

pub fn verify_uniqueness(ctx: &Ctx) -> Result<u8, Failure> {
    let c = &ctx.config;
    let v = &c.verify;
    let sim = simulator(&c.solver)?;
    if v.perturb_mode == 0 || v.perturb_mode >= sim.basis().m() {
        return Err(Failure::validation(format!(
            "verify.perturb_mode = {} must name a nonconstant retained mode",
            v.perturb_mode
        )));
    }
    let tol = c.gronwall_tolerance();
    let mut rows = Vec::new();
    let mut series: Vec<Vec<f64>> = Vec::new();
    let (mut k, mut k_eff) = (0.0, 0.0);
    for i in range_of(v.uniqueness_paths) {
        let phi0 = c.initial.sample(sim.basis(), c.solver.noise.master_seed, i)?;
        let pert = phi0.add(&SpectralField::mode(sim.basis().clone(), v.perturb_mode, v.perturbation)?);
        let a = sim.simulate(&phi0, i)?;
        let b = sim.simulate(&phi0, i)?;
        let p = sim.simulate(&pert, i)?;
        let same = uniqueness_gronwall(&sim, &a, &b, tol)?;
        let r = uniqueness_gronwall(&sim, &a, &p, tol)?;
        k = r.k;
        k_eff = r.k_effective;
        if series.is_empty() {
            series = r.times.iter().map(|t| vec![*t]).collect();
        }
        for (row, g) in series.iter_mut().zip(&r.g) {
            row.push(*g);
        }
        rows.push(UniquenessRow {
            path_index: i,
            bitwise_identical: same.bitwise_identical,
            gronwall_held: r.passed(),
            violations: r.violations.len(),
            worst_ratio: r.worst_ratio,
            g_final: *r.g.last().expect("nonempty"),
        });
    }
    let passed = rows.iter().all(|r| r.bitwise_identical && r.gronwall_held);
    let mut table = vec![vec![
        "path".to_string(),
        "identical".into(),
        "gronwall".into(),
        "violations".into(),
        "worst ratio".into(),
        "G(T)".into(),
    ]];
    for r in &rows {
        table.push(vec![
            r.path_index.to_string(),
            r.bitwise_identical.to_string(),
            if r.gronwall_held { "held" } else { "VIOLATED" }.into(),
            r.violations.to_string(),
            format!("{:.4}", r.worst_ratio),
            format!("{:.4e}", r.g_final),
        ]);
    }
    let text = format!("K = {k:.4e}, K with slack = {k_eff:.4e}\n{}", render_table(&table));
    let dir = RunDir::create(&ctx.root, "verify-uniqueness", c)?;
    if c.run.gnuplot {
        let names: Vec<String> = std::iter::once("t".to_string())
            .chain(rows.iter().map(|r| format!("G_path{}", r.path_index)))
            .collect();
        let cols: Vec<&str> = names.iter().map(String::as_str).collect();
        write_gnuplot(&dir, "gronwall", &c.hash(), &cols, &series, true)?;
    }
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: "uniqueness",
            spec: ReportSpec {
                kind: "verify-uniqueness",
                path_range: v.uniqueness_paths,
                modes: vec![sim.basis().m()],
                dt: sim.dt(),
                tolerances: vec![
                    tolerance(c, "gronwall_slack", "verify.gronwall_slack", tol.slack),
                    tolerance(c, "perturbation", "verify.perturbation", v.perturbation),
                ],
            },
            passed: Some(passed),
            code: verdict_code(passed),
            body: UniquenessBody {
                k,
                k_effective: k_eff,
                perturbation: v.perturbation,
                perturb_mode: v.perturb_mode,
                rows,
            },
            text,
        },
    )
}

// ---------------------------------------------------------------- estimate-moments

pub fn estimate_moments_cmd(ctx: &Ctx) -> Result<u8, Failure> {
    let c = &ctx.config;
    let v = &c.verify;
    let report = estimate_moments(&c.solver, &c.initial, &v.moment_modes, range_of(v.moment_paths))?;
    let code = if !report.valid {
        EXIT_BLOWUP
    } else {
        verdict_code(report.passed)
    };
    let text = format!(
        "functionals: {} (Hölder exponent {HOLDER_BETA}, record stride {})\n\
         reported exponents p' = {}, q' = {}\n{}",
        FUNCTIONAL_NAMES.join(", "),
        report.record_stride,
        report.exponents.p_prime,
        report.exponents.q_prime,
        report.to_text()
    );
    let dir = RunDir::create(&ctx.root, "estimate-moments", c)?;
    if c.run.gnuplot {
        let mut cols = vec!["m"];
        cols.extend(FUNCTIONAL_NAMES);
        let rows: Vec<Vec<f64>> = report
            .rows
            .iter()
            .map(|r| std::iter::once(r.m as f64).chain(r.means.iter().copied()).collect())
            .collect();
        write_gnuplot(&dir, "moments", &c.hash(), &cols, &rows, true)?;
    }
    let passed = report.passed;
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: "moments",
            spec: ReportSpec {
                kind: "estimate-moments",
                path_range: v.moment_paths,
                modes: v.moment_modes.clone(),
                dt: c.solver.dt,
                tolerances: vec![nlch_core::verify::Tolerance::new("max_over_median", report.ratio_limit, "fixed")],
            },
            passed: Some(passed),
            code,
            body: report,
            text,
        },
    )
}

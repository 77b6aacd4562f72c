//! Output directories, JSON/text reports and gnuplot series.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nlch_core::verify::{render_table, ReportHeader, Tolerance};
use serde::Serialize;

use crate::config::ResolvedConfig;
use crate::failure::Failure;

pub const OUTPUT_ROOT_ENV: &str = "NLCH_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "nlch-output";

/// `--output-root`, else `$NLCH_OUTPUT_ROOT`, else `./nlch-output`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// `<root>/<command>/<config hash>`, created on demand.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, config: &ResolvedConfig) -> Result<Self, Failure> {
        let path = root.join(command).join(config.hash());
        fs::create_dir_all(&path).map_err(|e| Failure::io(&format!("creating {}", path.display()), e))?;
        Ok(Self { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<(), Failure>,
    ) -> Result<PathBuf, Failure> {
        write_file(&self.file(name), f)
    }
}

/// Writes through a temporary sibling and renames, so a file either exists
/// complete or not at all.
pub fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<(), Failure>,
) -> Result<PathBuf, Failure> {
    let tmp = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let file = fs::File::create(&tmp).map_err(|e| Failure::io(&format!("creating {}", tmp.display()), e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Failure::io(&format!("renaming to {}", path.display()), e))?;
    Ok(path.to_path_buf())
}

/// Everything a report file holds besides its command-specific body.
#[derive(Debug, Serialize)]
pub struct Report<B: Serialize> {
    pub header: ReportHeader,
    pub solver_hash: String,
    /// `None` for commands that produce data rather than a verdict.
    pub passed: Option<bool>,
    pub exit_code: u8,
    pub config: ResolvedConfig,
    pub defaulted: Vec<crate::config::Defaulted>,
    pub body: B,
}

pub struct ReportSpec<'a> {
    pub kind: &'a str,
    pub path_range: [u64; 2],
    pub modes: Vec<usize>,
    pub dt: f64,
    pub tolerances: Vec<Tolerance>,
}

pub fn header(config: &ResolvedConfig, spec: ReportSpec<'_>) -> ReportHeader {
    ReportHeader {
        kind: spec.kind.to_string(),
        config_hash: config.hash(),
        master_seed: config.solver.noise.master_seed,
        path_range: spec.path_range,
        n_paths: spec.path_range[1] - spec.path_range[0],
        dt: spec.dt,
        modes: spec.modes,
        tolerances: spec.tolerances,
    }
}

/// A tolerance tagged with whether the file set it or it was defaulted.
pub fn tolerance(config: &ResolvedConfig, name: &str, key: &str, value: f64) -> Tolerance {
    let provenance = if config.defaulted.iter().any(|d| d.key == key) {
        format!("default {key}")
    } else {
        format!("config {key}")
    };
    Tolerance::new(name, value, &provenance)
}

fn defaulted_table(config: &ResolvedConfig) -> String {
    if config.defaulted.is_empty() {
        return "defaulted parameters: none\n".into();
    }
    let mut rows = vec![vec!["defaulted parameter".to_string(), "value".into()]];
    for d in &config.defaulted {
        rows.push(vec![d.key.clone(), d.value.to_string()]);
    }
    render_table(&rows)
}

/// Writes `<name>.json` and `<name>.txt` and returns the text form.
pub fn write_report<B: Serialize>(
    dir: &RunDir,
    name: &str,
    report: &Report<B>,
    body_text: &str,
) -> Result<String, Failure> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Failure::new(1, e.to_string()))?;
    dir.write_with(&format!("{name}.json"), |w| {
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    let verdict = match report.passed {
        Some(true) => "verdict: PASS\n",
        Some(false) => "verdict: FAIL\n",
        None => "",
    };
    let text = format!(
        "{}solver_hash  {}\n\n{}\n\n{}\n{}",
        report.header.to_text(),
        report.solver_hash,
        body_text.trim_end(),
        defaulted_table(&report.config),
        verdict
    );
    dir.write_with(&format!("{name}.txt"), |w| {
        w.write_all(text.as_bytes())?;
        Ok(())
    })?;
    Ok(text)
}

/// Whitespace-separated columns plus a script that plots every column
/// against the first.
pub fn write_gnuplot(
    dir: &RunDir,
    stem: &str,
    config_hash: &str,
    columns: &[&str],
    rows: &[Vec<f64>],
    logscale_y: bool,
) -> Result<(), Failure> {
    let data = format!("{stem}.dat");
    dir.write_with(&data, |w| {
        writeln!(w, "# config_hash={config_hash}")?;
        writeln!(w, "# {}", columns.join(" "))?;
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    })?;
    dir.write_with(&format!("{stem}.gp"), |w| {
        writeln!(w, "# config_hash={config_hash}")?;
        writeln!(w, "set xlabel '{}'", columns[0])?;
        if logscale_y {
            writeln!(w, "set logscale y")?;
        }
        let plots: Vec<String> = (1..columns.len())
            .map(|i| format!("'{data}' using 1:{} with lines title '{}'", i + 1, columns[i]))
            .collect();
        writeln!(w, "plot {}", plots.join(", \\\n     "))?;
        Ok(())
    })?;
    Ok(())
}

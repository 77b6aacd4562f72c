//! File formats: trajectories and Wiener paths as delimited text or a
//! compact little-endian binary, and delimited kernel-table import.
//!
//! Text files open with `#`-prefixed `key=value` header lines. Binary files
//! start with an 8-byte magic, a `u32` header length and a JSON header,
//! followed by raw `f64` values.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{SeedLineage, WienerPath};
use crate::physics::KernelTable;
use crate::solver::{Trajectory, TrajectoryStatus};
use crate::spectral::{BasisSpec, SpectralField};

const TRAJECTORY_MAGIC: &[u8; 8] = b"NLCHTRJ1";
const PATH_MAGIC: &[u8; 8] = b"NLCHPTH1";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Metadata carried by every trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub version: u32,
    pub config_hash: String,
    pub lineage: SeedLineage,
    pub dt: f64,
    pub record_stride: usize,
    pub modes: usize,
    pub records: usize,
    pub status: TrajectoryStatus,
    /// Free-form tag from the caller, such as a run-configuration hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TrajectoryHeader {
    pub fn of(traj: &Trajectory) -> Self {
        Self {
            version: FORMAT_VERSION,
            config_hash: traj.config_hash().to_string(),
            lineage: traj.path().lineage(),
            dt: traj.dt(),
            record_stride: traj.record_stride(),
            modes: traj.initial().coeffs().len(),
            records: traj.times().len(),
            status: traj.status(),
            label: None,
        }
    }
}

/// A trajectory as stored on disk, detached from its basis and path.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub header: TrajectoryHeader,
    pub times: Vec<f64>,
    /// One coefficient vector per recorded time.
    pub coeffs: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn of(traj: &Trajectory) -> Self {
        Self {
            header: TrajectoryHeader::of(traj),
            times: traj.times().to_vec(),
            coeffs: traj.states().iter().map(|s| s.coeffs().to_vec()).collect(),
        }
    }

    /// Reattaches the basis and the driving path.
    pub fn into_trajectory(self, basis: &Arc<BasisSpec>, path: Arc<WienerPath>) -> Result<Trajectory> {
        if basis.m() != self.header.modes {
            return Err(Error::ShapeMismatch(format!(
                "file holds {} modes, basis has {}",
                self.header.modes,
                basis.m()
            )));
        }
        if path.lineage() != self.header.lineage {
            return Err(Error::LineageMismatch(format!(
                "file was driven by {:?}, supplied path is {:?}",
                self.header.lineage,
                path.lineage()
            )));
        }
        let states = self
            .coeffs
            .into_iter()
            .map(|c| SpectralField::new(basis.clone(), c))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::from_parts(
            self.times,
            states,
            path,
            self.header.status,
            self.header.config_hash,
            self.header.record_stride,
            self.header.dt,
        )
    }
}

fn status_text(s: TrajectoryStatus) -> String {
    match s {
        TrajectoryStatus::Completed => "completed".into(),
        TrajectoryStatus::BlowUp { step } => format!("blow_up:{step}"),
    }
}

fn parse_status(s: &str) -> Result<TrajectoryStatus> {
    if s == "completed" {
        return Ok(TrajectoryStatus::Completed);
    }
    s.strip_prefix("blow_up:")
        .and_then(|n| n.parse().ok())
        .map(|step| TrajectoryStatus::BlowUp { step })
        .ok_or_else(|| format_err(format!("unknown status {s:?}")))
}

fn write_lineage(w: &mut impl Write, l: &SeedLineage) -> Result<()> {
    writeln!(w, "# master_seed={}", l.master_seed)?;
    writeln!(w, "# path_index={}", l.path_index)?;
    writeln!(w, "# coarsening={}", l.coarsening)?;
    Ok(())
}

fn write_label(w: &mut impl Write, label: Option<&str>) -> Result<()> {
    if let Some(l) = label {
        if l.contains(['\n', '\r']) {
            return Err(Error::InvalidArgument("file labels must be a single line".into()));
        }
        writeln!(w, "# label={l}")?;
    }
    Ok(())
}

/// Writes `t,mode,coefficient` rows below a `#` header.
pub fn write_trajectory_csv(w: &mut impl Write, traj: &Trajectory, label: Option<&str>) -> Result<()> {
    let h = TrajectoryHeader::of(traj);
    writeln!(w, "# nlch-trajectory v{}", h.version)?;
    writeln!(w, "# config_hash={}", h.config_hash)?;
    write_label(w, label)?;
    write_lineage(w, &h.lineage)?;
    writeln!(w, "# dt={:e}", h.dt)?;
    writeln!(w, "# record_stride={}", h.record_stride)?;
    writeln!(w, "# modes={}", h.modes)?;
    writeln!(w, "# records={}", h.records)?;
    writeln!(w, "# status={}", status_text(h.status))?;
    writeln!(w, "t,mode,coefficient")?;
    for (t, s) in traj.times().iter().zip(traj.states()) {
        for (k, c) in s.coeffs().iter().enumerate() {
            writeln!(w, "{t:e},{k},{c:e}")?;
        }
    }
    Ok(())
}

/// Splits leading `# key=value` lines from the remaining lines.
fn read_header_lines(r: impl BufRead) -> Result<(Vec<(String, String)>, Vec<String>)> {
    let mut header = Vec::new();
    let mut body = Vec::new();
    for line in r.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if !body.is_empty() {
                return Err(format_err("header line after data"));
            }
            for token in rest.split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    header.push((k.to_string(), v.to_string()));
                }
            }
        } else {
            body.push(trimmed.to_string());
        }
    }
    Ok((header, body))
}

fn lookup<T: std::str::FromStr>(header: &[(String, String)], key: &str) -> Result<T> {
    let v = header
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| format_err(format!("missing header key {key}")))?;
    v.parse()
        .map_err(|_| format_err(format!("header key {key} has unparsable value {v:?}")))
}

fn lineage_from(header: &[(String, String)]) -> Result<SeedLineage> {
    Ok(SeedLineage {
        master_seed: lookup(header, "master_seed")?,
        path_index: lookup(header, "path_index")?,
        coarsening: lookup(header, "coarsening")?,
    })
}

fn split_row(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c == '\t' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| format_err(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| format_err(format!("not an index: {s:?}")))
}

pub fn read_trajectory_csv(r: impl BufRead) -> Result<TrajectoryRecord> {
    let (header, body) = read_header_lines(r)?;
    let header = TrajectoryHeader {
        version: FORMAT_VERSION,
        config_hash: lookup(&header, "config_hash")?,
        lineage: lineage_from(&header)?,
        dt: lookup(&header, "dt")?,
        record_stride: lookup(&header, "record_stride")?,
        modes: lookup(&header, "modes")?,
        records: lookup(&header, "records")?,
        status: parse_status(&lookup::<String>(&header, "status")?)?,
        label: header.iter().find(|(k, _)| k == "label").map(|(_, v)| v.clone()),
    };
    let rows = body
        .iter()
        .skip_while(|l| l.starts_with('t'))
        .map(|l| {
            let f = split_row(l);
            if f.len() != 3 {
                return Err(format_err(format!("expected 3 columns in {l:?}")));
            }
            Ok((parse_f64(f[0])?, parse_usize(f[1])?, parse_f64(f[2])?))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = header.modes;
    if m == 0 || rows.len() != header.records * m {
        return Err(format_err(format!(
            "{} rows for {} records of {m} modes",
            rows.len(),
            header.records
        )));
    }
    let mut times = Vec::with_capacity(header.records);
    let mut coeffs = Vec::with_capacity(header.records);
    for chunk in rows.chunks(m) {
        let t = chunk[0].0;
        if chunk.iter().enumerate().any(|(k, r)| r.1 != k || r.0 != t) {
            return Err(format_err(format!("record at t={t} is not a full mode sweep")));
        }
        times.push(t);
        coeffs.push(chunk.iter().map(|r| r.2).collect());
    }
    Ok(TrajectoryRecord { header, times, coeffs })
}

fn write_binary_header<H: Serialize>(w: &mut impl Write, magic: &[u8; 8], header: &H) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| format_err(e.to_string()))?;
    w.write_all(magic)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_binary_header<H: for<'de> Deserialize<'de>>(r: &mut impl Read, magic: &[u8; 8]) -> Result<H> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(format_err("bad magic"));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(format_err("binary header too long"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    serde_json::from_slice(&json).map_err(|e| format_err(e.to_string()))
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(format_err("trailing bytes after data"));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

/// Each record is `t` followed by its `m` coefficients.
pub fn write_trajectory_binary(w: &mut impl Write, traj: &Trajectory, label: Option<&str>) -> Result<()> {
    let h = TrajectoryHeader {
        label: label.map(str::to_string),
        ..TrajectoryHeader::of(traj)
    };
    write_binary_header(w, TRAJECTORY_MAGIC, &h)?;
    for (t, s) in traj.times().iter().zip(traj.states()) {
        write_f64s(w, &[*t])?;
        write_f64s(w, s.coeffs())?;
    }
    Ok(())
}

pub fn read_trajectory_binary(mut r: impl Read) -> Result<TrajectoryRecord> {
    let header: TrajectoryHeader = read_binary_header(&mut r, TRAJECTORY_MAGIC)?;
    if header.modes == 0 {
        return Err(format_err("zero modes"));
    }
    let data = read_f64s(&mut r, header.records * (header.modes + 1))?;
    let (times, coeffs) = data
        .chunks_exact(header.modes + 1)
        .map(|c| (c[0], c[1..].to_vec()))
        .unzip();
    Ok(TrajectoryRecord { header, times, coeffs })
}

/// Metadata carried by every Wiener path file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathHeader {
    pub version: u32,
    pub lineage: SeedLineage,
    pub dt: f64,
    pub steps: usize,
    pub modes: usize,
    /// Free-form tag from the caller, such as a run-configuration hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PathHeader {
    pub fn of(path: &WienerPath) -> Self {
        Self {
            version: FORMAT_VERSION,
            lineage: path.lineage(),
            dt: path.dt(),
            steps: path.steps(),
            modes: path.modes(),
            label: None,
        }
    }
}

/// Writes `step,mode,increment` rows below a header with lineage and `dt`.
pub fn write_path_csv(w: &mut impl Write, path: &WienerPath, label: Option<&str>) -> Result<()> {
    let h = PathHeader::of(path);
    writeln!(w, "# nlch-path v{}", h.version)?;
    write_label(w, label)?;
    write_lineage(w, &h.lineage)?;
    writeln!(w, "# dt={:e}", h.dt)?;
    writeln!(w, "# steps={}", h.steps)?;
    writeln!(w, "# modes={}", h.modes)?;
    writeln!(w, "step,mode,increment")?;
    for n in 0..path.steps() {
        for (k, v) in path.increment(n).iter().enumerate() {
            writeln!(w, "{n},{k},{v:e}")?;
        }
    }
    Ok(())
}

pub fn read_path_csv(r: impl BufRead) -> Result<WienerPath> {
    let (header, body) = read_header_lines(r)?;
    let steps: usize = lookup(&header, "steps")?;
    let modes: usize = lookup(&header, "modes")?;
    let dt: f64 = lookup(&header, "dt")?;
    let lineage = lineage_from(&header)?;
    let mut increments = vec![f64::NAN; steps * modes];
    let mut seen = 0usize;
    for line in body.iter().skip_while(|l| l.starts_with('s')) {
        let f = split_row(line);
        if f.len() != 3 {
            return Err(format_err(format!("expected 3 columns in {line:?}")));
        }
        let (n, k) = (parse_usize(f[0])?, parse_usize(f[1])?);
        if n >= steps || k >= modes {
            return Err(format_err(format!("row ({n}, {k}) outside {steps} × {modes}")));
        }
        increments[n * modes + k] = parse_f64(f[2])?;
        seen += 1;
    }
    if seen != steps * modes || increments.iter().any(|v| v.is_nan()) {
        return Err(format_err(format!("{seen} rows for {steps} × {modes} increments")));
    }
    WienerPath::new(increments, steps, modes, dt, lineage)
}

pub fn write_path_binary(w: &mut impl Write, path: &WienerPath, label: Option<&str>) -> Result<()> {
    let h = PathHeader {
        label: label.map(str::to_string),
        ..PathHeader::of(path)
    };
    write_binary_header(w, PATH_MAGIC, &h)?;
    write_f64s(w, path.increments())
}

pub fn read_path_binary(mut r: impl Read) -> Result<WienerPath> {
    let h: PathHeader = read_binary_header(&mut r, PATH_MAGIC)?;
    let data = read_f64s(&mut r, h.steps * h.modes)?;
    WienerPath::new(data, h.steps, h.modes, h.dt, h.lineage)
}

/// Reads a kernel table from delimited text.
///
/// The header is `# dims=<d> shape=<n1>,…,<nd>`; each row holds `d` offset
/// coordinates followed by the kernel value, in any order. Offsets must form
/// a centred lattice, from which the spacing is recovered.
pub fn read_kernel_table(r: impl BufRead) -> Result<KernelTable> {
    let (header, body) = read_header_lines(r)?;
    let dims: usize = lookup(&header, "dims")?;
    let shape: Vec<usize> = lookup::<String>(&header, "shape")?
        .split(',')
        .map(parse_usize)
        .collect::<Result<_>>()?;
    if dims == 0 || shape.len() != dims {
        return Err(format_err(format!("shape {shape:?} does not have {dims} axes")));
    }
    if shape.iter().any(|n| n % 2 == 0) {
        return Err(format_err("table extents must be odd"));
    }
    let rows = body
        .iter()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '+' || c == '.'))
        .map(|l| {
            let f = split_row(l);
            if f.len() != dims + 1 {
                return Err(format_err(format!("expected {} columns in {l:?}", dims + 1)));
            }
            f.iter().map(|s| parse_f64(s)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = shape.iter().product();
    if rows.len() != total {
        return Err(format_err(format!("{} rows for a table of {total} entries", rows.len())));
    }
    let mut spacing = Vec::with_capacity(dims);
    for (axis, &n) in shape.iter().enumerate() {
        let max = rows.iter().map(|r| r[axis]).fold(f64::NEG_INFINITY, f64::max);
        let half = (n - 1) / 2;
        let h = if half == 0 { 1.0 } else { max / half as f64 };
        if !(h > 0.0 && h.is_finite()) {
            return Err(format_err(format!("axis {axis} offsets are not a centred lattice")));
        }
        spacing.push(h);
    }
    let mut values = vec![f64::NAN; total];
    for r in &rows {
        let mut flat = 0usize;
        for (axis, &n) in shape.iter().enumerate() {
            let half = ((n - 1) / 2) as f64;
            let j = r[axis] / spacing[axis] + half;
            let ji = j.round();
            if (j - ji).abs() > 1e-6 || ji < 0.0 || ji >= n as f64 {
                return Err(format_err(format!("offset {} off the axis-{axis} lattice", r[axis])));
            }
            flat = flat * n + ji as usize;
        }
        if !values[flat].is_nan() {
            return Err(format_err("duplicate offset"));
        }
        values[flat] = r[dims];
    }
    let table = KernelTable { shape, spacing, values };
    crate::physics::KernelSpec::Table(table.clone()).validate()?;
    Ok(table)
}

/// Inverse of [`read_kernel_table`].
pub fn write_kernel_table(w: &mut impl Write, table: &KernelTable) -> Result<()> {
    let shape: Vec<String> = table.shape.iter().map(|n| n.to_string()).collect();
    writeln!(w, "# dims={} shape={}", table.shape.len(), shape.join(","))?;
    let mut idx = vec![0usize; table.shape.len()];
    for (flat, v) in table.values.iter().enumerate() {
        let mut rem = flat;
        for axis in (0..idx.len()).rev() {
            idx[axis] = rem % table.shape[axis];
            rem /= table.shape[axis];
        }
        let coords: Vec<String> = idx
            .iter()
            .zip(&table.shape)
            .zip(&table.spacing)
            .map(|((j, n), h)| format!("{:e}", (*j as f64 - ((n - 1) / 2) as f64) * h))
            .collect();
        writeln!(w, "{},{v:e}", coords.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{IcSpec, NoiseSpec};
    use crate::solver::{Simulator, SolverConfig};

    fn short_run() -> (Simulator, Trajectory) {
        let sim = Simulator::new(SolverConfig {
            horizon: 0.002,
            record_stride: 3,
            ..SolverConfig::desk()
        })
        .unwrap();
        let phi0 = IcSpec::Deterministic { coeffs: vec![0.1, 0.2, -0.05] }
            .sample(sim.basis(), 0, 0)
            .unwrap();
        let traj = sim.simulate(&phi0, 4).unwrap();
        (sim, traj)
    }

    #[test]
    fn trajectory_csv_round_trip_is_exact() {
        let (sim, traj) = short_run();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, Some("run-a")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(&format!("# config_hash={}", sim.config_hash())));
        assert!(text.contains("t,mode,coefficient"));
        let rec = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(rec.header.label.as_deref(), Some("run-a"));
        let mut expected = TrajectoryRecord::of(&traj);
        expected.header.label = Some("run-a".into());
        assert_eq!(rec, expected);
        let back = rec.into_trajectory(sim.basis(), traj.path().clone()).unwrap();
        assert_eq!(back.times(), traj.times());
        assert_eq!(back.last().coeffs(), traj.last().coeffs());
    }

    #[test]
    fn trajectory_binary_round_trip_and_corruption() {
        let (_, traj) = short_run();
        let mut buf = Vec::new();
        write_trajectory_binary(&mut buf, &traj, Some("run-b")).unwrap();
        let mut expected = TrajectoryRecord::of(&traj);
        expected.header.label = Some("run-b".into());
        assert_eq!(read_trajectory_binary(&buf[..]).unwrap(), expected);
        assert!(read_trajectory_binary(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_trajectory_binary(&extra[..]).is_err());
        let mut bad = buf;
        bad[0] = b'X';
        assert!(matches!(read_trajectory_binary(&bad[..]), Err(Error::Format(_))));
    }

    #[test]
    fn reattaching_a_foreign_path_is_refused() {
        let (sim, traj) = short_run();
        let other = sim.simulate(traj.initial(), 5).unwrap();
        let rec = TrajectoryRecord::of(&traj);
        assert!(matches!(
            rec.into_trajectory(sim.basis(), other.path().clone()),
            Err(Error::LineageMismatch(_))
        ));
    }

    #[test]
    fn path_round_trips() {
        let sim = Simulator::new(SolverConfig::desk()).unwrap();
        let spec = NoiseSpec::power(0.01, 2.0, 77);
        let path = crate::noise::sample_path(&spec, sim.basis(), 12, 1e-3, 3).unwrap();
        let mut csv = Vec::new();
        write_path_csv(&mut csv, &path, Some("p")).unwrap();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert!(text.contains("# master_seed=77") && text.contains("step,mode,increment"));
        assert_eq!(read_path_csv(&csv[..]).unwrap(), path);
        let mut bin = Vec::new();
        write_path_binary(&mut bin, &path, None).unwrap();
        assert_eq!(read_path_binary(&bin[..]).unwrap(), path);
        let truncated: String = text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n");
        assert!(read_path_csv(truncated.as_bytes()).is_err());
    }

    #[test]
    fn kernel_table_import() {
        let text = "# dims=2 shape=3,1\n0.1\t0\t0.5\n-0.1 0 0.5\n0,0,2\n";
        let t = read_kernel_table(text.as_bytes()).unwrap();
        assert_eq!(t.shape, vec![3, 1]);
        assert!((t.spacing[0] - 0.1).abs() < 1e-15);
        assert_eq!(t.values, vec![0.5, 2.0, 0.5]);
        let mut out = Vec::new();
        write_kernel_table(&mut out, &t).unwrap();
        assert_eq!(read_kernel_table(&out[..]).unwrap(), t);

        assert!(read_kernel_table("# dims=1 shape=3\n0 1\n0.1 1\n".as_bytes()).is_err());
        assert!(read_kernel_table("# dims=1 shape=3\n0 1\n0.1 1\n0.1 1\n".as_bytes()).is_err());
        assert!(read_kernel_table("# dims=1 shape=3\n0 1\n0.1 1\n-0.05 1\n".as_bytes()).is_err());
        assert!(read_kernel_table("# dims=1 shape=4\n0 1\n".as_bytes()).is_err());
    }
}

//! Sharded ensembles. Each shard covers a `path_index` range and is marked
//! complete by a `shard.json` written last, so reruns skip finished shards
//! and an interrupted run resumes where it stopped.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nlch_core::verify::render_table;
use serde::{Deserialize, Serialize};

use crate::commands::{finish, range_of, simulator, write_traj_files, Ctx, Finish};
use crate::failure::{Failure, EXIT_BLOWUP, EXIT_OK};
use crate::output::{write_file, ReportSpec, RunDir};

/// Running sums over the completed paths of one shard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardStats {
    pub config_hash: String,
    pub range: [u64; 2],
    pub completed: u64,
    pub blowups: Vec<u64>,
    pub times: Vec<f64>,
    pub modes: usize,
    /// `[record × mode]` sums of coefficients and of their squares.
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl ShardStats {
    fn merge(&mut self, other: &ShardStats) -> Result<(), Failure> {
        if self.completed == 0 {
            self.times = other.times.clone();
            self.sum = other.sum.clone();
            self.sum_sq = other.sum_sq.clone();
        } else if other.completed > 0 {
            if other.times != self.times {
                return Err(Failure::validation("shards were recorded at different times"));
            }
            for (a, b) in self.sum.iter_mut().zip(&other.sum) {
                *a += b;
            }
            for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
                *a += b;
            }
        }
        self.completed += other.completed;
        self.blowups.extend(&other.blowups);
        Ok(())
    }
}

pub fn shard_ranges(paths: [u64; 2], size: u64) -> Vec<[u64; 2]> {
    (paths[0]..paths[1])
        .step_by(size as usize)
        .map(|lo| [lo, (lo + size).min(paths[1])])
        .collect()
}

fn shard_dir(base: &Path, r: [u64; 2]) -> PathBuf {
    base.join("shards").join(format!("{:010}-{:010}", r[0], r[1]))
}

fn load_marker(dir: &Path, hash: &str, range: [u64; 2]) -> Option<ShardStats> {
    let text = fs::read_to_string(dir.join("shard.json")).ok()?;
    let stats: ShardStats = serde_json::from_str(&text).ok()?;
    (stats.config_hash == hash && stats.range == range).then_some(stats)
}

fn run_shard(ctx: &Ctx, dir: &Path, range: [u64; 2]) -> Result<ShardStats, Failure> {
    let c = &ctx.config;
    let sim = simulator(&c.solver)?;
    fs::create_dir_all(dir).map_err(|e| Failure::io(&format!("creating {}", dir.display()), e))?;
    let m = sim.basis().m();
    let results = sim.run_paths(&c.initial, range_of(range), |i, traj| {
        write_traj_files(c, dir, &traj, i).map_err(|f| nlch_core::Error::Format(f.message))?;
        Ok((i, traj))
    })?;
    let mut stats = ShardStats {
        config_hash: c.hash(),
        range,
        completed: 0,
        blowups: Vec::new(),
        times: Vec::new(),
        modes: m,
        sum: Vec::new(),
        sum_sq: Vec::new(),
    };
    for (i, traj) in results {
        if !traj.is_completed() {
            stats.blowups.push(i);
            continue;
        }
        if stats.completed == 0 {
            stats.times = traj.times().to_vec();
            stats.sum = vec![0.0; stats.times.len() * m];
            stats.sum_sq = vec![0.0; stats.times.len() * m];
        }
        for (r, s) in traj.states().iter().enumerate() {
            for (k, v) in s.coeffs().iter().enumerate() {
                stats.sum[r * m + k] += v;
                stats.sum_sq[r * m + k] += v * v;
            }
        }
        stats.completed += 1;
    }
    let json = serde_json::to_string(&stats).map_err(|e| Failure::new(1, e.to_string()))?;
    write_file(&dir.join("shard.json"), |w| Ok(w.write_all(json.as_bytes())?))?;
    Ok(stats)
}

#[derive(Serialize)]
struct EnsembleBody {
    shards_total: usize,
    shards_run: Vec<[u64; 2]>,
    shards_resumed: Vec<[u64; 2]>,
    shards_pending: Vec<[u64; 2]>,
    completed_paths: u64,
    blowups: Vec<u64>,
    summary: Option<PathBuf>,
}

/// Runs every shard, or only shard number `only`, then writes the ensemble
/// summary once all shards are complete.
pub fn ensemble(ctx: &Ctx, only: Option<usize>) -> Result<u8, Failure> {
    let c = &ctx.config;
    let hash = c.hash();
    let dir = RunDir::create(&ctx.root, "ensemble", c)?;
    let shards = shard_ranges(c.run.paths, c.run.shard_size);
    if let Some(k) = only {
        if k >= shards.len() {
            return Err(Failure::validation(format!("shard {k} out of range ({} shards)", shards.len())));
        }
    }
    let mut body = EnsembleBody {
        shards_total: shards.len(),
        shards_run: vec![],
        shards_resumed: vec![],
        shards_pending: vec![],
        completed_paths: 0,
        blowups: vec![],
        summary: None,
    };
    let mut merged: Option<ShardStats> = None;
    for (k, &r) in shards.iter().enumerate() {
        let sdir = shard_dir(&dir.path, r);
        let stats = if let Some(s) = load_marker(&sdir, &hash, r) {
            body.shards_resumed.push(r);
            Some(s)
        } else if only.is_none_or(|o| o == k) {
            body.shards_run.push(r);
            Some(run_shard(ctx, &sdir, r)?)
        } else {
            body.shards_pending.push(r);
            None
        };
        if let Some(s) = stats {
            match &mut merged {
                None => merged = Some(s),
                Some(acc) => acc.merge(&s)?,
            }
        }
    }
    if let Some(total) = merged.as_ref() {
        body.completed_paths = total.completed;
        body.blowups = total.blowups.clone();
    }
    if body.shards_pending.is_empty() {
        if let Some(total) = merged.as_ref().filter(|t| t.completed > 0) {
            let m = total.modes;
            let n = total.completed as f64;
            let path = dir.write_with("summary.csv", |w| {
                writeln!(w, "# config_hash={hash}")?;
                writeln!(w, "# master_seed={}", c.solver.noise.master_seed)?;
                writeln!(w, "# paths={}..{} completed={}", c.run.paths[0], c.run.paths[1], total.completed)?;
                writeln!(w, "t,mode,mean,variance")?;
                for (r, t) in total.times.iter().enumerate() {
                    for k in 0..m {
                        let mean = total.sum[r * m + k] / n;
                        let var = if total.completed > 1 {
                            (total.sum_sq[r * m + k] - n * mean * mean) / (n - 1.0)
                        } else {
                            0.0
                        };
                        writeln!(w, "{t:e},{k},{mean:e},{:e}", var.max(0.0))?;
                    }
                }
                Ok(())
            })?;
            body.summary = Some(path);
        }
    }
    let text = render_table(&[
        vec!["shards".into(), body.shards_total.to_string()],
        vec!["run now".into(), body.shards_run.len().to_string()],
        vec!["resumed".into(), body.shards_resumed.len().to_string()],
        vec!["pending".into(), body.shards_pending.len().to_string()],
        vec!["completed paths".into(), body.completed_paths.to_string()],
        vec!["blow-ups".into(), format!("{:?}", body.blowups)],
        vec![
            "summary".into(),
            body.summary.as_ref().map_or("not yet".into(), |p| p.display().to_string()),
        ],
    ]);
    let code = if body.blowups.is_empty() { EXIT_OK } else { EXIT_BLOWUP };
    finish(
        ctx,
        Finish {
            dir: &dir,
            name: "ensemble",
            spec: ReportSpec {
                kind: "ensemble",
                path_range: c.run.paths,
                modes: vec![c.solver.modes],
                dt: c.solver.dt,
                tolerances: vec![],
            },
            passed: None,
            code,
            body,
            text,
        },
    )
}

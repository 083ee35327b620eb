//! Tab-separated output tables and the atlas dump.
//!
//! Numbers are written in Rust's shortest round-trip form, so files parse
//! back to identical values and repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::atlas::AtlasDump;
use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::manifold::State;
use crate::planner::{RunStats, Trajectory, TrajectorySample};
use crate::series::SeriesPoint;

fn header(out: &mut String, prefix: &str, n: usize) {
    for i in 0..n {
        let _ = write!(out, "\t{prefix}{i}");
    }
}

fn values<'a>(out: &mut String, v: impl IntoIterator<Item = &'a f64>) {
    for x in v {
        let _ = write!(out, "\t{x:?}");
    }
}

/// Columns `t q0.. qdot0.. u0..`, one row per sample.
pub fn format_trajectory(traj: &Trajectory, n_q: usize, n_u: usize) -> String {
    let mut out = String::from("t");
    header(&mut out, "q", n_q);
    header(&mut out, "qdot", n_q);
    header(&mut out, "u", n_u);
    out.push('\n');
    for s in &traj.samples {
        let _ = write!(out, "{:?}", s.t);
        values(&mut out, s.x.0.iter());
        values(&mut out, s.u.0.iter());
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory, n_q: usize, n_u: usize) -> Result<()> {
    std::fs::write(path, format_trajectory(traj, n_q, n_u))?;
    Ok(())
}

pub fn parse_trajectory(reader: impl BufRead) -> Result<(Trajectory, usize, usize)> {
    let mut lines = reader.lines();
    let head = lines.next().ok_or_else(|| Error::invalid("trajectory file is empty"))??;
    let cols: Vec<&str> = head.split('\t').collect();
    if cols.first() != Some(&"t") {
        return Err(Error::invalid("trajectory header must start with `t`"));
    }
    let count = |p: &str| cols.iter().filter(|c| c.strip_prefix(p).is_some_and(|r| r.parse::<usize>().is_ok())).count();
    let n_q = count("q");
    let n_qdot = count("qdot");
    let n_u = count("u");
    if n_q != n_qdot || cols.len() != 1 + 2 * n_q + n_u {
        return Err(Error::invalid("trajectory header columns are inconsistent"));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split('\t')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("trajectory row {}: {e}", i + 1)))?;
        if row.len() != cols.len() {
            return Err(Error::invalid(format!("trajectory row {} has {} columns", i + 1, row.len())));
        }
        samples.push(TrajectorySample {
            t: row[0],
            x: State::new(&row[1..1 + n_q], &row[1 + n_q..1 + 2 * n_q]),
            u: Action::from_slice(&row[1 + 2 * n_q..]),
        });
    }
    if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::invalid("trajectory times must be strictly increasing"));
    }
    Ok((Trajectory { samples }, n_q, n_u))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Trajectory, usize, usize)> {
    let file = std::fs::File::open(path)?;
    parse_trajectory(std::io::BufReader::new(file))
}

/// Run counters only; wall time goes to [`format_timing`] so this file is
/// reproducible.
pub fn format_stats(stats: &RunStats) -> String {
    format!(
        "samples\tcharts\tnodes_fwd\tnodes_bwd\titerations\tsuccess\n{}\t{}\t{}\t{}\t{}\t{}\n",
        stats.samples, stats.charts, stats.nodes_fwd, stats.nodes_bwd, stats.iterations, stats.success
    )
}

pub fn format_timing(stats: &RunStats) -> String {
    format!("wall_time_s\n{:?}\n", stats.wall_time_s)
}

pub fn format_series(series: &[SeriesPoint], n_q: usize) -> String {
    let mut out = String::from("t");
    header(&mut out, "q", n_q);
    header(&mut out, "qdot", n_q);
    out.push_str("\tresidual\tenergy\n");
    for p in series {
        let _ = write!(out, "{:?}", p.t);
        values(&mut out, p.x.0.iter());
        let _ = writeln!(out, "\t{:?}\t{:?}", p.residual, p.energy);
    }
    out
}

/// One row of a torque sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub tau_max: f64,
    pub runs: usize,
    pub solved: usize,
    pub mean_samples: f64,
    pub mean_charts: f64,
    pub mean_nodes: f64,
    pub mean_time_s: f64,
}

impl BenchRow {
    pub fn from_runs(tau_max: f64, runs: &[RunStats]) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&RunStats) -> f64| runs.iter().map(f).sum::<f64>() / n;
        BenchRow {
            tau_max,
            runs: runs.len(),
            solved: runs.iter().filter(|r| r.success).count(),
            mean_samples: mean(&|r| r.samples as f64),
            mean_charts: mean(&|r| r.charts as f64),
            mean_nodes: mean(&|r| (r.nodes_fwd + r.nodes_bwd) as f64),
            mean_time_s: mean(&|r| r.wall_time_s),
        }
    }
}

pub fn format_bench(rows: &[BenchRow]) -> String {
    let mut out = String::from("tau_max\truns\tsolved\tmean_samples\tmean_charts\tmean_nodes\tmean_time_s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:?}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}\t{:.3}",
            r.tau_max, r.runs, r.solved, r.mean_samples, r.mean_charts, r.mean_nodes, r.mean_time_s
        );
    }
    out
}

pub fn write_atlas(path: impl AsRef<Path>, dump: &AtlasDump) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut file, dump)?;
    file.write_all(b"\n")?;
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kinoplan::io::{self, BenchRow};
use kinoplan::par;
use kinoplan::planner::{Planner, RunStats};
use kinoplan::series::{integrate_series, IntegratorKind};
use kinoplan::{Error, Problem};

/// Kinodynamic RRT planning on constraint manifolds.
#[derive(Parser)]
#[command(name = "kinoplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a trajectory for a problem file.
    Plan(PlanArgs),
    /// Re-integrate the actions of a trajectory file and write a time series.
    Simulate(SimulateArgs),
    /// Run the planner over seeds and torque limits and tabulate the means.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// Problem definition (JSON).
    problem: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override `params.max_iterations`.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Evaluate candidate actions on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    /// Override `params.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override every actuator's torque bound.
    #[arg(long)]
    tau_max: Option<f64>,
    /// Also write the final atlas to atlas.json.
    #[arg(long)]
    atlas_dump: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorArg {
    AtlasTrap,
    Rk4Ode,
}

#[derive(Args)]
struct SimulateArgs {
    /// Problem definition (JSON).
    problem: PathBuf,
    /// Trajectory file written by `plan`.
    trajectory: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "atlas-trap")]
    integrator: IntegratorArg,
    /// s, fixed step of the rk4-ode integrator.
    #[arg(long, default_value_t = 0.01)]
    rk4_step: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Seeds, e.g. `1-10` or `1,4,7`.
    #[arg(long, default_value = "1-10")]
    seeds: String,
    /// Torque bounds, e.g. `16,12,8,4`. Defaults to the problem's own.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
                if b < a {
                    bail!("empty seed range `{part}`");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse()?),
        }
    }
    if out.is_empty() {
        bail!("no seeds given");
    }
    Ok(out)
}

fn load(common: &Common) -> Result<Problem> {
    let mut problem =
        Problem::load(&common.problem).with_context(|| format!("loading {}", common.problem.display()))?;
    if let Some(n) = common.max_iter {
        problem.params.max_iterations = n;
    }
    if common.sequential {
        problem.params.parallel = false;
    }
    Ok(problem)
}

fn with_tau(problem: &Problem, tau: f64) -> Problem {
    let mut p = problem.clone();
    p.model.set_tau_max(tau);
    p
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: PathBuf, text: String) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs one planning query. Returns the stats and, on success, the planner
/// output needed for files.
fn run_planner(problem: &Problem) -> Result<(RunStats, Option<(String, kinoplan::atlas::AtlasDump)>)> {
    let mech = problem.mech();
    let mut planner = Planner::new(
        mech,
        &problem.world,
        &problem.start,
        &problem.goal,
        problem.params.clone(),
        problem.integrator,
    )?;
    match planner.run() {
        Ok(sol) => {
            let text = io::format_trajectory(&sol.trajectory, mech.n_q(), mech.n_u());
            Ok((sol.stats, Some((text, planner.atlas().dump()))))
        }
        Err(Error::PlanningTimeout(stats)) => Ok((*stats, None)),
        Err(e) => Err(e.into()),
    }
}

fn cmd_plan(args: PlanArgs) -> Result<ExitCode> {
    let mut problem = load(&args.common)?;
    if let Some(seed) = args.seed {
        problem.params.seed = seed;
    }
    if let Some(tau) = args.tau_max {
        problem = with_tau(&problem, tau);
    }
    let out = &args.common.out;
    create_dir(out)?;
    let (stats, solution) = run_planner(&problem)?;
    write(out.join("stats.tsv"), io::format_stats(&stats))?;
    write(out.join("timing.tsv"), io::format_timing(&stats))?;
    match solution {
        Some((trajectory, atlas)) => {
            write(out.join("trajectory.tsv"), trajectory)?;
            if args.atlas_dump {
                io::write_atlas(out.join("atlas.json"), &atlas)?;
            }
            eprintln!(
                "solved: {} samples, {} charts, {} + {} nodes, {:.2} s",
                stats.samples, stats.charts, stats.nodes_fwd, stats.nodes_bwd, stats.wall_time_s
            );
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!("no solution after {} iterations", stats.iterations);
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let problem = Problem::load(&args.problem).with_context(|| format!("loading {}", args.problem.display()))?;
    let mech = problem.mech();
    let (traj, n_q, n_u) =
        io::read_trajectory(&args.trajectory).with_context(|| format!("reading {}", args.trajectory.display()))?;
    if n_q != mech.n_q() || n_u != mech.n_u() {
        bail!(
            "trajectory has {n_q} coordinates and {n_u} actions, the mechanism needs {} and {}",
            mech.n_q(),
            mech.n_u()
        );
    }
    let kind = match args.integrator {
        IntegratorArg::AtlasTrap => IntegratorKind::AtlasTrap,
        IntegratorArg::Rk4Ode => IntegratorKind::Rk4Ode,
    };
    let atlas_params = problem.params.atlas_params(mech.d_c());
    let series = integrate_series(
        mech,
        &problem.world,
        atlas_params,
        &problem.integrator,
        kind,
        args.rk4_step,
        &traj,
    )?;
    create_dir(&args.out)?;
    write(args.out.join("series.tsv"), io::format_series(&series, n_q))?;
    if let Some(last) = series.last() {
        let max_res = series.iter().map(|p| p.residual).fold(0.0, f64::max);
        eprintln!(
            "t = {:.4} s, distance to goal {:.4e}, max residual {:.3e}",
            last.t,
            last.x.distance(&problem.goal),
            max_res
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let problem = load(&args.common)?;
    let seeds = parse_seeds(&args.seeds)?;
    let taus = if args.tau.is_empty() {
        vec![problem.mech().tau_max().first().copied().unwrap_or(0.0)]
    } else {
        args.tau.clone()
    };
    let jobs: Vec<(f64, u64)> = taus.iter().flat_map(|&t| seeds.iter().map(move |&s| (t, s))).collect();
    let parallel = !args.common.sequential;
    let results = par::map_collect(&jobs, parallel, |_, &(tau, seed)| {
        let mut p = with_tau(&problem, tau);
        p.params.seed = seed;
        run_planner(&p).map(|(stats, _)| stats)
    });

    let mut runs = String::from("tau_max\tseed\tsamples\tcharts\tnodes_fwd\tnodes_bwd\tsuccess\twall_time_s\n");
    let mut rows = Vec::new();
    for &tau in &taus {
        let mut stats = Vec::new();
        for (&(t, seed), r) in jobs.iter().zip(&results) {
            if t != tau {
                continue;
            }
            match r {
                Ok(s) => {
                    runs.push_str(&format!(
                        "{tau:?}\t{seed}\t{}\t{}\t{}\t{}\t{}\t{:.3}\n",
                        s.samples, s.charts, s.nodes_fwd, s.nodes_bwd, s.success, s.wall_time_s
                    ));
                    stats.push(s.clone());
                }
                Err(e) => {
                    runs.push_str(&format!("{tau:?}\t{seed}\terror: {e}\n"));
                    stats.push(RunStats::default());
                }
            }
        }
        rows.push(BenchRow::from_runs(tau, &stats));
    }
    let out = &args.common.out;
    create_dir(out)?;
    let table = io::format_bench(&rows);
    write(out.join("bench.tsv"), table.clone())?;
    write(out.join("runs.tsv"), runs)?;
    print!("{table}");
    if rows.iter().all(|r| r.solved == 0) {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

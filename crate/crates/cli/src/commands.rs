//! The three subcommands as library functions returning an exit status.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gridsmpc::simulation::{run_closed_loop, ClosedLoop};
use gridsmpc::smpc::pog_at;
use gridsmpc::Scenario;

use crate::artifacts::{self, Metrics};
use crate::bench::{run_bench, BenchOptions, MAX_SCALING_RATIO};
use crate::render;

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    /// Bad arguments, configuration or I/O.
    Config = 1,
    /// The simulation collided or could not plan.
    RunFailed = 2,
    /// Planning time grows too much with the number of vehicles.
    Regression = 3,
}

/// Seconds between rendered snapshots.
pub const SNAPSHOT_PERIOD: f64 = 1.0;

pub const BENCH_RUNS_CSV: &str = "bench_runs.csv";
pub const BENCH_TABLE_CSV: &str = "bench_table.csv";
pub const POG_TXT: &str = "pog.txt";
pub const BOG_TXT: &str = "bog.txt";
pub const HEATMAP_SVG: &str = "heatmap.svg";

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: String,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub noise: bool,
    pub render: bool,
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub tvs: Vec<usize>,
    pub out: PathBuf,
    pub options: BenchOptions,
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct GridDumpArgs {
    pub scenario: String,
    pub t: f64,
    pub h: usize,
    pub out: PathBuf,
    pub force: bool,
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            bail!("{} exists and is not a directory", dir.display());
        }
        let used = fs::read_dir(dir)?.next().is_some();
        if used && !force {
            bail!("{} is not empty; pass --force to overwrite", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load(name_or_path: &str) -> Result<Scenario> {
    Scenario::load(name_or_path).map_err(|e| anyhow::anyhow!("{name_or_path}: {e}"))
}

pub fn cmd_run(args: &RunArgs) -> Result<Exit> {
    let mut s = load(&args.scenario)?;
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    s.noise |= args.noise;
    prepare_output(&args.out, args.force)?;
    log::info!("running {} for {} s", s.name, s.duration);
    let log = run_closed_loop(&s)?;

    artifacts::write_trajectory(&args.out.join(artifacts::TRAJECTORY_CSV), log.tv_count, &artifacts::trajectory_rows(&log))?;
    artifacts::write_timings(&args.out.join(artifacts::TIMINGS_CSV), &log)?;
    artifacts::write_hulls(&args.out.join(artifacts::HULLS_CSV), &artifacts::hull_rows(&log))?;
    let metrics = Metrics::from_log(&s.name, s.seed, s.noise, &log)?;
    artifacts::write_json(&args.out.join(artifacts::METRICS_JSON), &metrics)?;

    if args.render {
        let dir = args.out.join("render");
        fs::create_dir_all(&dir)?;
        let every = ((SNAPSHOT_PERIOD / s.config.dt).round() as usize).max(1);
        for (k, rec) in log.records.iter().enumerate().step_by(every) {
            fs::write(dir.join(format!("step_{k:04}.svg")), render::snapshot_svg(&s.config, rec))?;
        }
        fs::write(args.out.join("overview.svg"), render::overview_svg(&s.config, &log.records))?;
    }

    for lc in &metrics.lane_changes {
        println!("lane change complete at t = {:.1} s: {:.2} m from tv{}", lc.t, lc.distance, lc.nearest_tv);
    }
    println!(
        "{}: {} steps, outcome {}, plan time {:.4} ± {:.4} s",
        s.name, metrics.steps, metrics.outcome["kind"].as_str().unwrap_or("?"), metrics.plan_time.mean_s, metrics.plan_time.std_s
    );
    Ok(if log.failed() { Exit::RunFailed } else { Exit::Success })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Exit> {
    let cfg = gridsmpc::PlannerConfig::itsc2020();
    // Validate before touching the output directory.
    if args.tvs.is_empty() || args.tvs.contains(&0) {
        bail!("--tvs needs vehicle counts of at least 1");
    }
    prepare_output(&args.out, args.force)?;
    let report = run_bench(&cfg, &args.tvs, &args.options)?;

    let mut w = csv::Writer::from_path(args.out.join(BENCH_RUNS_CSV))?;
    for r in &report.runs {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(args.out.join(BENCH_TABLE_CSV))?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;

    println!("{:>4} {:>6} {:>10} {:>12} {:>12}", "TVs", "runs", "iterations", "mean [s]", "std [s]");
    for r in &report.rows {
        println!("{:>4} {:>6} {:>10} {:>12.5} {:>12.5}", r.tvs, r.runs, r.iterations, r.mean_s, r.std_s);
    }
    match report.scaling_ratio() {
        Some(ratio) if ratio > MAX_SCALING_RATIO => {
            eprintln!("scaling regression: mean time ratio {ratio:.3} exceeds {MAX_SCALING_RATIO}");
            Ok(Exit::Regression)
        }
        Some(ratio) => {
            println!("mean time ratio largest/smallest count: {ratio:.3}");
            Ok(Exit::Success)
        }
        None => Ok(Exit::Success),
    }
}

pub fn cmd_grid_dump(args: &GridDumpArgs) -> Result<Exit> {
    let s = load(&args.scenario)?;
    if args.h > s.config.horizon {
        bail!("--h {} is beyond the prediction horizon {}", args.h, s.config.horizon);
    }
    if !(args.t >= 0.0) || args.t > s.duration {
        bail!("--t {} is outside the simulated interval [0, {}]", args.t, s.duration);
    }
    prepare_output(&args.out, args.force)?;
    let target = (args.t / s.config.dt).round() as usize;
    let mut sim = ClosedLoop::new(&s)?;
    while sim.step_index() < target {
        if !sim.step()? {
            bail!("the run ended at t = {:.1} s before reaching t = {}", sim.time(), args.t);
        }
    }
    let pog = pog_at(&s.config, sim.ev(), sim.agents(), sim.warm_start(), args.h)?;
    let bog = pog.to_bog(s.config.p_th);
    fs::write(args.out.join(POG_TXT), pog.to_text())?;
    fs::write(args.out.join(BOG_TXT), bog.to_text())?;
    fs::write(args.out.join(HEATMAP_SVG), render::heatmap_svg(&pog, &bog))?;
    println!("t = {:.1} s, h = {}: peak {:.4}, {} cells at or above p_th", sim.time(), args.h, pog.max_value(), bog.occupied_count());
    Ok(Exit::Success)
}

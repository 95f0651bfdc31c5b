//! Computational cost benchmark over randomized multi-vehicle scenarios.
//!
//! Protocol: the ego vehicle starts on a random lane with a random reference
//! lane. The first target vehicle is 40 m ahead and every further one another
//! 50 m ahead, each on a random lane. Each target vehicle gets one
//! probability drawn from [0.8, 1] for a randomly chosen maneuver (lane keep
//! or lane change); the other maneuver gets the complement, and the vehicle
//! actually drives the more likely one.

use anyhow::{bail, Result};
use gridsmpc::scenario::TvSpec;
use gridsmpc::simulation::{mean_std, run_closed_loop, SimLog};
use gridsmpc::tv::{ManeuverHypothesis, ManeuverKind};
use gridsmpc::{EvState, PlannerConfig, Scenario, TvState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const FIRST_GAP: f64 = 40.0;
pub const SPACING: f64 = 50.0;
pub const EV_SPEED: f64 = 26.0;
pub const TV_SPEED: f64 = 27.0;
/// Largest tolerated ratio between the mean planning time at the largest
/// and the smallest vehicle count.
pub const MAX_SCALING_RATIO: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub runs: usize,
    pub seed: u64,
    pub duration: f64,
    pub noise: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { runs: 10, seed: 0, duration: 20.0, noise: true }
    }
}

/// Seed of one run, derived from the base seed, vehicle count and run index.
pub fn run_seed(base: u64, tvs: usize, run: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((tvs as u64) << 32 | run as u64)
}

pub fn random_scenario(cfg: &PlannerConfig, tvs: usize, seed: u64, duration: f64, noise: bool) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ev_lane = rng.gen_range(0..cfg.lanes);
    let ev_target_lane = rng.gen_range(0..cfg.lanes);
    let ev_x = 0.0;
    let specs = (0..tvs)
        .map(|k| {
            let lane = rng.gen_range(0..cfg.lanes);
            let other = if lane == 0 { 1 } else { lane - 1 };
            let p: f64 = rng.gen_range(0.8..=1.0);
            let lk_likely = rng.gen_bool(0.5);
            let (p_lk, p_lc) = if lk_likely { (p, 1.0 - p) } else { (1.0 - p, p) };
            let hyp = |kind, probability, lane| ManeuverHypothesis { kind, probability, target_lane_center: cfg.lane_center(lane), cruise_speed: TV_SPEED };
            TvSpec {
                state: TvState::new(ev_x + FIRST_GAP + SPACING * k as f64, TV_SPEED, cfg.lane_center(lane), 0.0),
                hypotheses: vec![hyp(ManeuverKind::LaneKeep, p_lk, lane), hyp(ManeuverKind::LaneChange, p_lc, other)],
            }
        })
        .collect();
    Scenario {
        name: format!("bench_{tvs}tv_{seed:016x}"),
        config: cfg.clone(),
        ev_init: EvState::new(ev_x, cfg.lane_center(ev_lane), 0.0, EV_SPEED),
        ev_target_lane: Some(ev_target_lane),
        tvs: specs,
        duration,
        seed,
        noise,
    }
}

/// Deterministic description and outcome of one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub tvs: usize,
    pub run: usize,
    pub seed: u64,
    pub ev_lane: usize,
    pub ev_target_lane: usize,
    /// Lane of each target vehicle, `;`-separated.
    pub tv_lanes: String,
    /// Maneuver each target vehicle drives, `;`-separated.
    pub tv_maneuvers: String,
    pub iterations: usize,
    pub outcome: String,
    pub lane_changes: usize,
}

/// Planning time statistics for one vehicle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub tvs: usize,
    pub runs: usize,
    pub iterations: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub grid_mean_s: f64,
    pub hull_mean_s: f64,
    pub solve_mean_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub runs: Vec<BenchRun>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Mean planning time at the largest count over that at the smallest.
    pub fn scaling_ratio(&self) -> Option<f64> {
        let lo = self.rows.iter().min_by_key(|r| r.tvs)?;
        let hi = self.rows.iter().max_by_key(|r| r.tvs)?;
        (lo.tvs != hi.tvs && lo.mean_s > 0.0).then(|| hi.mean_s / lo.mean_s)
    }
}

fn outcome_kind(log: &SimLog) -> String {
    serde_json::to_value(&log.outcome).ok().and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(String::from)).unwrap_or_default()
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn run_bench(cfg: &PlannerConfig, counts: &[usize], opts: &BenchOptions) -> Result<BenchReport> {
    if counts.is_empty() {
        bail!("no vehicle counts given");
    }
    if let Some(c) = counts.iter().find(|&&c| c == 0) {
        bail!("vehicle count {c} is not allowed: the protocol needs at least one target vehicle");
    }
    if opts.runs == 0 {
        bail!("runs must be positive");
    }
    let mut report = BenchReport { runs: Vec::new(), rows: Vec::new() };
    for &n in counts {
        let mut timings = Vec::new();
        for run in 0..opts.runs {
            let seed = run_seed(opts.seed, n, run);
            let s = random_scenario(cfg, n, seed, opts.duration, opts.noise);
            let log = run_closed_loop(&s)?;
            log::info!("bench: {n} vehicles, run {run}: {} iterations, {}", log.records.len(), outcome_kind(&log));
            timings.extend(log.records.iter().map(|r| r.timings));
            report.runs.push(BenchRun {
                tvs: n,
                run,
                seed,
                ev_lane: cfg.lane_of(s.ev_init.y),
                ev_target_lane: s.ev_target_lane.unwrap_or(0),
                tv_lanes: join(s.tvs.iter().map(|t| cfg.lane_of(t.state.y))),
                tv_maneuvers: join(s.tvs.iter().map(|t| {
                    let best = gridsmpc::tv::most_likely(&t.hypotheses).expect("two hypotheses");
                    match best.kind {
                        ManeuverKind::LaneKeep => "lk",
                        ManeuverKind::LaneChange => "lc",
                    }
                })),
                iterations: log.records.len(),
                outcome: outcome_kind(&log),
                lane_changes: log.lane_changes.len(),
            });
        }
        let (mean_s, std_s) = mean_std(timings.iter().map(|t| t.total));
        report.rows.push(BenchRow {
            tvs: n,
            runs: opts.runs,
            iterations: timings.len(),
            mean_s,
            std_s,
            grid_mean_s: mean_std(timings.iter().map(|t| t.grid)).0,
            hull_mean_s: mean_std(timings.iter().map(|t| t.hull)).0,
            solve_mean_s: mean_std(timings.iter().map(|t| t.solve)).0,
        });
    }
    Ok(report)
}

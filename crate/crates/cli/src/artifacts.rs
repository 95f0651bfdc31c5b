//! CSV and JSON files written by the commands, plus readers for the CSVs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! CSV parses back to the exact values that were written.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gridsmpc::simulation::{mean_std, SimLog};
use gridsmpc::{EvInput, EvState, HullVertices, TvState};
use serde::{Deserialize, Serialize};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const HULLS_CSV: &str = "hulls.csv";
pub const METRICS_JSON: &str = "metrics.json";

/// One row of `trajectory.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub ev: EvState,
    pub input: EvInput,
    pub target_lane: f64,
    pub tvs: Vec<TvState>,
    pub slack_total: f64,
}

impl TrajectoryRow {
    fn header(tv_count: usize) -> Vec<String> {
        let mut h: Vec<String> = ["t", "x", "y", "psi", "v", "delta_f", "a", "target_lane"].map(String::from).to_vec();
        for k in 1..=tv_count {
            h.extend(["x", "vx", "y", "vy"].map(|f| format!("tv{k}_{f}")));
        }
        h.push("slack_total".into());
        h
    }

    fn fields(&self) -> Vec<f64> {
        let mut f = vec![self.t, self.ev.x, self.ev.y, self.ev.psi, self.ev.v, self.input.delta_f, self.input.a, self.target_lane];
        for tv in &self.tvs {
            f.extend([tv.x, tv.vx, tv.y, tv.vy]);
        }
        f.push(self.slack_total);
        f
    }
}

pub fn trajectory_rows(log: &SimLog) -> Vec<TrajectoryRow> {
    log.records
        .iter()
        .map(|r| TrajectoryRow { t: r.t, ev: r.ev, input: r.input, target_lane: r.target_lane, tvs: r.tvs.clone(), slack_total: r.slack_total })
        .collect()
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(values: &[f64]) -> Vec<String> {
    values.iter().map(f64::to_string).collect()
}

pub fn write_trajectory(path: &Path, tv_count: usize, rows: &[TrajectoryRow]) -> Result<()> {
    write_rows(path, &TrajectoryRow::header(tv_count), rows.iter().map(|r| fmt(&r.fields())))
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().with_context(|| format!("{}: row {}: bad number {v:?}", path.display(), n + 1)))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let (header, rows) = read_table(path)?;
    if header.len() < 9 || (header.len() - 9) % 4 != 0 {
        bail!("{}: unexpected trajectory header", path.display());
    }
    let tv_count = (header.len() - 9) / 4;
    if header != TrajectoryRow::header(tv_count) {
        bail!("{}: unexpected trajectory header", path.display());
    }
    Ok(rows
        .into_iter()
        .map(|f| TrajectoryRow {
            t: f[0],
            ev: EvState::new(f[1], f[2], f[3], f[4]),
            input: EvInput::new(f[5], f[6]),
            target_lane: f[7],
            tvs: (0..tv_count).map(|k| TvState::new(f[8 + 4 * k], f[9 + 4 * k], f[10 + 4 * k], f[11 + 4 * k])).collect(),
            slack_total: f[8 + 4 * tv_count],
        })
        .collect())
}

/// One row of `timings.csv`: wall-clock seconds per planning phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub t: f64,
    pub plan_time_total_s: f64,
    pub plan_time_grid_s: f64,
    pub plan_time_hull_s: f64,
    pub plan_time_solve_s: f64,
}

pub fn write_timings(path: &Path, log: &SimLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in &log.records {
        let tm = r.timings;
        w.serialize(TimingRow { t: r.t, plan_time_total_s: tm.total, plan_time_grid_s: tm.grid, plan_time_hull_s: tm.hull, plan_time_solve_s: tm.solve })?;
    }
    w.flush()?;
    Ok(())
}

/// One row of `hulls.csv`: the hull constraining prediction step `h` of
/// the plan made at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullRow {
    pub t: f64,
    pub h: usize,
    pub vertices: HullVertices,
}

fn hull_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "h".to_string()];
    for k in 1..=4 {
        h.push(format!("v{k}x"));
        h.push(format!("v{k}y"));
    }
    h
}

pub fn hull_rows(log: &SimLog) -> Vec<HullRow> {
    log.records
        .iter()
        .flat_map(|r| r.hulls.iter().enumerate().map(move |(k, v)| HullRow { t: r.t, h: k + 1, vertices: *v }))
        .collect()
}

pub fn write_hulls(path: &Path, rows: &[HullRow]) -> Result<()> {
    write_rows(
        path,
        &hull_header(),
        rows.iter().map(|r| {
            let mut f = vec![r.t.to_string(), r.h.to_string()];
            f.extend(r.vertices.points().iter().flat_map(|(x, y)| [x.to_string(), y.to_string()]));
            f
        }),
    )
}

pub fn read_hulls(path: &Path) -> Result<Vec<HullRow>> {
    let (header, rows) = read_table(path)?;
    if header != hull_header() {
        bail!("{}: unexpected hull header", path.display());
    }
    Ok(rows
        .into_iter()
        .map(|f| HullRow { t: f[0], h: f[1] as usize, vertices: HullVertices([(f[2], f[3]), (f[4], f[5]), (f[6], f[7]), (f[8], f[9])]) })
        .collect())
}

/// A completed lane change, measured against the closest target vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeMetric {
    pub t: f64,
    pub target_lane: f64,
    /// 1-based index of the target vehicle with the smallest `|dx|`.
    pub nearest_tv: usize,
    /// `|x_ev − x_tv|` for that vehicle, center to center.
    pub distance: f64,
    /// `x_ev − x_tv` per target vehicle.
    pub dx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTimeMetric {
    pub mean_s: f64,
    pub std_s: f64,
    pub grid_mean_s: f64,
    pub hull_mean_s: f64,
    pub solve_mean_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub noise: bool,
    pub steps: usize,
    pub simulated_s: f64,
    pub collision: bool,
    pub failed: bool,
    pub outcome: serde_json::Value,
    pub lane_changes: Vec<LaneChangeMetric>,
    pub plan_time: PlanTimeMetric,
    /// Steps whose plan reused a hull for at least one prediction step.
    pub steps_with_fallback: usize,
    pub max_slack: f64,
}

impl Metrics {
    pub fn from_log(scenario: &str, seed: u64, noise: bool, log: &SimLog) -> Result<Self> {
        let lane_changes = log
            .lane_changes
            .iter()
            .filter_map(|e| {
                let (k, d) = e.dx.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
                Some(LaneChangeMetric { t: e.t, target_lane: e.target_lane, nearest_tv: k + 1, distance: d.abs(), dx: e.dx.clone() })
            })
            .collect();
        let (mean_s, std_s) = log.plan_time_stats();
        let phase = |f: fn(&gridsmpc::smpc::PlanTimings) -> f64| mean_std(log.records.iter().map(|r| f(&r.timings))).0;
        Ok(Self {
            scenario: scenario.to_string(),
            seed,
            noise,
            steps: log.records.len(),
            simulated_s: log.records.last().map_or(0.0, |r| r.t),
            collision: log.collision(),
            failed: log.failed(),
            outcome: serde_json::to_value(&log.outcome)?,
            lane_changes,
            plan_time: PlanTimeMetric { mean_s, std_s, grid_mean_s: phase(|t| t.grid), hull_mean_s: phase(|t| t.hull), solve_mean_s: phase(|t| t.solve) },
            steps_with_fallback: log.records.iter().filter(|r| !r.fallback_hulls.is_empty()).count(),
            max_slack: log.records.iter().map(|r| r.slack_total).fold(0.0, f64::max),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

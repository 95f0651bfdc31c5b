//! Closed-loop highway simulation around the planner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::ev::{discrete_step, EvInput, EvState};
use crate::freespace::HullVertices;
use crate::scenario::Scenario;
use crate::smpc::{plan_step, shift_warm_start, PlanTimings, PlannerConfig, SolveStatus};
use crate::tv::{most_likely, ManeuverHypothesis, TvAgent, TvState};

/// A vehicle in the ego lane closer than this triggers a lane change.
pub const BLOCKING_DISTANCE: f64 = 20.0;
/// Lead over a passed vehicle before returning to its lane.
pub const RETURN_GAP: f64 = 15.0;

/// Two-rule reference-lane policy.
///
/// Rule 1: a vehicle ahead in the ego lane within [`BLOCKING_DISTANCE`]
/// sends the ego vehicle to the nearest lane with no vehicle within that
/// distance. Rule 2: once the ego vehicle leads a vehicle in another lane by
/// more than [`RETURN_GAP`], it targets that vehicle's lane. Rule 2 fires at
/// most once per vehicle, so the target then stays put until something new
/// happens. Rule 1 wins when both apply.
#[derive(Debug, Clone)]
pub struct LanePolicy {
    lanes: usize,
    lane_width: f64,
    target: f64,
    returned: Vec<bool>,
}

impl LanePolicy {
    pub fn new(cfg: &PlannerConfig, target: f64, tv_count: usize) -> Self {
        Self { lanes: cfg.lanes, lane_width: cfg.lane_width, target, returned: vec![false; tv_count] }
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    fn lane_of(&self, y: f64) -> usize {
        ((y / self.lane_width).floor().max(0.0) as usize).min(self.lanes - 1)
    }

    fn center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    pub fn update(&mut self, ev: &EvState, tvs: &[TvState]) -> f64 {
        if self.returned.len() < tvs.len() {
            self.returned.resize(tvs.len(), false);
        }
        let ev_lane = self.lane_of(ev.y);
        let blocked = tvs.iter().any(|t| {
            let dx = t.x - ev.x;
            self.lane_of(t.y) == ev_lane && dx > 0.0 && dx <= BLOCKING_DISTANCE
        });
        if blocked {
            let free = |lane: usize| !tvs.iter().any(|t| self.lane_of(t.y) == lane && (t.x - ev.x).abs() <= BLOCKING_DISTANCE);
            let mut candidates: Vec<usize> = (0..self.lanes).filter(|&l| l != ev_lane).collect();
            candidates.sort_by_key(|&l| (l as i64 - ev_lane as i64).abs());
            if let Some(lane) = candidates.into_iter().find(|&l| free(l)) {
                self.target = self.center(lane);
            }
            return self.target;
        }
        for (k, t) in tvs.iter().enumerate() {
            let lane = self.lane_of(t.y);
            if !self.returned[k] && lane != ev_lane && ev.x - t.x > RETURN_GAP {
                self.returned[k] = true;
                self.target = self.center(lane);
            }
        }
        self.target
    }
}

/// Separating-axis overlap test of the rotated ego rectangle and an
/// axis-aligned target rectangle. Touching edges do not count.
pub fn check_collision(ev: &EvState, ev_dims: (f64, f64), tv: &TvState, tv_dims: (f64, f64)) -> bool {
    let (c, s) = (ev.psi.cos(), ev.psi.sin());
    let (hl, hw) = (ev_dims.0 / 2.0, ev_dims.1 / 2.0);
    let (tl, tw) = (tv_dims.0 / 2.0, tv_dims.1 / 2.0);
    let d = (tv.x - ev.x, tv.y - ev.y);
    // Half extent of each rectangle along an axis plus the center distance.
    let separated = |ax: (f64, f64)| {
        let ev_r = hl * (c * ax.0 + s * ax.1).abs() + hw * (-s * ax.0 + c * ax.1).abs();
        let tv_r = tl * ax.0.abs() + tw * ax.1.abs();
        (d.0 * ax.0 + d.1 * ax.1).abs() >= ev_r + tv_r
    };
    ![(1.0, 0.0), (0.0, 1.0), (c, s), (-s, c)].into_iter().any(separated)
}

/// True iff all four ego corners lie inside lane `[lo, hi]`.
pub fn footprint_in_lane(ev: &EvState, length: f64, width: f64, lo: f64, hi: f64) -> bool {
    [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().all(|(f, l)| {
        let (_, y) = ev.body_point(f * length / 2.0, l * width / 2.0);
        y >= lo && y <= hi
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub ev: EvState,
    pub input: EvInput,
    pub tvs: Vec<TvState>,
    pub target_lane: f64,
    pub timings: PlanTimings,
    pub slack_total: f64,
    pub status: SolveStatus,
    pub fallback_hulls: Vec<usize>,
    pub hulls: Vec<HullVertices>,
}

/// First step at which the ego footprint lies fully in a new target lane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaneChangeEvent {
    pub step: usize,
    pub t: f64,
    pub target_lane: f64,
    /// `x_ev − x_tv` per target vehicle.
    pub dx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Collision { t: f64, tv: usize },
    PlanningFailed { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimLog {
    pub dt: f64,
    pub tv_count: usize,
    pub records: Vec<StepRecord>,
    pub lane_changes: Vec<LaneChangeEvent>,
    pub outcome: Outcome,
}

impl SimLog {
    pub fn failed(&self) -> bool {
        self.outcome != Outcome::Completed
    }

    pub fn collision(&self) -> bool {
        matches!(self.outcome, Outcome::Collision { .. })
    }

    /// Mean and population standard deviation of the total planning time.
    pub fn plan_time_stats(&self) -> (f64, f64) {
        mean_std(self.records.iter().map(|r| r.timings.total))
    }
}

pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Number of logged steps for a duration: `floor(duration / dt) + 1`.
pub fn step_count(duration: f64, dt: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize + 1
}

/// Closed loop advanced one step at a time.
///
/// Each step checks for a collision, records lane-change completion,
/// updates the lane policy, plans, logs, and then moves every vehicle.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    cfg: PlannerConfig,
    noise: bool,
    agents: Vec<TvAgent>,
    truth: Vec<ManeuverHypothesis>,
    rng: ChaCha8Rng,
    ev: EvState,
    policy: LanePolicy,
    pending: bool,
    warm: Option<Vec<EvInput>>,
    k: usize,
    steps: usize,
    finished: bool,
    log: SimLog,
}

impl ClosedLoop {
    pub fn new(s: &Scenario) -> Result<Self> {
        s.validate()?;
        let agents = s.agents()?;
        let truth = s.tvs.iter().map(|t| *most_likely(&t.hypotheses).expect("validated")).collect();
        let steps = step_count(s.duration, s.config.dt);
        Ok(Self {
            cfg: s.config.clone(),
            noise: s.noise,
            policy: LanePolicy::new(&s.config, s.initial_target(), agents.len()),
            log: SimLog { dt: s.config.dt, tv_count: agents.len(), records: Vec::with_capacity(steps), lane_changes: Vec::new(), outcome: Outcome::Completed },
            agents,
            truth,
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            ev: s.ev_init,
            pending: false,
            warm: None,
            k: 0,
            steps,
            finished: false,
        })
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn ev(&self) -> &EvState {
        &self.ev
    }

    pub fn agents(&self) -> &[TvAgent] {
        &self.agents
    }

    /// Shifted inputs of the last plan, used as the next warm start.
    pub fn warm_start(&self) -> Option<&[EvInput]> {
        self.warm.as_deref()
    }

    pub fn log(&self) -> &SimLog {
        &self.log
    }

    /// Runs one step; returns false once the run has ended.
    pub fn step(&mut self) -> Result<bool> {
        if self.finished || self.k >= self.steps {
            self.finished = true;
            return Ok(false);
        }
        let cfg = &self.cfg;
        let t = self.time();
        let ev_dims = (cfg.vehicle.length, cfg.vehicle.width);
        let tv_dims = (cfg.tv_length, cfg.tv_width);
        let tv_states: Vec<TvState> = self.agents.iter().map(|a| a.state).collect();
        if let Some(i) = tv_states.iter().position(|tv| check_collision(&self.ev, ev_dims, tv, tv_dims)) {
            self.log.outcome = Outcome::Collision { t, tv: i };
            self.finished = true;
            return Ok(false);
        }

        let ev = self.ev;
        if self.pending {
            let lane = cfg.lane_of(self.policy.target());
            let (lo, hi) = (lane as f64 * cfg.lane_width, (lane + 1) as f64 * cfg.lane_width);
            if footprint_in_lane(&ev, ev_dims.0, ev_dims.1, lo, hi) {
                self.pending = false;
                let dx = tv_states.iter().map(|tv| ev.x - tv.x).collect();
                self.log.lane_changes.push(LaneChangeEvent { step: self.k, t, target_lane: self.policy.target(), dx });
            }
        }
        let before = self.policy.target();
        let target = self.policy.update(&ev, &tv_states);
        if target != before {
            self.pending = true;
        }

        let plan = match plan_step(cfg, &ev, &self.agents, target, self.warm.as_deref()) {
            Ok(p) => p,
            Err(e) => {
                self.log.outcome = Outcome::PlanningFailed { t, reason: e.to_string() };
                self.finished = true;
                return Ok(false);
            }
        };
        let input = plan.inputs[0];
        self.log.records.push(StepRecord {
            t,
            ev,
            input,
            tvs: tv_states,
            target_lane: target,
            timings: plan.timings,
            slack_total: plan.slack_total,
            status: plan.status,
            fallback_hulls: plan.fallback_hulls.clone(),
            hulls: plan.hull_vertices,
        });

        self.ev = discrete_step(&cfg.vehicle, &ev, &input, cfg.dt)?;
        for (a, hyp) in self.agents.iter_mut().zip(&self.truth) {
            a.state = a.model.truth_step(&a.state, hyp, self.noise, &mut self.rng);
        }
        self.warm = Some(shift_warm_start(&plan.inputs));
        self.k += 1;
        Ok(true)
    }

    pub fn into_log(self) -> SimLog {
        self.log
    }
}

pub fn run_closed_loop(s: &Scenario) -> Result<SimLog> {
    let mut sim = ClosedLoop::new(s)?;
    while sim.step()? {}
    Ok(sim.into_log())
}

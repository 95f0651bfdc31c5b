//! Scenario files (TOML, schema 1).
//!
//! ```toml
//! schema = 1
//! name = "overtake_2tv"
//! preset = "itsc2020"
//! duration = 40.0
//! seed = 0
//! noise = false
//!
//! [road]
//! lanes = 2
//! lane_width = 3.5
//!
//! [ev]
//! state = [10.0, 5.25, 0.0, 26.0]      # x, y, psi, v
//! # target_lane = 0                    # initial reference lane, default: current
//!
//! [[tv]]
//! state = [40.0, 27.0, 5.25, 0.0]      # x, vx, y, vy
//! hypotheses = [
//!     { kind = "lane_keep", probability = 0.8, lane = 1 },
//!     { kind = "lane_change", probability = 0.2, lane = 0 },
//! ]
//!
//! [planner]                            # optional preset overrides
//! p_th = 0.15
//! ```
//!
//! Lanes are counted from the right road edge starting at 0. A hypothesis
//! keeps the vehicle's initial longitudinal speed unless `cruise_speed` is
//! given.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ev::EvState;
use crate::smpc::PlannerConfig;
use crate::tv::{validate_hypotheses, ManeuverHypothesis, ManeuverKind, TvAgent, TvState};

pub const SCHEMA_VERSION: u32 = 1;

const BUILTIN: &[(&str, &str)] = &[
    ("overtake_2tv", include_str!("../../../scenarios/overtake_2tv.toml")),
    ("empty_road", include_str!("../../../scenarios/empty_road.toml")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TvSpec {
    pub state: TvState,
    pub hypotheses: Vec<ManeuverHypothesis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: PlannerConfig,
    pub ev_init: EvState,
    /// Initial reference lane; the lane holding the ego vehicle if unset.
    pub ev_target_lane: Option<usize>,
    pub tvs: Vec<TvSpec>,
    pub duration: f64,
    pub seed: u64,
    pub noise: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRoot {
    schema: u32,
    name: Option<String>,
    preset: Option<String>,
    duration: Option<f64>,
    seed: Option<u64>,
    noise: Option<bool>,
    road: Option<FileRoad>,
    ev: FileEv,
    #[serde(default)]
    tv: Vec<FileTv>,
    planner: Option<PlannerConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRoad {
    lanes: Option<usize>,
    lane_width: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEv {
    state: [f64; 4],
    target_lane: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTv {
    state: [f64; 4],
    hypotheses: Vec<FileHypothesis>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileHypothesis {
    kind: ManeuverKind,
    probability: f64,
    lane: usize,
    cruise_speed: Option<f64>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let root: FileRoot = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if root.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema {}, expected {SCHEMA_VERSION}", root.schema)));
        }
        match root.preset.as_deref() {
            None | Some("itsc2020") => {}
            Some(other) => return Err(Error::Config(format!("unknown preset {other:?}"))),
        }
        let mut config = root.planner.unwrap_or_default();
        if let Some(road) = root.road {
            config.lanes = road.lanes.unwrap_or(config.lanes);
            config.lane_width = road.lane_width.unwrap_or(config.lane_width);
        }
        let [x, y, psi, v] = root.ev.state;
        let mut tvs = Vec::with_capacity(root.tv.len());
        for (k, tv) in root.tv.iter().enumerate() {
            let state = TvState::new(tv.state[0], tv.state[1], tv.state[2], tv.state[3]);
            let mut hypotheses = Vec::with_capacity(tv.hypotheses.len());
            for h in &tv.hypotheses {
                if h.lane >= config.lanes {
                    return Err(Error::Config(format!("tv[{k}]: lane {} does not exist on a {}-lane road", h.lane, config.lanes)));
                }
                hypotheses.push(ManeuverHypothesis {
                    kind: h.kind,
                    probability: h.probability,
                    target_lane_center: config.lane_center(h.lane),
                    cruise_speed: h.cruise_speed.unwrap_or(state.vx),
                });
            }
            tvs.push(TvSpec { state, hypotheses });
        }
        let s = Self {
            name: root.name.unwrap_or_else(|| "unnamed".into()),
            config,
            ev_init: EvState::new(x, y, psi, v),
            ev_target_lane: root.ev.target_lane,
            tvs,
            duration: root.duration.unwrap_or(30.0),
            seed: root.seed.unwrap_or(0),
            noise: root.noise.unwrap_or(false),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Scenarios shipped with the crate, by name.
    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml_str(text).expect("bundled scenario parses"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    /// A file path if it exists, otherwise a bundled scenario name.
    pub fn load(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::from_path(path);
        }
        Self::builtin(name_or_path).ok_or_else(|| Error::Config(format!("{name_or_path}: no such file or bundled scenario")))
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::Config("duration must be positive".into()));
        }
        let ev = &self.ev_init;
        if ![ev.x, ev.y, ev.psi, ev.v].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("ev state must be finite".into()));
        }
        if !(ev.y >= 0.0 && ev.y <= self.config.road_width()) {
            return Err(Error::Config(format!("ev y = {} lies outside the road", ev.y)));
        }
        if let Some(lane) = self.ev_target_lane.filter(|&l| l >= self.config.lanes) {
            return Err(Error::Config(format!("ev target_lane {lane} does not exist on a {}-lane road", self.config.lanes)));
        }
        for (k, tv) in self.tvs.iter().enumerate() {
            if ![tv.state.x, tv.state.vx, tv.state.y, tv.state.vy].iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("tv[{k}]: state must be finite")));
            }
            validate_hypotheses(&tv.hypotheses).map_err(|e| Error::Config(format!("tv[{k}]: {e}")))?;
        }
        Ok(())
    }

    pub fn agents(&self) -> Result<Vec<TvAgent>> {
        let model = self.config.tv_model()?;
        Ok(self
            .tvs
            .iter()
            .map(|t| TvAgent { state: t.state, model: model.clone(), hypotheses: t.hypotheses.clone() })
            .collect())
    }

    /// Center of the initial reference lane.
    pub fn initial_target(&self) -> f64 {
        let lane = self.ev_target_lane.unwrap_or_else(|| self.config.lane_of(self.ev_init.y));
        self.config.lane_center(lane)
    }
}

use nalgebra::{Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ev::EvParams;
use crate::freespace::RangeColumn;
use crate::tv::TvModel;

/// Everything the planner needs besides the current traffic situation.
/// Missing keys in a serialized config fall back to [`PlannerConfig::itsc2020`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Prediction horizon `N` in steps.
    pub horizon: usize,
    pub dt: f64,
    pub q: [[f64; 4]; 4],
    pub r: [[f64; 2]; 2],
    /// Terminal weight.
    pub s: [[f64; 4]; 4],
    pub p_th: f64,
    pub v_ref: f64,
    pub y_bounds: (f64, f64),
    pub delta_bounds: (f64, f64),
    pub a_bounds: (f64, f64),
    /// Penalty per meter of hull or bound violation.
    pub slack_weight: f64,
    pub solver_tol: f64,
    pub max_iters: usize,
    pub lanes: usize,
    pub lane_width: f64,
    pub cell_x: f64,
    pub cell_y: f64,
    /// Grid extent behind and ahead of the ego vehicle.
    pub grid_behind: f64,
    pub detection_range: f64,
    pub range_column: RangeColumn,
    pub hull_fallback: HullFallback,
    pub vehicle: EvParams,
    pub tv_length: f64,
    pub tv_width: f64,
    /// `[k12, k21, k22]`.
    pub tv_gains: [f64; 3],
    pub tv_disturbance: [f64; 4],
    pub tv_sigma_w: [f64; 4],
}

/// What a prediction step without a hull of its own reuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullFallback {
    /// The previous step's hull, unchanged in world coordinates.
    Fixed,
    /// The previous step's hull moved along x with the ego guess, keeping
    /// its position relative to the vehicle.
    #[default]
    Shifted,
}

fn diag4(d: [f64; 4]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for k in 0..4 {
        m[k][k] = d[k];
    }
    m
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self::itsc2020()
    }
}

impl PlannerConfig {
    pub fn itsc2020() -> Self {
        let q = diag4([0.0, 2.0, 0.5, 0.1]);
        Self {
            horizon: 20,
            dt: 0.2,
            q,
            r: [[0.1, 0.0], [0.0, 1.0]],
            s: q,
            p_th: 0.15,
            v_ref: 30.0,
            y_bounds: (1.0, 6.0),
            delta_bounds: (-3f64.to_radians(), 3f64.to_radians()),
            a_bounds: (-5.0, 5.0),
            slack_weight: 1e5,
            solver_tol: 1e-6,
            max_iters: 30,
            lanes: 2,
            lane_width: 3.5,
            cell_x: 0.5,
            cell_y: 0.25,
            grid_behind: 10.0,
            detection_range: 100.0,
            range_column: RangeColumn::Last,
            hull_fallback: HullFallback::Shifted,
            vehicle: EvParams::default(),
            tv_length: 6.0,
            tv_width: 2.0,
            tv_gains: [-1.0, -0.8, -2.2],
            tv_disturbance: [0.05, 0.067, 0.013, 0.03],
            tv_sigma_w: [1.0; 4],
        }
    }

    pub fn q_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.q[r][c])
    }

    pub fn s_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.s[r][c])
    }

    pub fn r_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_fn(|r, c| self.r[r][c])
    }

    pub fn road_width(&self) -> f64 {
        self.lanes as f64 * self.lane_width
    }

    /// Center of lane `k`, counted from the right road edge.
    pub fn lane_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.lane_width
    }

    /// Lane holding lateral position `y`, clamped to the road.
    pub fn lane_of(&self, y: f64) -> usize {
        ((y / self.lane_width).floor().max(0.0) as usize).min(self.lanes.saturating_sub(1))
    }

    pub fn tv_model(&self) -> Result<TvModel> {
        TvModel::new(self.dt, self.tv_gains, self.tv_disturbance, Matrix4::from_diagonal(&self.tv_sigma_w.into()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least one step");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        let psd = |m: Matrix4<f64>| (m - m.transpose()).amax() <= 1e-12 && m.symmetric_eigenvalues().min() >= -1e-12;
        if !psd(self.q_matrix()) || !psd(self.s_matrix()) {
            return bad("q and s must be symmetric positive semidefinite");
        }
        let r = self.r_matrix();
        if (r - r.transpose()).amax() > 1e-12 || !(r.symmetric_eigenvalues().min() > 0.0) {
            return bad("r must be symmetric positive definite");
        }
        for (name, (lo, hi)) in [("y_bounds", self.y_bounds), ("delta_bounds", self.delta_bounds), ("a_bounds", self.a_bounds)] {
            if !(lo < hi) {
                return Err(Error::Config(format!("{name}: lower bound must be below upper bound")));
            }
        }
        if self.delta_bounds.0 <= -std::f64::consts::FRAC_PI_2 || self.delta_bounds.1 >= std::f64::consts::FRAC_PI_2 {
            return bad("steering bounds must stay inside (-pi/2, pi/2)");
        }
        if !(self.p_th > 0.0) {
            return bad("p_th must be positive");
        }
        if !(self.slack_weight > 0.0) || !(self.solver_tol > 0.0) || self.max_iters == 0 {
            return bad("slack_weight and solver_tol must be positive, max_iters at least 1");
        }
        if self.lanes == 0 || !(self.lane_width > 0.0) {
            return bad("road needs at least one lane of positive width");
        }
        if !(self.cell_x > 0.0 && self.cell_y > 0.0) {
            return bad("cell dimensions must be positive");
        }
        if !(self.grid_behind >= 0.0) || !(self.detection_range > 0.0) {
            return bad("grid extent must be positive");
        }
        if !(self.tv_length > 0.0 && self.tv_width > 0.0) {
            return bad("target vehicle dimensions must be positive");
        }
        self.vehicle.validate()?;
        self.tv_model()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let c = PlannerConfig::itsc2020();
        c.validate().unwrap();
        assert_eq!(c.q_matrix(), Matrix4::from_diagonal(&[0.0, 2.0, 0.5, 0.1].into()));
        assert_eq!(c.s, c.q);
        assert_eq!((c.lane_center(0), c.lane_center(1)), (1.75, 5.25));
        assert_eq!((c.lane_of(1.75), c.lane_of(3.5), c.lane_of(9.0)), (0, 1, 1));
        assert!((c.delta_bounds.1 - 0.0523599).abs() < 1e-6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = PlannerConfig::itsc2020();
        c.r = [[0.0, 0.0], [0.0, 1.0]];
        assert!(c.validate().is_err());
        let mut c = PlannerConfig::itsc2020();
        c.y_bounds = (6.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = PlannerConfig::itsc2020();
        c.horizon = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_toml_uses_preset() {
        let c: PlannerConfig = toml::from_str("p_th = 0.3\nhorizon = 10").unwrap();
        assert_eq!(c.p_th, 0.3);
        assert_eq!(c.horizon, 10);
        assert_eq!(c.v_ref, 30.0);
        assert!(toml::from_str::<PlannerConfig>("bogus = 1").is_err());
    }
}

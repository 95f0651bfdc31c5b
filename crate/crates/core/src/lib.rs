//! Grid-based stochastic model predictive control for highway driving.
//!
//! Surrounding vehicles are predicted with a linear point-mass model, their
//! uncertain positions are rasterized into probabilistic occupancy grids,
//! thresholded into binary grids, and turned into one convex admissible
//! polygon per prediction step. A nonlinear single-shooting optimal control
//! problem then plans the ego vehicle's inputs inside those polygons.

// `!(a > b)` is how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clock;
pub mod error;
pub mod ev;
pub mod freespace;
pub mod grid;
pub mod pog;
pub mod scenario;
pub mod simulation;
pub mod smpc;
pub mod tv;

pub use error::{Error, Result};
pub use ev::{EvInput, EvParams, EvState};
pub use freespace::{HullVertices, Polytope};
pub use grid::{CellIndex, GridSpec};
pub use pog::{Bog, Pog};
pub use scenario::Scenario;
pub use simulation::SimLog;
pub use smpc::{PlanResult, PlannerConfig, SolveStatus};
pub use tv::{ManeuverHypothesis, ManeuverKind, TvAgent, TvModel, TvState};

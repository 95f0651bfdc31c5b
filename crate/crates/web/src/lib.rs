//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export takes a scenario (bundled name or TOML text) and returns a
//! JSON string. The plain functions in [`api`] do the work and are what the
//! native tests call.

// `!(a > b)` is how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use wasm_bindgen::prelude::*;

pub mod api;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Occupancy the planner sees at time `t` for prediction step `h`.
#[wasm_bindgen]
pub fn grid_snapshot(scenario: &str, t: f64, h: usize) -> Result<String, JsError> {
    js(api::grid_snapshot(scenario, t, h))
}

/// Safe-space hull on that grid for an ego pose picked on the page.
#[wasm_bindgen]
pub fn hull_for_pose(scenario: &str, t: f64, h: usize, x: f64, y: f64, psi: f64) -> Result<String, JsError> {
    js(api::hull_for_pose(scenario, t, h, x, y, psi))
}

/// Full closed-loop run.
#[wasm_bindgen]
pub fn simulate(scenario: &str, seed: u64, noise: bool) -> Result<String, JsError> {
    js(api::simulate(scenario, seed, noise))
}

#[wasm_bindgen]
pub fn bundled_scenarios() -> String {
    serde_json::to_string(&gridsmpc::Scenario::builtin_names().collect::<Vec<_>>()).expect("names serialize")
}

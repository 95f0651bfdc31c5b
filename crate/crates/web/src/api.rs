use gridsmpc::freespace::admissible_safe_space;
use gridsmpc::simulation::{run_closed_loop, ClosedLoop};
use gridsmpc::smpc::pog_at;
use gridsmpc::{Bog, EvState, Pog, Scenario};
use serde_json::{json, Value};

type Result<T> = std::result::Result<T, String>;

/// A bundled scenario name, or else TOML text.
pub fn scenario(source: &str) -> Result<Scenario> {
    match Scenario::builtin(source.trim()) {
        Some(s) => Ok(s),
        None => Scenario::from_toml_str(source).map_err(|e| e.to_string()),
    }
}

/// Steps the closed loop to `t` and fuses the target vehicle fields for step `h`.
fn grids_at(s: &Scenario, t: f64, h: usize) -> Result<(Pog, Bog, EvState)> {
    if !(t >= 0.0) || t > s.duration {
        return Err(format!("t = {t} lies outside [0, {}]", s.duration));
    }
    let target = (t / s.config.dt).round() as usize;
    let mut sim = ClosedLoop::new(s).map_err(|e| e.to_string())?;
    while sim.step_index() < target {
        if !sim.step().map_err(|e| e.to_string())? {
            return Err(format!("the run ended at t = {:.1} s", sim.time()));
        }
    }
    let pog = pog_at(&s.config, sim.ev(), sim.agents(), sim.warm_start(), h).map_err(|e| e.to_string())?;
    let bog = pog.to_bog(s.config.p_th);
    Ok((pog, bog, *sim.ev()))
}

fn grid_json(pog: &Pog, bog: &Bog) -> Value {
    let g = pog.spec();
    json!({
        "origin_x": g.origin_x,
        "origin_y": g.origin_y,
        "cx": g.cx,
        "cy": g.cy,
        "nx": g.nx,
        "ny": g.ny,
        // Flat index i · ny + j.
        "values": pog.values(),
        "occupied": (0..g.len()).map(|k| bog.occupied(gridsmpc::CellIndex::new(k / g.ny, k % g.ny))).collect::<Vec<_>>(),
    })
}

pub fn grid_snapshot(source: &str, t: f64, h: usize) -> Result<String> {
    let s = scenario(source)?;
    let (pog, bog, ev) = grids_at(&s, t, h)?;
    let v = &s.config.vehicle;
    Ok(json!({
        "grid": grid_json(&pog, &bog),
        "ev": [ev.x, ev.y, ev.psi, ev.v],
        "vehicle": [v.length, v.width],
        "lane_width": s.config.lane_width,
        "p_th": s.config.p_th,
    })
    .to_string())
}

pub fn hull_for_pose(source: &str, t: f64, h: usize, x: f64, y: f64, psi: f64) -> Result<String> {
    let s = scenario(source)?;
    let (_, bog, ev) = grids_at(&s, t, h)?;
    let pose = EvState::new(x, y, psi, ev.v);
    let v = &s.config.vehicle;
    let hull = admissible_safe_space(&bog, &pose, v.length, v.width).map_err(|e| e.to_string())?;
    Ok(json!({ "vertices": hull.points() }).to_string())
}

pub fn simulate(source: &str, seed: u64, noise: bool) -> Result<String> {
    let mut s = scenario(source)?;
    s.seed = seed;
    s.noise = noise;
    let log = run_closed_loop(&s).map_err(|e| e.to_string())?;
    let steps: Vec<Value> = log
        .records
        .iter()
        .map(|r| {
            json!({
                "t": r.t,
                "ev": [r.ev.x, r.ev.y, r.ev.psi, r.ev.v],
                "tvs": r.tvs.iter().map(|tv| [tv.x, tv.y]).collect::<Vec<_>>(),
                "hull": r.hulls.first().map(|h| h.points().to_vec()),
            })
        })
        .collect();
    let changes: Vec<Value> = log.lane_changes.iter().map(|e| json!({ "t": e.t, "dx": e.dx })).collect();
    Ok(json!({
        "outcome": format!("{:?}", log.outcome),
        "road_width": s.config.road_width(),
        "lane_width": s.config.lane_width,
        "vehicle": [s.config.vehicle.length, s.config.vehicle.width],
        "steps": steps,
        "lane_changes": changes,
    })
    .to_string())
}

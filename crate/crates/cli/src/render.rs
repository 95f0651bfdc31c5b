//! Static SVG drawings: top-down snapshots, a whole-run overview and
//! occupancy heatmaps.

use std::fmt::Write;

use gridsmpc::simulation::StepRecord;
use gridsmpc::{Bog, CellIndex, PlannerConfig, Pog};

/// Meters behind and ahead of the ego vehicle shown in a snapshot.
const VIEW_BEHIND: f64 = 25.0;
const VIEW_AHEAD: f64 = 115.0;
const SCALE: f64 = 8.0;
const MARGIN: f64 = 12.0;

const EV_FILL: &str = "#d62728";
const TV_FILL: &str = "#1f77b4";
const HULL_STROKE: &str = "#2ca02c";

struct Frame {
    x0: f64,
    road_width: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * self.sx
    }

    /// Road `y` grows to the left, so it points up on screen.
    fn py(&self, y: f64) -> f64 {
        MARGIN + (self.road_width - y) * self.sy
    }

    fn points(&self, pts: impl Iterator<Item = (f64, f64)>) -> String {
        pts.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect::<Vec<_>>().join(" ")
    }
}

fn road(out: &mut String, f: &Frame, cfg: &PlannerConfig, length: f64) {
    let w = length * f.sx;
    let _ = writeln!(out, r##"<rect x="{MARGIN}" y="{MARGIN}" width="{w:.1}" height="{:.1}" fill="#e8e8e8"/>"##, f.road_width * f.sy);
    for k in 1..cfg.lanes {
        let y = f.py(k as f64 * cfg.lane_width);
        let _ = writeln!(out, r##"<line x1="{MARGIN}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ffffff" stroke-width="2" stroke-dasharray="12 10"/>"##, MARGIN + w);
    }
}

fn rect(out: &mut String, f: &Frame, corners: [(f64, f64); 4], fill: &str) {
    let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" stroke="black" stroke-width="1"/>"#, f.points(corners.into_iter()));
}

/// Top-down view around the ego vehicle at one logged step: road, vehicles,
/// and the hulls of that step's plan (step 1 drawn solid).
pub fn snapshot_svg(cfg: &PlannerConfig, rec: &StepRecord) -> String {
    let road_width = cfg.road_width();
    let f = Frame { x0: rec.ev.x - VIEW_BEHIND, road_width, sx: SCALE, sy: SCALE * 2.0 };
    let length = VIEW_BEHIND + VIEW_AHEAD;
    let (w, h) = (length * f.sx + 2.0 * MARGIN, road_width * f.sy + 2.0 * MARGIN + 16.0);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(out, r#"<clipPath id="view"><rect x="{MARGIN}" y="{MARGIN}" width="{:.1}" height="{:.1}"/></clipPath>"#, length * f.sx, road_width * f.sy);
    road(&mut out, &f, cfg, length);
    out.push_str("<g clip-path=\"url(#view)\">\n");
    for (k, hull) in rec.hulls.iter().enumerate().rev() {
        let (width, opacity) = if k == 0 { (2.0, 1.0) } else { (1.0, 0.25) };
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="none" stroke="{HULL_STROKE}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#,
            f.points(hull.points().iter().copied())
        );
    }
    let (tl, tw) = (cfg.tv_length / 2.0, cfg.tv_width / 2.0);
    for tv in &rec.tvs {
        rect(&mut out, &f, [(tv.x - tl, tv.y - tw), (tv.x + tl, tv.y - tw), (tv.x + tl, tv.y + tw), (tv.x - tl, tv.y + tw)], TV_FILL);
    }
    let (el, ew) = (cfg.vehicle.length / 2.0, cfg.vehicle.width / 2.0);
    let ev = rec.ev;
    rect(&mut out, &f, [ev.body_point(-el, -ew), ev.body_point(el, -ew), ev.body_point(el, ew), ev.body_point(-el, ew)], EV_FILL);
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}" font-family="monospace" font-size="12">t = {:.1} s   v = {:.2} m/s   target lane y = {:.2} m</text>"#,
        h - 4.0,
        rec.t,
        ev.v,
        rec.target_lane
    );
    out.push_str("</svg>\n");
    out
}

/// Whole-run paths of every vehicle on a horizontally compressed road.
pub fn overview_svg(cfg: &PlannerConfig, records: &[StepRecord]) -> String {
    let road_width = cfg.road_width();
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return String::from("<svg xmlns=\"http://www.w3.org/2000/svg\"/>\n");
    };
    let xs = records.iter().flat_map(|r| std::iter::once(r.ev.x).chain(r.tvs.iter().map(|t| t.x)));
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x0, length) = (lo - 10.0, hi - lo + 20.0);
    let f = Frame { x0, road_width, sx: 1200.0 / length, sy: 12.0 };
    let (w, h) = (1200.0 + 2.0 * MARGIN, road_width * f.sy + 2.0 * MARGIN + 16.0);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    road(&mut out, &f, cfg, length);
    for k in 0..first.tvs.len() {
        let pts = f.points(records.iter().map(|r| (r.tvs[k].x, r.tvs[k].y)));
        let _ = writeln!(out, r#"<polyline points="{pts}" fill="none" stroke="{TV_FILL}" stroke-width="2"/>"#);
    }
    let pts = f.points(records.iter().map(|r| (r.ev.x, r.ev.y)));
    let _ = writeln!(out, r#"<polyline points="{pts}" fill="none" stroke="{EV_FILL}" stroke-width="2"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}" font-family="monospace" font-size="12">t = {:.1} .. {:.1} s, ego in red</text>"#,
        h - 4.0,
        first.t,
        last.t
    );
    out.push_str("</svg>\n");
    out
}

/// Heatmap of an occupancy field; cells above the threshold are outlined.
pub fn heatmap_svg(pog: &Pog, bog: &Bog) -> String {
    let spec = *pog.spec();
    let (cw, ch) = (4.0, 8.0);
    let (w, h) = (spec.nx as f64 * cw + 2.0 * MARGIN, spec.ny as f64 * ch + 2.0 * MARGIN);
    let peak = pog.max_value();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(out, r##"<rect x="{MARGIN}" y="{MARGIN}" width="{:.0}" height="{:.0}" fill="#ffffff" stroke="#999999"/>"##, w - 2.0 * MARGIN, h - 2.0 * MARGIN);
    for i in 0..spec.nx {
        for j in 0..spec.ny {
            let c = CellIndex::new(i, j);
            let v = pog.get(c);
            let occupied = bog.occupied(c);
            if v <= 0.0 && !occupied {
                continue;
            }
            let alpha = if peak > 0.0 { (v / peak).clamp(0.0, 1.0) } else { 0.0 };
            let x = MARGIN + i as f64 * cw;
            let y = MARGIN + (spec.ny - 1 - j) as f64 * ch;
            let stroke = if occupied { r#" stroke="black" stroke-width="0.5""# } else { "" };
            let _ = writeln!(out, r#"<rect x="{x:.1}" y="{y:.1}" width="{cw}" height="{ch}" fill="{EV_FILL}" fill-opacity="{alpha:.4}"{stroke}/>"#);
        }
    }
    out.push_str("</svg>\n");
    out
}

//! Convex admissible region search on a binary occupancy grid.
//!
//! Starting from the ego vehicle's rear corners, line-of-sight checks toward
//! the far boundary column pick a contiguous run of reachable boundary cells.
//! The rear anchors are then pushed outward laterally as long as both run
//! edges stay visible. The four resulting cell centers span a convex
//! quadrilateral that is handed to the optimizer in halfspace form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ev::EvState;
use crate::grid::{CellIndex, GridSpec};
use crate::pog::Bog;

/// Every cell whose closed square meets the segment between the two cell
/// centers, in traversal order. At an exact corner crossing all four cells
/// sharing the corner are included.
pub fn supercover_line(c0: CellIndex, c1: CellIndex) -> Vec<CellIndex> {
    let mut out = Vec::with_capacity(c0.i.abs_diff(c1.i) + c0.j.abs_diff(c1.j) + 1);
    supercover_visit(c0, c1, |c| {
        out.push(c);
        true
    });
    out
}

/// Walks the supercover line, stopping early once `f` returns false.
/// Returns whether the walk reached the end.
fn supercover_visit(c0: CellIndex, c1: CellIndex, mut f: impl FnMut(CellIndex) -> bool) -> bool {
    let (i0, j0) = (c0.i as i64, c0.j as i64);
    let (i1, j1) = (c1.i as i64, c1.j as i64);
    let (dx, dy) = ((i1 - i0).abs(), (j1 - j0).abs());
    let (sx, sy) = ((i1 - i0).signum(), (j1 - j0).signum());
    let (mut i, mut j) = (i0, j0);
    let (mut ix, mut iy) = (0i64, 0i64);
    let cell = |i: i64, j: i64| CellIndex::new(i as usize, j as usize);
    if !f(cell(i, j)) {
        return false;
    }
    while ix < dx || iy < dy {
        // Next boundary crossing parameters, compared exactly:
        // (ix + ½) / dx  vs  (iy + ½) / dy.
        let lhs = (2 * ix + 1) * dy;
        let rhs = (2 * iy + 1) * dx;
        if lhs == rhs {
            if !f(cell(i + sx, j)) || !f(cell(i, j + sy)) {
                return false;
            }
            i += sx;
            j += sy;
            ix += 1;
            iy += 1;
        } else if lhs < rhs {
            i += sx;
            ix += 1;
        } else {
            j += sy;
            iy += 1;
        }
        if !f(cell(i, j)) {
            return false;
        }
    }
    true
}

/// True iff no cell on the supercover line between `c0` and `c1` is occupied.
pub fn free_path(bog: &Bog, c0: CellIndex, c1: CellIndex) -> bool {
    supercover_visit(c0, c1, |c| !bog.occupied(c))
}

/// Hull corners in world coordinates, counterclockwise:
/// rear-right, front-right, front-left, rear-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullVertices(pub [(f64, f64); 4]);

impl HullVertices {
    pub fn points(&self) -> &[(f64, f64); 4] {
        &self.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self(self.0.map(|(x, y)| (x + dx, y + dy)))
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }
}

/// Halfspaces `a · [x, y, ψ, v] ≤ b`; only the position columns are nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub a: Vec<[f64; 4]>,
    pub b: Vec<f64>,
}

impl Polytope {
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// Largest constraint violation at a position (negative when strictly inside).
    pub fn max_violation(&self, x: f64, y: f64) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a[0] * x + a[1] * y - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        self.max_violation(x, y) <= tol
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// One row per non-degenerate edge of a convex counterclockwise polygon.
pub fn vertices_to_halfspaces(h: &HullVertices) -> Result<Polytope> {
    let scale = h.0.iter().map(|p| p.0.abs().max(p.1.abs())).fold(1.0, f64::max);
    let eps = 1e-12 * scale;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(4);
    for &p in &h.0 {
        if pts.last().is_none_or(|&q: &(f64, f64)| (p.0 - q.0).hypot(p.1 - q.1) > eps) {
            pts.push(p);
        }
    }
    while pts.len() > 1 {
        let (f, l) = (pts[0], pts[pts.len() - 1]);
        if (f.0 - l.0).hypot(f.1 - l.1) > eps {
            break;
        }
        pts.pop();
    }
    // Drop collinear vertices.
    let area_eps = eps * scale;
    let mut changed = true;
    while changed && pts.len() >= 3 {
        changed = false;
        let n = pts.len();
        for k in 0..n {
            let c = cross(pts[(k + n - 1) % n], pts[k], pts[(k + 1) % n]);
            if c.abs() <= area_eps {
                pts.remove(k);
                changed = true;
                break;
            }
        }
    }
    if pts.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let n = pts.len();
    for k in 0..n {
        if cross(pts[k], pts[(k + 1) % n], pts[(k + 2) % n]) < 0.0 {
            return Err(Error::NonConvexHull);
        }
    }
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let p = pts[k];
        let q = pts[(k + 1) % n];
        let (ex, ey) = (q.0 - p.0, q.1 - p.1);
        let norm = ex.hypot(ey);
        let (nx, ny) = (ey / norm, -ex / norm);
        a.push([nx, ny, 0.0, 0.0]);
        b.push(nx * p.0 + ny * p.1);
    }
    Ok(Polytope { a, b })
}

/// How the boundary column is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeColumn {
    /// Only the last grid column.
    #[default]
    Last,
    /// The last column first, then columns closer to the vehicle until one
    /// has reachable cells.
    Retreat,
}

/// Intermediate cells of a hull search, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct HullTrace {
    pub ev_cell: CellIndex,
    pub rear_left: CellIndex,
    pub rear_right: CellIndex,
    pub range_column: usize,
    pub free: Vec<CellIndex>,
    /// Top and bottom of the selected run.
    pub e1: CellIndex,
    pub e2: CellIndex,
    /// Rear anchors after lateral expansion.
    pub m1: CellIndex,
    pub m2: CellIndex,
    pub vertices: HullVertices,
}

/// Admissible hull for an ego pose, using the last grid column as boundary.
pub fn admissible_safe_space(bog: &Bog, ev: &EvState, ev_length: f64, ev_width: f64) -> Result<HullVertices> {
    Ok(admissible_safe_space_traced(bog, ev, ev_length, ev_width, RangeColumn::Last)?.vertices)
}

pub fn admissible_safe_space_traced(
    bog: &Bog,
    ev: &EvState,
    ev_length: f64,
    ev_width: f64,
    column: RangeColumn,
) -> Result<HullTrace> {
    let spec: &GridSpec = bog.spec();
    let locate = |p: (f64, f64)| spec.world_to_cell(p.0, p.1).map_err(|_| Error::HullNotFound("ego vehicle outside the grid"));
    let ev_cell = locate((ev.x, ev.y))?;
    let rear_left = locate(ev.body_point(-ev_length / 2.0, ev_width / 2.0))?;
    let rear_right = locate(ev.body_point(-ev_length / 2.0, -ev_width / 2.0))?;
    if [ev_cell, rear_left, rear_right].iter().any(|&c| bog.occupied(c)) {
        return Err(Error::HullNotFound("ego cells occupied"));
    }

    let last = spec.nx - 1;
    let first = match column {
        RangeColumn::Last => last,
        RangeColumn::Retreat => rear_left.i.max(rear_right.i) + 1,
    };
    if first > last {
        return Err(Error::HullNotFound("no grid column ahead of the vehicle"));
    }
    for col in (first..=last).rev() {
        let free: Vec<CellIndex> = (0..spec.ny)
            .map(|j| CellIndex::new(col, j))
            .filter(|&c| !bog.occupied(c))
            .filter(|&c| free_path(bog, c, rear_left) && free_path(bog, c, rear_right))
            .collect();
        if free.is_empty() {
            continue;
        }
        let (e2, e1) = nearest_run(&free, ev_cell.j);
        let m1 = expand(bog, rear_left, e1, e2, 1);
        let m2 = expand(bog, rear_right, e1, e2, -1);
        let w = |c: CellIndex| spec.center(c);
        let vertices = HullVertices([w(m2), w(e2), w(e1), w(m1)]);
        return Ok(HullTrace { ev_cell, rear_left, rear_right, range_column: col, free, e1, e2, m1, m2, vertices });
    }
    Err(Error::HullNotFound("no boundary cell visible from both rear corners"))
}

/// Bottom and top of the contiguous run in `free` (sorted by `j`) holding
/// the cell laterally nearest `j_ev`; ties go to the larger `j`.
fn nearest_run(free: &[CellIndex], j_ev: usize) -> (CellIndex, CellIndex) {
    let dist = |c: &CellIndex| (c.j as i64 - j_ev as i64).abs();
    let mut best = 0;
    for (k, c) in free.iter().enumerate() {
        let d = dist(c);
        let b = dist(&free[best]);
        if d < b || (d == b && c.j > free[best].j) {
            best = k;
        }
    }
    let (mut lo, mut hi) = (best, best);
    while lo > 0 && free[lo - 1].j + 1 == free[lo].j {
        lo -= 1;
    }
    while hi + 1 < free.len() && free[hi].j + 1 == free[hi + 1].j {
        hi += 1;
    }
    (free[lo], free[hi])
}

/// Moves `start` one cell at a time in `dir` while the next cell is inside,
/// free, and sees both run edges.
fn expand(bog: &Bog, start: CellIndex, e1: CellIndex, e2: CellIndex, dir: i64) -> CellIndex {
    let ny = bog.spec().ny as i64;
    let mut cur = start;
    loop {
        let j = cur.j as i64 + dir;
        if j < 0 || j >= ny {
            return cur;
        }
        let next = CellIndex::new(cur.i, j as usize);
        if bog.occupied(next) || !free_path(bog, next, e1) || !free_path(bog, next, e2) {
            return cur;
        }
        cur = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    /// Closed unit-square/segment intersection in doubled integer coordinates.
    fn touches(c0: CellIndex, c1: CellIndex, c: CellIndex) -> bool {
        let (x0, y0) = (2 * c0.i as i64, 2 * c0.j as i64);
        let (x1, y1) = (2 * c1.i as i64, 2 * c1.j as i64);
        let (bx0, bx1) = (2 * c.i as i64 - 1, 2 * c.i as i64 + 1);
        let (by0, by1) = (2 * c.j as i64 - 1, 2 * c.j as i64 + 1);
        if x0.max(x1) < bx0 || x0.min(x1) > bx1 || y0.max(y1) < by0 || y0.min(y1) > by1 {
            return false;
        }
        let side = |px: i64, py: i64| ((x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)).signum();
        let s = [side(bx0, by0), side(bx1, by0), side(bx1, by1), side(bx0, by1)];
        !(s.iter().all(|&v| v > 0) || s.iter().all(|&v| v < 0))
    }

    fn oracle(c0: CellIndex, c1: CellIndex, n: usize) -> BTreeSet<CellIndex> {
        (0..n).flat_map(|i| (0..n).map(move |j| CellIndex::new(i, j))).filter(|&c| touches(c0, c1, c)).collect()
    }

    #[test]
    fn supercover_examples() {
        let c = |i, j| CellIndex::new(i, j);
        assert_eq!(supercover_line(c(0, 0), c(3, 0)), vec![c(0, 0), c(1, 0), c(2, 0), c(3, 0)]);
        let diag: BTreeSet<_> = supercover_line(c(0, 0), c(2, 2)).into_iter().collect();
        let expected: BTreeSet<_> = [c(0, 0), c(1, 1), c(2, 2), c(0, 1), c(1, 0), c(1, 2), c(2, 1)].into_iter().collect();
        assert_eq!(diag, expected);
        let mut back = supercover_line(c(2, 2), c(0, 0));
        back.reverse();
        assert_eq!(back.iter().copied().collect::<BTreeSet<_>>(), expected);
        assert_eq!(supercover_line(c(4, 4), c(4, 4)), vec![c(4, 4)]);
    }

    proptest! {
        #[test]
        fn supercover_matches_enumeration(a in 0usize..16, b in 0usize..16, c in 0usize..16, d in 0usize..16) {
            let (c0, c1) = (CellIndex::new(a, b), CellIndex::new(c, d));
            let line = supercover_line(c0, c1);
            prop_assert_eq!(line[0], c0);
            prop_assert_eq!(*line.last().unwrap(), c1);
            let set: BTreeSet<_> = line.iter().copied().collect();
            prop_assert_eq!(set.len(), line.len());
            prop_assert_eq!(set, oracle(c0, c1, 16));
        }
    }

    fn road(nx: usize, ny: usize) -> GridSpec {
        GridSpec::new(0.0, 0.0, 0.5, 0.25, nx, ny).unwrap()
    }

    fn block(bog: &mut Bog, i: std::ops::RangeInclusive<usize>, j: std::ops::RangeInclusive<usize>) {
        for a in i {
            for b in j.clone() {
                bog.set(CellIndex::new(a, b), true);
            }
        }
    }

    #[test]
    fn free_path_examples() {
        let g = road(20, 10);
        let mut bog = Bog::empty(g);
        let (a, b) = (CellIndex::new(0, 3), CellIndex::new(19, 3));
        assert!(free_path(&bog, a, b));
        block(&mut bog, 8..=8, 0..=9);
        assert!(!free_path(&bog, a, b));
        let mut bog = Bog::empty(g);
        bog.set(a, true);
        assert!(!free_path(&bog, a, b));
    }

    #[test]
    fn empty_grid_spans_road() {
        // 10 m x 3.5 m, vehicle 2 m x 1 m near the rear.
        let g = road(20, 14);
        let bog = Bog::empty(g);
        let ev = EvState::new(2.0, 1.75, 0.0, 20.0);
        let t = admissible_safe_space_traced(&bog, &ev, 2.0, 1.0, RangeColumn::Last).unwrap();
        assert_eq!(t.rear_left, CellIndex::new(2, 9));
        assert_eq!(t.rear_right, CellIndex::new(2, 5));
        assert_eq!(t.range_column, 19);
        assert_eq!((t.e2, t.e1), (CellIndex::new(19, 0), CellIndex::new(19, 13)));
        assert_eq!((t.m2, t.m1), (CellIndex::new(2, 0), CellIndex::new(2, 13)));
        assert_eq!(t.vertices, HullVertices([(1.25, 0.125), (9.75, 0.125), (9.75, 3.375), (1.25, 3.375)]));
    }

    #[test]
    fn blocked_right_lane_confines_range_edges() {
        // 20 m x 7 m; a 13x9 vehicle block sits in the right lane ahead.
        let g = road(40, 28);
        let mut bog = Bog::empty(g);
        block(&mut bog, 26..=38, 3..=11);
        let ev = EvState::new(3.5, 5.25, 0.0, 20.0);
        let t = admissible_safe_space_traced(&bog, &ev, 6.0, 2.0, RangeColumn::Last).unwrap();
        assert_eq!(t.rear_left, CellIndex::new(1, 25));
        assert_eq!(t.rear_right, CellIndex::new(1, 17));
        // The line (1,17)->(39,11) clips cell (38,11); (39,12) clears the block.
        assert_eq!(t.e2, CellIndex::new(39, 12));
        assert_eq!(t.e1, CellIndex::new(39, 27));
        assert_eq!(t.m1, CellIndex::new(1, 27));
        // From (1,10) the line to e2 stays in row 11 through columns 10..=29.
        assert_eq!(t.m2, CellIndex::new(1, 11));
        let hull = vertices_to_halfspaces(&t.vertices).unwrap();
        for c in bog.occupied_cells() {
            let (x, y) = g.center(c);
            assert!(hull.max_violation(x, y) > 0.0, "occupied {c:?} inside hull");
        }
    }

    #[test]
    fn wall_over_range_column_fails() {
        let g = road(20, 14);
        let mut bog = Bog::empty(g);
        block(&mut bog, 19..=19, 0..=13);
        let ev = EvState::new(2.0, 1.75, 0.0, 20.0);
        assert!(matches!(admissible_safe_space(&bog, &ev, 2.0, 1.0), Err(Error::HullNotFound(_))));
        // Retreating to an earlier column recovers a hull.
        let t = admissible_safe_space_traced(&bog, &ev, 2.0, 1.0, RangeColumn::Retreat).unwrap();
        assert_eq!(t.range_column, 18);
    }

    #[test]
    fn occupied_ego_cells_fail() {
        let g = road(20, 14);
        let mut bog = Bog::empty(g);
        bog.set(CellIndex::new(2, 9), true);
        let ev = EvState::new(2.0, 1.75, 0.0, 20.0);
        assert!(admissible_safe_space(&bog, &ev, 2.0, 1.0).is_err());
        let outside = EvState::new(-5.0, 1.75, 0.0, 20.0);
        assert!(admissible_safe_space(&Bog::empty(g), &outside, 2.0, 1.0).is_err());
    }

    #[test]
    fn nearest_run_ties_go_up() {
        let c = |j| CellIndex::new(0, j);
        let free = [c(0), c(1), c(2), c(6), c(7)];
        assert_eq!(nearest_run(&free, 4), (c(6), c(7)));
        assert_eq!(nearest_run(&free, 3), (c(0), c(2)));
        assert_eq!(nearest_run(&free, 10), (c(6), c(7)));
    }

    #[test]
    fn unit_square_halfspaces() {
        let p = vertices_to_halfspaces(&HullVertices::rectangle(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(p.rows(), 4);
        assert!((p.max_violation(0.5, 0.5) + 0.5).abs() < 1e-12);
        for (x, y) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            assert!(p.max_violation(x, y).abs() <= 1e-9);
        }
        for row in &p.a {
            assert!((row[0].hypot(row[1]) - 1.0).abs() < 1e-12);
            assert_eq!((row[2], row[3]), (0.0, 0.0));
        }
    }

    #[test]
    fn degenerate_and_triangle_hulls() {
        let line = HullVertices([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        assert!(matches!(vertices_to_halfspaces(&line), Err(Error::DegenerateHull)));
        let tri = HullVertices([(0.0, 0.0), (4.0, 1.0), (4.0, 1.0), (0.0, 2.0)]);
        assert_eq!(vertices_to_halfspaces(&tri).unwrap().rows(), 3);
        let collinear_side = HullVertices([(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (0.0, 2.0)]);
        assert_eq!(vertices_to_halfspaces(&collinear_side).unwrap().rows(), 3);
        let clockwise = HullVertices([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]);
        assert!(matches!(vertices_to_halfspaces(&clockwise), Err(Error::NonConvexHull)));
    }

    /// Winding number of a closed polygon around a point.
    fn winding(poly: &[(f64, f64)], p: (f64, f64)) -> i32 {
        let mut w = 0;
        for k in 0..poly.len() {
            let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
            let is_left = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
            if a.1 <= p.1 {
                if b.1 > p.1 && is_left > 0.0 {
                    w += 1;
                }
            } else if b.1 <= p.1 && is_left < 0.0 {
                w -= 1;
            }
        }
        w
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn halfspaces_agree_with_winding(
            x0 in -5.0f64..0.0, y0 in -5.0f64..0.0, x1 in 1.0f64..5.0, y1 in 1.0f64..5.0,
            t in 0.05f64..0.95, u in 0.05f64..0.95, s in 0.05f64..0.95, r in 0.05f64..0.95,
            pts in proptest::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 160),
        ) {
            // One vertex per side of a box keeps the quadrilateral convex.
            let quad = [
                (x0 + t * (x1 - x0), y0),
                (x1, y0 + u * (y1 - y0)),
                (x0 + s * (x1 - x0), y1),
                (x0, y0 + r * (y1 - y0)),
            ];
            let p = vertices_to_halfspaces(&HullVertices(quad)).unwrap();
            for v in quad {
                prop_assert!(p.max_violation(v.0, v.1) <= 1e-9);
            }
            for q in pts {
                let viol = p.max_violation(q.0, q.1);
                if viol.abs() > 1e-9 {
                    prop_assert_eq!(viol < 0.0, winding(&quad, q) != 0);
                }
            }
        }
    }
}

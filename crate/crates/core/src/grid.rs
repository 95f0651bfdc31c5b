//! Evenly spaced road grid and world/cell conversions.

use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};

/// Cell field over a straight road. Cell `(0, 0)` has its lower-left corner
/// at `(origin_x, origin_y)`; `i` runs along the road, `j` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cx: f64,
    pub cy: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

impl From<(usize, usize)> for CellIndex {
    fn from((i, j): (usize, usize)) -> Self {
        Self { i, j }
    }
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cx: f64, cy: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(cx > 0.0 && cy > 0.0) {
            return Err(Error::Config(format!("cell dimensions must be positive, got {cx} x {cy}")));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!("grid must have at least one cell, got {nx} x {ny}")));
        }
        Ok(Self { origin_x, origin_y, cx, cy, nx, ny })
    }

    /// Planning grid around an ego position: full road width laterally,
    /// `behind` meters back and `range` meters ahead longitudinally, with the
    /// origin snapped down to a multiple of `cx`.
    pub fn around(ev_x: f64, road_width: f64, cx: f64, cy: f64, behind: f64, range: f64) -> Result<Self> {
        let origin_x = ((ev_x - behind) / cx).floor() * cx;
        let nx = ((ev_x + range - origin_x) / cx).ceil().max(1.0) as usize;
        let ny = (road_width / cy).round().max(1.0) as usize;
        Self::new(origin_x, 0.0, cx, cy, nx, ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_max(&self) -> f64 {
        self.origin_x + self.nx as f64 * self.cx
    }

    pub fn y_max(&self) -> f64 {
        self.origin_y + self.ny as f64 * self.cy
    }

    /// Flat storage offset of a cell (column-major in `j`).
    #[inline]
    pub fn offset(&self, c: CellIndex) -> usize {
        c.i * self.ny + c.j
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        c.i < self.nx && c.j < self.ny
    }

    pub fn check(&self, c: CellIndex) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::CellOutOfBounds { i: c.i as i64, j: c.j as i64, nx: self.nx, ny: self.ny })
        }
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Result<CellIndex> {
        let i = self.axis_index(Axis::X, x)?;
        let j = self.axis_index(Axis::Y, y)?;
        Ok(CellIndex { i, j })
    }

    fn axis_index(&self, axis: Axis, value: f64) -> Result<usize> {
        let (origin, size, n) = match axis {
            Axis::X => (self.origin_x, self.cx, self.nx),
            Axis::Y => (self.origin_y, self.cy, self.ny),
        };
        let hi = origin + n as f64 * size;
        let err = Error::OutOfRange { axis, value, lo: origin, hi };
        if !(value >= origin && value < hi) {
            return Err(err);
        }
        let k = ((value - origin) / size).floor() as usize;
        // `value < hi` can still round up to `n` in the division.
        Ok(k.min(n - 1))
    }

    /// Center of a cell in world coordinates.
    pub fn cell_to_world(&self, c: CellIndex) -> Result<(f64, f64)> {
        self.check(c)?;
        Ok(self.center(c))
    }

    #[inline]
    pub fn center(&self, c: CellIndex) -> (f64, f64) {
        (
            self.origin_x + (c.i as f64 + 0.5) * self.cx,
            self.origin_y + (c.j as f64 + 0.5) * self.cy,
        )
    }

    /// Inclusive index range of cells along one axis whose closed extent meets
    /// the closed interval `[lo, hi]`, clipped to the grid.
    fn overlap_range(&self, axis: Axis, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let (origin, size, n) = match axis {
            Axis::X => (self.origin_x, self.cx, self.nx),
            Axis::Y => (self.origin_y, self.cy, self.ny),
        };
        if hi < lo {
            return None;
        }
        // Generous candidate range, then the exact closed-overlap test.
        let first = ((lo - origin) / size).floor() - 1.0;
        let last = ((hi - origin) / size).floor() + 1.0;
        let first = first.max(0.0);
        let last = last.min(n as f64 - 1.0);
        if first > last {
            return None;
        }
        let meets = |k: usize| {
            let a = origin + k as f64 * size;
            let b = origin + (k + 1) as f64 * size;
            a <= hi && b >= lo
        };
        let (mut a, mut b) = (first as usize, last as usize);
        while a <= b && !meets(a) {
            a += 1;
        }
        while b > a && !meets(b) {
            b -= 1;
        }
        (a <= b && meets(a)).then_some((a, b))
    }

    /// All in-bounds cells whose closed square meets the closed axis-aligned
    /// rectangle of the given size centered at `center`.
    pub fn footprint_cells(&self, center: (f64, f64), length: f64, width: f64) -> Vec<CellIndex> {
        let (x, y) = center;
        let Some((i0, i1)) = self.overlap_range(Axis::X, x - length / 2.0, x + length / 2.0) else {
            return Vec::new();
        };
        let Some((j0, j1)) = self.overlap_range(Axis::Y, y - width / 2.0, y + width / 2.0) else {
            return Vec::new();
        };
        (i0..=i1)
            .flat_map(|i| (j0..=j1).map(move |j| CellIndex { i, j }))
            .collect()
    }
}

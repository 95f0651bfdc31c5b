//! Probabilistic and binary occupancy grids.
//!
//! A target vehicle's predicted position is rasterized as a sampled 2-D
//! Gaussian and then widened to the vehicle's footprint with a max filter.
//! Fields of several vehicles and maneuvers are summed with the maneuver
//! probabilities as weights; the result is a pseudo-probability and is never
//! renormalized. Thresholding yields the binary grid used for hull search.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{CellIndex, GridSpec};

/// Floor applied to the position variances so the first prediction step
/// (zero covariance) still has a well-defined density.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Squared Mahalanobis distance past which sampled cells are stored as
/// zero; the density there is below `exp(-40)` of the peak.
const TAIL_CUTOFF: f64 = 80.0;

/// 2×2 position covariance `[[σ_xx, σ_xy], [σ_yx, σ_yy]]`.
pub type Cov2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy)]
struct InvCov {
    ixx: f64,
    ixy: f64,
    iyy: f64,
    norm: f64,
}

impl InvCov {
    fn new(sigma: &Cov2) -> Result<Self> {
        let [[sxx, sxy], [syx, syy]] = *sigma;
        let sxy = 0.5 * (sxy + syx);
        let det = sxx * syy - sxy * sxy;
        if !(det >= 1e-12) || !(sxx > 0.0) {
            return Err(Error::DegenerateCovariance { det });
        }
        Ok(Self {
            ixx: syy / det,
            ixy: -sxy / det,
            iyy: sxx / det,
            norm: 1.0 / (std::f64::consts::TAU * det.sqrt()),
        })
    }

    #[inline]
    fn mahalanobis2(&self, dx: f64, dy: f64) -> f64 {
        self.ixx * dx * dx + 2.0 * self.ixy * dx * dy + self.iyy * dy * dy
    }

    #[inline]
    fn density(&self, dx: f64, dy: f64) -> f64 {
        (-0.5 * self.mahalanobis2(dx, dy)).exp() * self.norm
    }
}

/// Bivariate normal density at `point`.
pub fn gaussian_density(mean: (f64, f64), sigma: &Cov2, point: (f64, f64)) -> Result<f64> {
    let inv = InvCov::new(sigma)?;
    Ok(inv.density(point.0 - mean.0, point.1 - mean.1))
}

#[derive(Debug, Clone)]
pub struct Pog {
    spec: GridSpec,
    p: Vec<f64>,
    /// Inclusive `(i0, i1, j0, j1)` box outside which every value is zero;
    /// `None` for an all-zero field.
    support: Option<(usize, usize, usize, usize)>,
}

impl PartialEq for Pog {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.p == other.p
    }
}

impl Pog {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, p: vec![0.0; spec.len()], support: None }
    }

    fn full_support(spec: &GridSpec) -> Option<(usize, usize, usize, usize)> {
        Some((0, spec.nx - 1, 0, spec.ny - 1))
    }

    /// Wraps raw values laid out with [`GridSpec::offset`].
    pub fn from_values(spec: GridSpec, p: Vec<f64>) -> Result<Self> {
        if p.len() != spec.len() {
            return Err(Error::Config(format!("expected {} grid values, got {}", spec.len(), p.len())));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("occupancy values must be finite and nonnegative".into()));
        }
        Ok(Self { spec, p, support: Self::full_support(&spec) })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, c: CellIndex) -> f64 {
        self.p[self.spec.offset(c)]
    }

    pub fn max_value(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }

    fn from_patch(spec: GridSpec, patch: Option<Patch>) -> Self {
        let mut out = Self::zeros(spec);
        if let Some(pt) = patch {
            pt.add_to(&mut out.p, spec.ny, 1.0);
            out.support = Some(pt.bounds());
        }
        out
    }

    /// Gaussian sampled at every cell center.
    pub fn sampled(spec: GridSpec, mean: (f64, f64), sigma: &Cov2) -> Result<Self> {
        Ok(Self::from_patch(spec, Patch::sampled(&spec, mean, sigma)?))
    }

    /// Max filter over the window `|di|·cx ≤ length/2`, `|dj|·cy ≤ width/2`.
    /// Neighbors outside the grid are ignored.
    pub fn dilated(&self, length: f64, width: f64) -> Self {
        let Some((i0, i1, j0, j1)) = self.support else {
            return self.clone();
        };
        let ny = self.spec.ny;
        let mut v = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
        for i in i0..=i1 {
            v.extend_from_slice(&self.p[i * ny + j0..=i * ny + j1]);
        }
        let patch = Patch { i0, j0, ni: i1 - i0 + 1, nj: j1 - j0 + 1, v };
        Self::from_patch(self.spec, Some(patch.dilated(&self.spec, length, width)))
    }

    /// `self += weight · build_tv_pog(...)` without a full-grid temporary.
    pub fn add_tv_field(&mut self, weight: f64, mean: (f64, f64), sigma: &Cov2, tv_length: f64, tv_width: f64) -> Result<()> {
        let spec = self.spec;
        let Some(patch) = tv_patch(&spec, mean, sigma, tv_length, tv_width)? else {
            return Ok(());
        };
        patch.add_to(&mut self.p, spec.ny, weight);
        self.widen_support(patch.bounds());
        Ok(())
    }

    fn widen_support(&mut self, (i0, i1, j0, j1): (usize, usize, usize, usize)) {
        self.support = match self.support {
            None => Some((i0, i1, j0, j1)),
            Some((a0, a1, b0, b1)) => Some((a0.min(i0), a1.max(i1), b0.min(j0), b1.max(j1))),
        };
    }

    /// `self += weight · other`.
    pub fn add_scaled(&mut self, weight: f64, other: &Pog) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        let Some((i0, i1, j0, j1)) = other.support else {
            return Ok(());
        };
        let ny = self.spec.ny;
        for i in i0..=i1 {
            for j in j0..=j1 {
                self.p[i * ny + j] += weight * other.p[i * ny + j];
            }
        }
        self.widen_support((i0, i1, j0, j1));
        Ok(())
    }

    /// Binary grid: occupied where `p ≥ p_th`.
    pub fn to_bog(&self, p_th: f64) -> Bog {
        Bog { spec: self.spec, b: self.p.iter().map(|&v| v >= p_th).collect() }
    }

    /// Text matrix: a `#` header line, then one line per `j` (ascending)
    /// holding the `nx` values of that row.
    pub fn to_text(&self) -> String {
        matrix_text("pog", &self.spec, |c| format!("{:e}", self.get(c)))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (spec, values) = parse_matrix_text(text, "pog")?;
        Self::from_values(spec, values)
    }
}

/// Largest `r` with `r · cell ≤ extent / 2`.
fn window_radius(extent: f64, cell: f64) -> usize {
    let mut r = 0usize;
    while ((r + 1) as f64) * cell <= extent / 2.0 {
        r += 1;
    }
    r
}

/// Cell index span whose centers may fall in `[lo, hi]`, clipped to `n`.
fn index_span(lo: f64, hi: f64, origin: f64, size: f64, n: usize) -> Option<(usize, usize)> {
    let a = ((lo - origin) / size - 0.5).floor().max(0.0);
    let b = ((hi - origin) / size - 0.5).ceil().min(n as f64 - 1.0);
    (a <= b).then_some((a as usize, b as usize))
}

/// Center of the (possibly virtual) lattice cell containing `value`.
fn snap(value: f64, origin: f64, size: f64) -> f64 {
    origin + (((value - origin) / size).floor() + 0.5) * size
}

/// Occupancy field of one vehicle under one maneuver at one prediction step.
///
/// The density is centered on the cell holding the predicted vehicle center,
/// so its peak is always sampled. `sigma` is floored at [`VARIANCE_FLOOR`]
/// on the diagonal.
pub fn build_tv_pog(spec: GridSpec, mean: (f64, f64), sigma: &Cov2, tv_length: f64, tv_width: f64) -> Result<Pog> {
    Ok(Pog::from_patch(spec, tv_patch(&spec, mean, sigma, tv_length, tv_width)?))
}

fn tv_patch(spec: &GridSpec, mean: (f64, f64), sigma: &Cov2, tv_length: f64, tv_width: f64) -> Result<Option<Patch>> {
    let mut s = *sigma;
    s[0][0] = s[0][0].max(VARIANCE_FLOOR);
    s[1][1] = s[1][1].max(VARIANCE_FLOOR);
    let center = (snap(mean.0, spec.origin_x, spec.cx), snap(mean.1, spec.origin_y, spec.cy));
    Ok(Patch::sampled(spec, center, &s)?.map(|p| p.dilated(spec, tv_length, tv_width)))
}

/// Dense block of grid values starting at cell `(i0, j0)`; zero elsewhere.
#[derive(Debug, Clone)]
struct Patch {
    i0: usize,
    j0: usize,
    ni: usize,
    nj: usize,
    v: Vec<f64>,
}

impl Patch {
    fn bounds(&self) -> (usize, usize, usize, usize) {
        (self.i0, self.i0 + self.ni - 1, self.j0, self.j0 + self.nj - 1)
    }

    fn sampled(spec: &GridSpec, mean: (f64, f64), sigma: &Cov2) -> Result<Option<Self>> {
        let inv = InvCov::new(sigma)?;
        // The marginal bound `dx² / σxx ≤ m²` makes this box cover the cutoff ellipse.
        let rx = (TAIL_CUTOFF * sigma[0][0]).sqrt();
        let ry = (TAIL_CUTOFF * sigma[1][1]).sqrt();
        let Some((i0, i1)) = index_span(mean.0 - rx, mean.0 + rx, spec.origin_x, spec.cx, spec.nx) else {
            return Ok(None);
        };
        let Some((j0, j1)) = index_span(mean.1 - ry, mean.1 + ry, spec.origin_y, spec.cy, spec.ny) else {
            return Ok(None);
        };
        let mut v = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
        for i in i0..=i1 {
            let dx = spec.origin_x + (i as f64 + 0.5) * spec.cx - mean.0;
            for j in j0..=j1 {
                let dy = spec.origin_y + (j as f64 + 0.5) * spec.cy - mean.1;
                v.push(if inv.mahalanobis2(dx, dy) > TAIL_CUTOFF { 0.0 } else { inv.density(dx, dy) });
            }
        }
        Ok(Some(Self { i0, j0, ni: i1 - i0 + 1, nj: j1 - j0 + 1, v }))
    }

    /// Separable max filter, growing the block by the window radius.
    fn dilated(&self, spec: &GridSpec, length: f64, width: f64) -> Self {
        let ri = window_radius(length, spec.cx);
        let rj = window_radius(width, spec.cy);
        let (si0, si1, sj0, sj1) = self.bounds();
        let (i0, i1) = (si0.saturating_sub(ri), (si1 + ri).min(spec.nx - 1));
        let (j0, j1) = (sj0.saturating_sub(rj), (sj1 + rj).min(spec.ny - 1));
        let nj = j1 - j0 + 1;
        // Along j first, on the source rows only.
        let mut along_j = vec![0.0; self.ni * nj];
        for a in 0..self.ni {
            let row = &self.v[a * self.nj..(a + 1) * self.nj];
            for j in j0..=j1 {
                let lo = j.saturating_sub(rj).max(sj0) - sj0;
                let hi = (j + rj).min(sj1) - sj0;
                along_j[a * nj + j - j0] = row[lo..=hi].iter().copied().fold(0.0, f64::max);
            }
        }
        let ni = i1 - i0 + 1;
        let mut v = vec![0.0; ni * nj];
        for i in i0..=i1 {
            let lo = i.saturating_sub(ri).max(si0) - si0;
            let hi = (i + ri).min(si1) - si0;
            for j in 0..nj {
                let mut m = 0.0f64;
                for k in lo..=hi {
                    m = m.max(along_j[k * nj + j]);
                }
                v[(i - i0) * nj + j] = m;
            }
        }
        Self { i0, j0, ni, nj, v }
    }

    fn add_to(&self, p: &mut [f64], ny: usize, weight: f64) {
        for a in 0..self.ni {
            let dst = &mut p[(self.i0 + a) * ny + self.j0..(self.i0 + a) * ny + self.j0 + self.nj];
            for (d, s) in dst.iter_mut().zip(&self.v[a * self.nj..(a + 1) * self.nj]) {
                *d += weight * s;
            }
        }
    }
}

/// Weighted sum of fields over one grid.
pub fn combine_pogs(parts: &[(f64, &Pog)]) -> Result<Pog> {
    let Some((_, first)) = parts.first() else {
        return Err(Error::Config("nothing to combine".into()));
    };
    let mut out = Pog::zeros(first.spec);
    for (w, p) in parts {
        out.add_scaled(*w, p)?;
    }
    Ok(out)
}

/// Binary occupancy grid; `true` marks an inadmissible cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Bog {
    spec: GridSpec,
    b: Vec<bool>,
}

impl Bog {
    pub fn empty(spec: GridSpec) -> Self {
        Self { spec, b: vec![false; spec.len()] }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn occupied(&self, c: CellIndex) -> bool {
        self.b[self.spec.offset(c)]
    }

    pub fn set(&mut self, c: CellIndex, occupied: bool) {
        let k = self.spec.offset(c);
        self.b[k] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.b.iter().filter(|&&v| v).count()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let ny = self.spec.ny;
        self.b
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(k, _)| CellIndex::new(k / ny, k % ny))
    }

    pub fn to_text(&self) -> String {
        matrix_text("bog", &self.spec, |c| if self.occupied(c) { "1".into() } else { "0".into() })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (spec, values) = parse_matrix_text(text, "bog")?;
        let mut b = Vec::with_capacity(values.len());
        for v in values {
            match v {
                0.0 => b.push(false),
                1.0 => b.push(true),
                other => return Err(Error::Config(format!("binary grid value {other} is not 0 or 1"))),
            }
        }
        Ok(Self { spec, b })
    }
}

fn matrix_text(kind: &str, spec: &GridSpec, cell: impl Fn(CellIndex) -> String) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {kind} nx={} ny={} origin_x={} origin_y={} cx={} cy={}",
        spec.nx, spec.ny, spec.origin_x, spec.origin_y, spec.cx, spec.cy
    );
    for j in 0..spec.ny {
        let row: Vec<String> = (0..spec.nx).map(|i| cell(CellIndex::new(i, j))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

fn parse_matrix_text(text: &str, kind: &str) -> Result<(GridSpec, Vec<f64>)> {
    let bad = |msg: String| Error::Config(msg);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty grid dump".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("#") || fields.next() != Some(kind) {
        return Err(bad(format!("line 1: expected '# {kind}' header")));
    }
    let mut get = |name: &str| -> Result<f64> {
        let tok = fields.next().ok_or_else(|| bad(format!("line 1: missing {name}")))?;
        let (k, v) = tok.split_once('=').ok_or_else(|| bad(format!("line 1: malformed '{tok}'")))?;
        if k != name {
            return Err(bad(format!("line 1: expected {name}, found {k}")));
        }
        v.parse::<f64>().map_err(|e| bad(format!("line 1: {name}: {e}")))
    };
    let nx = get("nx")? as usize;
    let ny = get("ny")? as usize;
    let spec = GridSpec::new(get("origin_x")?, get("origin_y")?, get("cx")?, get("cy")?, nx, ny)?;
    let mut values = vec![0.0; spec.len()];
    let mut rows = 0;
    for (j, line) in lines.enumerate() {
        if j >= ny {
            return Err(bad(format!("line {}: more than {ny} rows", j + 2)));
        }
        let mut count = 0;
        for (i, tok) in line.split_whitespace().enumerate() {
            if i >= nx {
                return Err(bad(format!("line {}: more than {nx} values", j + 2)));
            }
            values[spec.offset(CellIndex::new(i, j))] =
                tok.parse().map_err(|e| bad(format!("line {}, column {}: {e}", j + 2, i + 1)))?;
            count += 1;
        }
        if count != nx {
            return Err(bad(format!("line {}: expected {nx} values, found {count}", j + 2)));
        }
        rows += 1;
    }
    if rows != ny {
        return Err(bad(format!("expected {ny} rows, found {rows}")));
    }
    Ok((spec, values))
}

//! Dense primal-dual interior point method for the SQP subproblem
//!
//! ```text
//! min  ½ dᵀHd + gᵀd + w·Σσ
//! s.t. J d − σ ≤ −c,   σ ≥ 0,   lo ≤ d ≤ hi
//! ```
//!
//! The elastic variables σ only couple through a diagonal block of the
//! Newton system, so they are eliminated and each iteration factors an
//! `n × n` matrix regardless of the number of soft rows.

use nalgebra::{Cholesky, DMatrix, DVector};

pub struct ElasticQp<'a> {
    pub h: &'a DMatrix<f64>,
    pub g: &'a DVector<f64>,
    pub j: &'a DMatrix<f64>,
    pub c: &'a DVector<f64>,
    pub weight: f64,
    pub lo: &'a DVector<f64>,
    pub hi: &'a DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub d: DVector<f64>,
    pub sigma: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITERS: usize = 100;
const TOL: f64 = 1e-10;
/// Complementarity target, relative to the gradient scale.
const MU_TOL: f64 = 1e-12;

/// Stacked inequality vectors in block order A, B, C, D (see module docs).
struct Blocks {
    m: usize,
    n: usize,
}

impl Blocks {
    fn len(&self) -> usize {
        2 * self.m + 2 * self.n
    }

    /// `G z` for `z = (d, σ)`.
    fn apply(&self, qp: &ElasticQp, d: &DVector<f64>, sigma: &DVector<f64>) -> DVector<f64> {
        let (m, n) = (self.m, self.n);
        let jd = qp.j * d;
        let mut out = DVector::zeros(self.len());
        for i in 0..m {
            out[i] = jd[i] - sigma[i];
            out[m + i] = -sigma[i];
        }
        for k in 0..n {
            out[2 * m + k] = d[k];
            out[2 * m + n + k] = -d[k];
        }
        out
    }

    /// `Gᵀ y`, split into the d and σ parts.
    fn apply_t(&self, qp: &ElasticQp, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (m, n) = (self.m, self.n);
        let ya = y.rows(0, m);
        let mut rd = qp.j.tr_mul(&ya);
        for k in 0..n {
            rd[k] += y[2 * m + k] - y[2 * m + n + k];
        }
        let rs = DVector::from_fn(m, |i, _| -y[i] - y[m + i]);
        (rd, rs)
    }

    fn rhs(&self, qp: &ElasticQp) -> DVector<f64> {
        let (m, n) = (self.m, self.n);
        let mut h = DVector::zeros(self.len());
        for i in 0..m {
            h[i] = -qp.c[i];
        }
        for k in 0..n {
            h[2 * m + k] = qp.hi[k];
            h[2 * m + n + k] = -qp.lo[k];
        }
        h
    }
}

/// Factored reduced Newton matrix for one scaling `W = λ / s`.
struct Reduced {
    chol: Cholesky<f64, nalgebra::Dyn>,
    wa: DVector<f64>,
    diag: DVector<f64>,
}

impl Reduced {
    fn new(qp: &ElasticQp, b: &Blocks, w: &DVector<f64>) -> Option<Self> {
        let (m, n) = (b.m, b.n);
        let wa = w.rows(0, m).into_owned();
        let wb = w.rows(m, m);
        let diag = DVector::from_fn(m, |i, _| wa[i] + wb[i]);
        let mut jw = qp.j.clone();
        for i in 0..m {
            let f = (wa[i] * wb[i] / diag[i]).sqrt();
            jw.row_mut(i).scale_mut(f);
        }
        let mut k = qp.h.clone();
        k += jw.tr_mul(&jw);
        for i in 0..n {
            k[(i, i)] += w[2 * m + i] + w[2 * m + n + i];
        }
        let mut reg = 0.0;
        loop {
            let mut kk = k.clone();
            if reg > 0.0 {
                for i in 0..n {
                    kk[(i, i)] += reg;
                }
            }
            if let Some(chol) = Cholesky::new(kk) {
                return Some(Self { chol, wa, diag });
            }
            reg = if reg == 0.0 { 1e-12 * (1.0 + k.diagonal().amax()) } else { reg * 100.0 };
            if !reg.is_finite() || reg > 1e6 * (1.0 + k.diagonal().amax()) {
                return None;
            }
        }
    }

    /// Solves `(P + GᵀWG) Δz = (rd, rs)`.
    fn solve(&self, qp: &ElasticQp, rd: &DVector<f64>, rs: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let m = rs.len();
        let t = DVector::from_fn(m, |i, _| self.wa[i] * rs[i] / self.diag[i]);
        let dd = self.chol.solve(&(rd + qp.j.tr_mul(&t)));
        let jd = qp.j * &dd;
        let ds = DVector::from_fn(m, |i, _| (rs[i] + self.wa[i] * jd[i]) / self.diag[i]);
        (dd, ds)
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

pub fn solve(qp: &ElasticQp) -> QpSolution {
    let n = qp.g.len();
    let m = qp.c.len();
    let b = Blocks { m, n };
    let total = b.len();
    let hvec = b.rhs(qp);

    let mut d = DVector::from_fn(n, |k, _| 0.0f64.clamp(qp.lo[k], qp.hi[k]));
    let mut sigma = DVector::from_fn(m, |i, _| qp.c[i].max(0.0) + 1.0);
    let gz = b.apply(qp, &d, &sigma);
    let mut s = DVector::from_fn(total, |i, _| (hvec[i] - gz[i]).max(1.0));
    let mut lam = DVector::from_element(total, 1.0);
    for i in 0..m {
        // Dual start inside the box 0 ≤ λ_A ≤ w.
        lam[i] = (0.5 * qp.weight).min(1.0);
        lam[m + i] = qp.weight - lam[i];
    }

    let qscale = 1.0 + qp.g.amax().max(qp.weight);
    let mu_target = MU_TOL * (1.0 + qp.g.amax());
    let hscale = 1.0 + hvec.amax();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITERS {
        iterations = it;
        let (gtl_d, gtl_s) = b.apply_t(qp, &lam);
        let r_d = qp.h * &d + qp.g + gtl_d;
        let r_s = DVector::from_fn(m, |i, _| qp.weight + gtl_s[i]);
        let r_p = b.apply(qp, &d, &sigma) + &s - &hvec;
        let mu = s.dot(&lam) / total as f64;
        let dual_res = r_d.amax().max(if m > 0 { r_s.amax() } else { 0.0 });
        if dual_res <= TOL * qscale && r_p.amax() <= TOL * hscale && mu <= mu_target {
            converged = true;
            break;
        }
        let w = lam.component_div(&s);
        let Some(red) = Reduced::new(qp, &b, &w) else {
            break;
        };

        // Newton direction for complementarity target `rc`.
        let direction = |rc: &DVector<f64>| {
            let y = w.component_mul(&r_p) - rc.component_div(&s);
            let (yd, ys) = b.apply_t(qp, &y);
            let (dd, ds) = red.solve(qp, &(-&r_d - yd), &(-&r_s - ys));
            let gdz = b.apply(qp, &dd, &ds);
            let dl = w.component_mul(&(gdz + &r_p)) - rc.component_div(&s);
            let dsl = -(rc + s.component_mul(&dl)).component_div(&lam);
            (dd, ds, dsl, dl)
        };

        let rc_aff = s.component_mul(&lam);
        let (_, _, ds_aff, dl_aff) = direction(&rc_aff);
        let a_aff = max_step(&s, &ds_aff).min(max_step(&lam, &dl_aff));
        let mu_aff = (&s + &ds_aff * a_aff).dot(&(&lam + &dl_aff * a_aff)) / total as f64;
        let centering = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = rc_aff + ds_aff.component_mul(&dl_aff) - DVector::from_element(total, centering * mu);
        let (dd, dsg, dsl, dl) = direction(&rc);
        let alpha = (0.99 * max_step(&s, &dsl).min(max_step(&lam, &dl))).min(1.0);
        if !(alpha > 0.0) || dd.iter().any(|x| !x.is_finite()) {
            break;
        }
        d += dd * alpha;
        sigma += dsg * alpha;
        s += dsl * alpha;
        lam += dl * alpha;
    }
    // Interior iterates keep the box strictly; clamp the last rounding.
    for k in 0..n {
        d[k] = d[k].clamp(qp.lo[k], qp.hi[k]);
    }
    QpSolution { d, sigma, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn unconstrained_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let g = v(&[-2.0, -4.0]);
        let j = DMatrix::zeros(0, 2);
        let c = DVector::zeros(0);
        let (lo, hi) = (v(&[-10.0, -10.0]), v(&[10.0, 10.0]));
        let sol = solve(&ElasticQp { h: &h, g: &g, j: &j, c: &c, weight: 1e5, lo: &lo, hi: &hi });
        assert!(sol.converged);
        assert!((sol.d[0] - 1.0).abs() < 1e-8 && (sol.d[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn box_is_active() {
        let h = DMatrix::identity(2, 2);
        let g = v(&[-5.0, 5.0]);
        let j = DMatrix::zeros(0, 2);
        let c = DVector::zeros(0);
        let (lo, hi) = (v(&[-1.0, -1.0]), v(&[1.0, 1.0]));
        let sol = solve(&ElasticQp { h: &h, g: &g, j: &j, c: &c, weight: 1e5, lo: &lo, hi: &hi });
        assert!((sol.d[0] - 1.0).abs() < 1e-7 && (sol.d[1] + 1.0).abs() < 1e-7);
    }

    #[test]
    fn soft_row_feasible_and_infeasible() {
        // min ½‖d − (2, 0)‖² s.t. d0 ≤ 1 (soft).
        let h = DMatrix::identity(2, 2);
        let g = v(&[-2.0, 0.0]);
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let c = v(&[-1.0]);
        let (lo, hi) = (v(&[-10.0, -10.0]), v(&[10.0, 10.0]));
        let sol = solve(&ElasticQp { h: &h, g: &g, j: &j, c: &c, weight: 1e5, lo: &lo, hi: &hi });
        assert!((sol.d[0] - 1.0).abs() < 1e-7, "{}", sol.d);
        assert!(sol.sigma[0].abs() < 1e-7);

        // Hard box forces d0 ≥ 3, so the row must be relaxed by exactly 2.
        let lo = v(&[3.0, -10.0]);
        let sol = solve(&ElasticQp { h: &h, g: &g, j: &j, c: &c, weight: 1e5, lo: &lo, hi: &hi });
        assert!((sol.d[0] - 3.0).abs() < 1e-7);
        assert!((sol.sigma[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn cheap_slack_is_used() {
        // With w = 0.5 < gradient pull, violating the row pays off.
        let h = DMatrix::identity(1, 1);
        let g = v(&[-2.0]);
        let j = DMatrix::from_row_slice(1, 1, &[1.0]);
        let c = v(&[0.0]);
        let (lo, hi) = (v(&[-10.0]), v(&[10.0]));
        let sol = solve(&ElasticQp { h: &h, g: &g, j: &j, c: &c, weight: 0.5, lo: &lo, hi: &hi });
        // Stationarity d − 2 + w = 0.
        assert!((sol.d[0] - 1.5).abs() < 1e-6, "{}", sol.d);
    }
}

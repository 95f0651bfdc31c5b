//! Target-vehicle prediction: linear point-mass model with a lane-tracking
//! feedback law, mean rollouts, and covariance propagation.

use nalgebra::{Cholesky, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target-vehicle state `[x, vx, y, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvState {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl TvState {
    pub const fn new(x: f64, vx: f64, y: f64, vy: f64) -> Self {
        Self { x, vx, y, vy }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.vx, self.y, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    LaneKeep,
    LaneChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverHypothesis {
    pub kind: ManeuverKind,
    pub probability: f64,
    pub target_lane_center: f64,
    pub cruise_speed: f64,
}

impl ManeuverHypothesis {
    /// Reference state seen from `state`; the x component mirrors the
    /// current position since the gain has no weight on it.
    pub fn reference(&self, state: &TvState) -> TvState {
        TvState::new(state.x, self.cruise_speed, self.target_lane_center, 0.0)
    }
}

/// Checks per-vehicle hypothesis probabilities.
pub fn validate_hypotheses(hyps: &[ManeuverHypothesis]) -> Result<()> {
    if hyps.is_empty() {
        return Err(Error::Config("a target vehicle needs at least one maneuver hypothesis".into()));
    }
    if let Some(h) = hyps.iter().find(|h| !(0.0..=1.0).contains(&h.probability)) {
        return Err(Error::Config(format!("maneuver probability {} outside [0, 1]", h.probability)));
    }
    let total: f64 = hyps.iter().map(|h| h.probability).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("maneuver probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

/// The hypothesis a simulated vehicle actually follows. Ties go to the first.
pub fn most_likely(hyps: &[ManeuverHypothesis]) -> Option<&ManeuverHypothesis> {
    hyps.iter()
        .fold(None, |best: Option<&ManeuverHypothesis>, h| match best {
            Some(b) if b.probability >= h.probability => Some(b),
            _ => Some(h),
        })
}

/// Discrete point-mass model `ξ⁺ = A ξ + B u + G w`, `u = K (ξ − ξ_ref)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub g: Matrix4<f64>,
    pub k: Matrix2x4<f64>,
    pub sigma_w: Matrix4<f64>,
    pub dt: f64,
}

impl TvModel {
    /// Builds the model from the sampling time, the three nonzero feedback
    /// gains `[k12, k21, k22]`, the diagonal of `G` and the disturbance
    /// covariance.
    pub fn new(dt: f64, gains: [f64; 3], g_diag: [f64; 4], sigma_w: Matrix4<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("sampling time must be positive, got {dt}")));
        }
        if (sigma_w - sigma_w.transpose()).abs().max() > 1e-12 {
            return Err(Error::Config("disturbance covariance must be symmetric".into()));
        }
        if sigma_w.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::Config("disturbance covariance must be positive semidefinite".into()));
        }
        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, dt, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, dt,
            0.0, 0.0, 0.0, 1.0,
        );
        let half = 0.5 * dt * dt;
        #[rustfmt::skip]
        let b = Matrix4x2::new(
            half, 0.0,
            dt, 0.0,
            0.0, half,
            0.0, dt,
        );
        let [k12, k21, k22] = gains;
        #[rustfmt::skip]
        let k = Matrix2x4::new(
            0.0, k12, 0.0, 0.0,
            0.0, 0.0, k21, k22,
        );
        let g = Matrix4::from_diagonal(&Vector4::from(g_diag));
        Ok(Self { a, b, g, k, sigma_w, dt })
    }

    /// Highway preset: dt 0.2 s, gains [−1, −0.8, −2.2], Σ_w = I,
    /// G = diag(0.05, 0.067, 0.013, 0.03).
    pub fn itsc2020() -> Self {
        Self::new(0.2, [-1.0, -0.8, -2.2], [0.05, 0.067, 0.013, 0.03], Matrix4::identity())
            .expect("preset parameters are valid")
    }

    pub fn closed_loop(&self) -> Matrix4<f64> {
        self.a + self.b * self.k
    }

    /// Acceleration command `K (state − ref)`.
    pub fn feedback(&self, state: &TvState, reference: &TvState) -> (f64, f64) {
        let u = self.k * (state.to_vector() - reference.to_vector());
        (u[0], u[1])
    }

    /// One noise-free closed-loop step toward the hypothesis reference.
    pub fn step(&self, state: &TvState, hyp: &ManeuverHypothesis) -> TvState {
        let (ux, uy) = self.feedback(state, &hyp.reference(state));
        let next = self.a * state.to_vector() + self.b * Vector2::new(ux, uy);
        TvState::from_vector(&next)
    }

    /// Noise-free mean trajectory of `steps + 1` states starting at `init`.
    pub fn predict_mean(&self, init: TvState, hyp: &ManeuverHypothesis, steps: usize) -> Vec<TvState> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(init);
        for h in 0..steps {
            let next = self.step(&out[h], hyp);
            out.push(next);
        }
        out
    }

    /// `Σ_0 = 0`, `Σ_{h+1} = (A+BK) Σ_h (A+BK)ᵀ + G Σ_w Gᵀ`, symmetrized each step.
    pub fn propagate_covariance(&self, steps: usize) -> CovarianceSequence {
        let f = self.closed_loop();
        let q = self.g * self.sigma_w * self.g.transpose();
        let mut sigmas = Vec::with_capacity(steps + 1);
        sigmas.push(Matrix4::zeros());
        for h in 0..steps {
            let next = f * sigmas[h] * f.transpose() + q;
            sigmas.push((next + next.transpose()) * 0.5);
        }
        CovarianceSequence { sigmas }
    }

    /// Ground-truth step of a simulated vehicle. With `noise` set, adds
    /// `G w` where `w ~ N(0, Σ_w)` is drawn from `rng`.
    pub fn truth_step<R: Rng + ?Sized>(
        &self,
        state: &TvState,
        hyp: &ManeuverHypothesis,
        noise: bool,
        rng: &mut R,
    ) -> TvState {
        let next = self.step(state, hyp);
        if !noise {
            return next;
        }
        TvState::from_vector(&(next.to_vector() + self.g * self.sample_disturbance(rng)))
    }

    pub fn sample_disturbance<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        match Cholesky::new(self.sigma_w) {
            Some(chol) => chol.l() * z,
            None => {
                // Semidefinite: fall back to the eigen square root.
                let eig = self.sigma_w.symmetric_eigen();
                let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                eig.eigenvectors * Matrix4::from_diagonal(&sqrt) * eig.eigenvectors.transpose() * z
            }
        }
    }
}

/// A target vehicle as the planner sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct TvAgent {
    pub state: TvState,
    pub model: TvModel,
    pub hypotheses: Vec<ManeuverHypothesis>,
}

/// Prediction covariances `Σ_0..Σ_N` of the full 4-D state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSequence {
    pub sigmas: Vec<Matrix4<f64>>,
}

impl CovarianceSequence {
    /// Position block `[[σ_xx, σ_xy], [σ_yx, σ_yy]]` of step `h`.
    pub fn position_block(&self, h: usize) -> [[f64; 2]; 2] {
        let s = &self.sigmas[h];
        [[s[(0, 0)], s[(0, 2)]], [s[(2, 0)], s[(2, 2)]]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lane_keep(center: f64, speed: f64) -> ManeuverHypothesis {
        ManeuverHypothesis { kind: ManeuverKind::LaneKeep, probability: 0.8, target_lane_center: center, cruise_speed: speed }
    }

    #[test]
    fn feedback_examples() {
        let m = TvModel::itsc2020();
        let s = TvState::new(3.0, 27.0, 5.25, 0.0);
        assert_eq!(m.feedback(&s, &s), (0.0, 0.0));
        let zero = TvState::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(m.feedback(&TvState::new(0.0, 1.0, 0.0, 0.0), &zero), (-1.0, 0.0));
        let (ux, uy) = m.feedback(&TvState::new(0.0, 0.0, 1.0, 1.0), &zero);
        assert_eq!(ux, 0.0);
        assert_relative_eq!(uy, -3.0, epsilon = 1e-15);
    }

    #[test]
    fn feedback_ignores_x() {
        let m = TvModel::itsc2020();
        let r = TvState::new(0.0, 27.0, 1.75, 0.0);
        let a = m.feedback(&TvState::new(0.0, 25.0, 2.0, 0.3), &r);
        let b = m.feedback(&TvState::new(1234.5, 25.0, 2.0, 0.3), &r);
        assert_eq!(a, b);
    }

    #[test]
    fn mean_rollout_first_target_vehicle() {
        let m = TvModel::itsc2020();
        let traj = m.predict_mean(TvState::new(40.0, 27.0, 5.25, 0.0), &lane_keep(5.25, 27.0), 2);
        let expected = [[40.0, 27.0, 5.25, 0.0], [45.4, 27.0, 5.25, 0.0], [50.8, 27.0, 5.25, 0.0]];
        assert_eq!(traj.len(), 3);
        for (s, e) in traj.iter().zip(expected) {
            assert_relative_eq!(s.x, e[0], epsilon = 1e-12);
            assert_eq!([s.vx, s.y, s.vy], [e[1], e[2], e[3]]);
        }
        assert_eq!(m.predict_mean(traj[0], &lane_keep(5.25, 27.0), 0), vec![traj[0]]);
    }

    #[test]
    fn lane_change_moves_monotonically_toward_target() {
        let m = TvModel::itsc2020();
        let hyp = ManeuverHypothesis { kind: ManeuverKind::LaneChange, probability: 0.2, target_lane_center: 1.75, cruise_speed: 27.0 };
        let traj = m.predict_mean(TvState::new(40.0, 27.0, 5.25, 0.0), &hyp, 20);
        for w in traj.windows(2).take(10) {
            assert!(w[1].y < w[0].y, "{:?}", w);
        }
        assert!(traj[1].y < 5.25);
        assert!(traj.iter().all(|s| s.y > 1.75 - 1e-9));
        assert!(traj[20].y < 3.0);
    }

    #[test]
    fn covariance_first_step() {
        let m = TvModel::itsc2020();
        let seq = m.propagate_covariance(3);
        assert_eq!(seq.sigmas[0], Matrix4::zeros());
        let expected = Matrix4::from_diagonal(&Vector4::new(0.0025, 0.004489, 0.000169, 0.0009));
        assert_relative_eq!(seq.sigmas[1], expected, epsilon = 1e-15);
    }

    #[test]
    fn covariance_without_disturbance_is_zero() {
        let m = TvModel::new(0.2, [-1.0, -0.8, -2.2], [0.0; 4], Matrix4::identity()).unwrap();
        assert!(m.propagate_covariance(20).sigmas.iter().all(|s| *s == Matrix4::zeros()));
    }

    #[test]
    fn covariance_psd_and_trace_nondecreasing() {
        let m = TvModel::itsc2020();
        let seq = m.propagate_covariance(20);
        for w in seq.sigmas.windows(2) {
            assert!(w[1].trace() >= w[0].trace());
        }
        for s in &seq.sigmas {
            assert_eq!(*s, s.transpose());
            assert!(s.symmetric_eigenvalues().min() >= -1e-10);
        }
    }

    #[test]
    fn truth_step_without_noise_matches_prediction() {
        let m = TvModel::itsc2020();
        let hyp = lane_keep(1.75, 27.0);
        let s = TvState::new(90.0, 26.0, 2.1, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = m.truth_step(&s, &hyp, false, &mut rng);
        let b = m.predict_mean(s, &hyp, 1)[1];
        for (u, v) in a.to_vector().iter().zip(b.to_vector().iter()) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
        let eq = TvState::new(90.0, 27.0, 1.75, 0.0);
        let n = m.truth_step(&eq, &hyp, false, &mut rng);
        assert_eq!((n.vx, n.y, n.vy), (27.0, 1.75, 0.0));
        assert_relative_eq!(n.x, 95.4, epsilon = 1e-12);
    }

    #[test]
    fn truth_step_is_seeded() {
        let m = TvModel::itsc2020();
        let hyp = lane_keep(1.75, 27.0);
        let s = TvState::new(90.0, 27.0, 1.75, 0.0);
        let a = m.truth_step(&s, &hyp, true, &mut ChaCha8Rng::seed_from_u64(42));
        let b = m.truth_step(&s, &hyp, true, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_is_zero_mean() {
        let m = TvModel::itsc2020();
        let hyp = lane_keep(1.75, 27.0);
        let eq = TvState::new(0.0, 27.0, 1.75, 0.0);
        let clean = m.step(&eq, &hyp).to_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1000;
        let mut sum = Vector4::zeros();
        for _ in 0..n {
            sum += m.truth_step(&eq, &hyp, true, &mut rng).to_vector() - clean;
        }
        let mean = sum / n as f64;
        for k in 0..4 {
            let sigma = m.g[(k, k)] * m.sigma_w[(k, k)].sqrt();
            assert!(mean[k].abs() <= 4.0 * sigma / (n as f64).sqrt(), "component {k}: {}", mean[k]);
        }
    }

    #[test]
    fn hypothesis_validation() {
        let mut lk = lane_keep(5.25, 27.0);
        let mut lc = ManeuverHypothesis { kind: ManeuverKind::LaneChange, probability: 0.2, target_lane_center: 1.75, cruise_speed: 27.0 };
        assert!(validate_hypotheses(&[lk, lc]).is_ok());
        assert_eq!(most_likely(&[lk, lc]).unwrap().kind, ManeuverKind::LaneKeep);
        lc.probability = 0.3;
        assert!(validate_hypotheses(&[lk, lc]).is_err());
        lk.probability = 1.2;
        assert!(validate_hypotheses(&[lk]).is_err());
        assert!(validate_hypotheses(&[]).is_err());
    }
}

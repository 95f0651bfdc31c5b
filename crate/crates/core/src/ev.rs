//! Ego-vehicle kinematic bicycle model.

use nalgebra::{Matrix4, Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvParams {
    /// CoG to rear axle.
    pub lr: f64,
    /// CoG to front axle.
    pub lf: f64,
    pub length: f64,
    pub width: f64,
}

impl Default for EvParams {
    fn default() -> Self {
        Self { lr: 1.5, lf: 1.5, length: 6.0, width: 2.0 }
    }
}

impl EvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lf > 0.0) {
            return Err(Error::Config("axle distances must be positive".into()));
        }
        if !(self.length >= self.lr + self.lf) || !(self.width > 0.0) {
            return Err(Error::Config("vehicle must be at least as long as its wheelbase".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

impl EvState {
    pub const fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi, v }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.psi, self.v)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Body-frame offset `(forward, left)` rotated into the world.
    pub fn body_point(&self, forward: f64, left: f64) -> (f64, f64) {
        let (s, c) = self.psi.sin_cos();
        (self.x + forward * c - left * s, self.y + forward * s + left * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvInput {
    pub delta_f: f64,
    pub a: f64,
}

impl EvInput {
    pub const fn new(delta_f: f64, a: f64) -> Self {
        Self { delta_f, a }
    }
}

/// Body slip angle `atan(lr / (lr + lf) · tan δf)`.
pub fn slip_angle(p: &EvParams, delta_f: f64) -> Result<f64> {
    if !(delta_f.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::SteeringDomain(delta_f));
    }
    Ok((p.lr / (p.lr + p.lf) * delta_f.tan()).atan())
}

/// Time derivative of the state.
pub fn continuous_derivatives(p: &EvParams, s: &EvState, u: &EvInput) -> Result<EvState> {
    let alpha = slip_angle(p, u.delta_f)?;
    let heading = s.psi + alpha;
    Ok(EvState {
        x: s.v * heading.cos(),
        y: s.v * heading.sin(),
        psi: s.v / p.lr * alpha.sin(),
        v: u.a,
    })
}

/// Forward-Euler step of length `dt`.
pub fn discrete_step(p: &EvParams, s: &EvState, u: &EvInput, dt: f64) -> Result<EvState> {
    let d = continuous_derivatives(p, s, u)?;
    Ok(EvState {
        x: s.x + dt * d.x,
        y: s.y + dt * d.y,
        psi: s.psi + dt * d.psi,
        v: s.v + dt * d.v,
    })
}

/// Jacobians of [`discrete_step`] with respect to the state and input.
pub fn step_jacobians(p: &EvParams, s: &EvState, u: &EvInput, dt: f64) -> Result<(Matrix4<f64>, Matrix4x2<f64>)> {
    let alpha = slip_angle(p, u.delta_f)?;
    let ratio = p.lr / (p.lr + p.lf);
    let t = u.delta_f.tan();
    // d alpha / d delta_f
    let dalpha = ratio * (1.0 + t * t) / (1.0 + ratio * ratio * t * t);
    let (sh, ch) = (s.psi + alpha).sin_cos();
    let (sa, ca) = alpha.sin_cos();

    let mut fx = Matrix4::identity();
    fx[(0, 2)] = -dt * s.v * sh;
    fx[(0, 3)] = dt * ch;
    fx[(1, 2)] = dt * s.v * ch;
    fx[(1, 3)] = dt * sh;
    fx[(2, 3)] = dt * sa / p.lr;

    let mut fu = Matrix4x2::zeros();
    fu[(0, 0)] = -dt * s.v * sh * dalpha;
    fu[(1, 0)] = dt * s.v * ch * dalpha;
    fu[(2, 0)] = dt * s.v / p.lr * ca * dalpha;
    fu[(3, 1)] = dt;
    Ok((fx, fu))
}

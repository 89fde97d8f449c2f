//! Two-car closed-loop dynamics.
//!
//! The ego vehicle tracks the commanded speed through a first-order lag,
//! `v̇_AV = (v_cmd − v_AV) / τ`, and the resulting acceleration is clipped to
//! the admissible input interval. Speed constraints enter through the gate
//! `λ(y) = 1 if y > 0 else 0`.

use crate::controller::{ControllerParams, State};
use crate::error::ParamError;

/// Admissible ego (`u`) and lead (`d`) accelerations in m/s².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelBounds {
    u_min: f64,
    u_max: f64,
    d_min: f64,
    d_max: f64,
}

/// Default lead (disturbance) acceleration magnitude and ego acceleration cap.
pub const DEFAULT_ACCEL_LIMIT: f64 = 3.0;
/// Default ego braking limit. It must exceed the lead's: with equal limits and
/// a lagged ego, any closing speed built up during the lag persists until the
/// lead stops, and the game becomes unsafe from every moving state.
pub const DEFAULT_EGO_BRAKE: f64 = -6.0;

impl AccelBounds {
    pub fn new(u_min: f64, u_max: f64, d_min: f64, d_max: f64) -> Result<Self, ParamError> {
        if [u_min, u_max, d_min, d_max].iter().any(|v| !v.is_finite()) {
            return Err(ParamError::new("acceleration bounds must be finite"));
        }
        if !(u_min < 0.0 && 0.0 < u_max) {
            return Err(ParamError::new(format!("ego bounds must satisfy u_min < 0 < u_max, got [{u_min}, {u_max}]")));
        }
        if !(d_min < 0.0 && 0.0 < d_max) {
            return Err(ParamError::new(format!("lead bounds must satisfy d_min < 0 < d_max, got [{d_min}, {d_max}]")));
        }
        Ok(Self { u_min, u_max, d_min, d_max })
    }

    /// Symmetric ±limit for both vehicles.
    pub fn symmetric(limit: f64) -> Result<Self, ParamError> {
        Self::new(-limit, limit, -limit, limit)
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }
    pub fn u_max(&self) -> f64 {
        self.u_max
    }
    pub fn d_min(&self) -> f64 {
        self.d_min
    }
    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn clamp_u(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }

    pub fn clamp_d(&self, d: f64) -> f64 {
        d.clamp(self.d_min, self.d_max)
    }

    /// Largest ego acceleration magnitude.
    pub fn u_abs_max(&self) -> f64 {
        self.u_min.abs().max(self.u_max.abs())
    }

    /// Largest lead acceleration magnitude.
    pub fn d_abs_max(&self) -> f64 {
        self.d_min.abs().max(self.d_max.abs())
    }
}

impl Default for AccelBounds {
    fn default() -> Self {
        Self::new(DEFAULT_EGO_BRAKE, DEFAULT_ACCEL_LIMIT, -DEFAULT_ACCEL_LIMIT, DEFAULT_ACCEL_LIMIT)
            .expect("default bounds are valid")
    }
}

/// First-order speed response of the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleModel {
    tau: f64,
}

pub const DEFAULT_TAU: f64 = 0.5;

impl VehicleModel {
    pub fn new(tau: f64) -> Result<Self, ParamError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ParamError::new(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Default for VehicleModel {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

/// Speed-constraint gate: 1 for strictly positive speed, 0 otherwise.
#[inline]
pub fn lambda_gate(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Ego acceleration produced by the controller and the lagged vehicle,
/// clipped to `[u_min, u_max]`.
pub fn closed_loop_accel(s: &State, params: &ControllerParams, model: &VehicleModel, bounds: &AccelBounds) -> f64 {
    let v_cmd = params.command_speed(s);
    bounds.clamp_u((v_cmd - s.v_av) / model.tau)
}

/// Time derivative of `(x_rel, v_rel, v_AV)` for ego acceleration `u` and
/// lead acceleration `d`.
#[inline]
pub fn vector_field(s: &State, u: f64, d: f64) -> [f64; 3] {
    let lead_gate = lambda_gate(s.v_lead());
    let ego_gate = lambda_gate(s.v_av);
    [s.v_rel, lead_gate * d - ego_gate * u, ego_gate * u]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_is_strict() {
        assert_eq!(lambda_gate(5.0), 1.0);
        assert_eq!(lambda_gate(0.0), 0.0);
        assert_eq!(lambda_gate(-2.0), 0.0);
    }

    #[test]
    fn zero_tracking_error_gives_zero_accel() {
        let p = ControllerParams::original();
        // At the middle knot the command equals the lead speed.
        let s = State::new(5.25, 0.0, 12.0);
        assert_eq!(p.command_speed(&s), 12.0);
        let u = closed_loop_accel(&s, &p, &VehicleModel::default(), &AccelBounds::default());
        assert_eq!(u, 0.0);
    }

    #[test]
    fn hard_stop_is_clipped() {
        let p = ControllerParams::original();
        // gap inside zone 1 -> v_cmd = 0; (0 - 30) / 0.5 = -60 -> -3
        let s = State::new(2.0, 0.0, 30.0);
        let u = closed_loop_accel(&s, &p, &VehicleModel::new(0.5).unwrap(), &AccelBounds::symmetric(3.0).unwrap());
        assert_eq!(u, -3.0);
    }

    #[test]
    fn small_error_stays_inside_bounds() {
        let p = ControllerParams::original();
        // far zone commands r = 30; (30 - 29.5) / 0.5 = 1.0
        let s = State::new(45.0, 0.5, 29.5);
        assert_eq!(p.command_speed(&s), 30.0);
        let u = closed_loop_accel(&s, &p, &VehicleModel::new(0.5).unwrap(), &AccelBounds::symmetric(3.0).unwrap());
        assert!((u - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vector_field_examples() {
        assert_eq!(vector_field(&State::new(10.0, 0.0, 0.0), 2.0, 0.0), [0.0, 0.0, 0.0]);
        assert_eq!(vector_field(&State::new(20.0, -5.0, 15.0), -1.0, -2.0), [-5.0, -1.0, -1.0]);
        assert_eq!(vector_field(&State::new(20.0, 5.0, 0.0), -1.0, 1.0), [5.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_invalid_bounds_and_tau() {
        assert!(AccelBounds::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(AccelBounds::new(-1.0, 1.0, 1.0, 2.0).is_err());
        assert!(VehicleModel::new(0.0).is_err());
        assert!(VehicleModel::new(f64::NAN).is_err());
    }
}

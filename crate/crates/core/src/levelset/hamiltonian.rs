//! Closed-loop Hamiltonian of the two-car game.
//!
//! The ego input is pinned to the controller, so only the lead acceleration
//! is optimized. It enters linearly, hence the minimizer is bang-bang.

use crate::controller::{ControllerParams, State};
use crate::dynamics::{closed_loop_accel, lambda_gate, AccelBounds, VehicleModel};

/// Maps a state with negative lead speed onto the `v_lead = 0` plane.
///
/// The integrators clip speeds at zero, so a "reversing" lead is a stopped
/// lead. Physical states are returned unchanged.
#[inline]
pub fn project_physical(s: &State) -> State {
    if s.v_lead() < 0.0 {
        State::new(s.x_rel, -s.v_av, s.v_av)
    } else {
        *s
    }
}

/// Lead acceleration minimizing `p_vrel · λ(v_lead) · d`.
pub fn worst_case_disturbance(p_vrel: f64, s: &State, bounds: &AccelBounds) -> f64 {
    if p_vrel * lambda_gate(s.v_lead()) > 0.0 {
        bounds.d_min()
    } else {
        bounds.d_max()
    }
}

/// `H(z, p) = p · f(z, u(z), d*)` with the worst-case lead acceleration.
pub fn hamiltonian(
    s: &State,
    p: [f64; 3],
    params: &ControllerParams,
    model: &VehicleModel,
    bounds: &AccelBounds,
) -> f64 {
    NodeDynamics::at(s, params, model, bounds).hamiltonian(p, bounds)
}

/// Everything about a node's dynamics that does not depend on the costate.
///
/// The solver evaluates the Hamiltonian millions of times per sweep; the
/// controller output is fixed per node, so it is computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NodeDynamics {
    x_rate: f64,
    /// `−λ(v_AV)·u`, the ego part of `v̇_rel`.
    ego_rel: f64,
    /// `λ(v_AV)·u`.
    ego_rate: f64,
    lead_gate: f64,
    /// Bounds on `|∂H/∂p_i|`, used as Lax-Friedrichs dissipation.
    pub(crate) dissipation: [f64; 3],
}

impl NodeDynamics {
    pub(crate) fn at(s: &State, params: &ControllerParams, model: &VehicleModel, bounds: &AccelBounds) -> Self {
        let s = project_physical(s);
        let u = closed_loop_accel(&s, params, model, bounds);
        let ego_gate = lambda_gate(s.v_av);
        let lead_gate = lambda_gate(s.v_lead());
        let ego_rate = ego_gate * u;
        let ego_rel = -ego_rate;
        let dissipation = [
            s.v_rel.abs(),
            (lead_gate * bounds.d_min() + ego_rel).abs().max((lead_gate * bounds.d_max() + ego_rel).abs()),
            ego_rate.abs(),
        ];
        Self { x_rate: s.v_rel, ego_rel, ego_rate, lead_gate, dissipation }
    }

    /// Upwind Hamiltonian: for each extreme lead input, every axis takes the
    /// one-sided difference on the side the flow comes from.
    #[inline]
    pub(crate) fn upwind_hamiltonian(&self, back: [f64; 3], fwd: [f64; 3], bounds: &AccelBounds) -> f64 {
        #[inline]
        fn transport(rate: f64, back: f64, fwd: f64) -> f64 {
            if rate > 0.0 {
                rate * fwd
            } else {
                rate * back
            }
        }
        let shared = transport(self.x_rate, back[0], fwd[0]) + transport(self.ego_rate, back[2], fwd[2]);
        let braking = transport(self.ego_rel + self.lead_gate * bounds.d_min(), back[1], fwd[1]);
        let pulling = transport(self.ego_rel + self.lead_gate * bounds.d_max(), back[1], fwd[1]);
        shared + braking.min(pulling)
    }

    #[inline]
    pub(crate) fn hamiltonian(&self, p: [f64; 3], bounds: &AccelBounds) -> f64 {
        let coeff = p[1] * self.lead_gate;
        let d = if coeff > 0.0 { bounds.d_min() } else { bounds.d_max() };
        p[0] * self.x_rate + p[1] * (self.ego_rel + self.lead_gate * d) + p[2] * self.ego_rate
    }
}

//! Explicit pseudo-time iteration of the frozen HJI equation.
//!
//! Each sweep applies `V ← V + Δt · min{0, Ĥ}` at every node, where `Ĥ` is a
//! numerical Hamiltonian built from one-sided first-order differences: either
//! monotone upwinding (the default) or local Lax-Friedrichs. Ghost values
//! past the faces follow the payoff's slope unless [`FaceRule::Linear`] is
//! chosen. The iteration stops once a sweep changes no node by more than
//! `tol`, or the pseudo-time budget runs out.

use rayon::prelude::*;

use crate::controller::ControllerParams;
use crate::dynamics::{AccelBounds, VehicleModel};
use crate::error::ParamError;

use super::field::{initial_payoff, SafetyCriterion, SolveSetup, SolveStats, ValueField};
use super::grid::GridSpec;
use super::hamiltonian::NodeDynamics;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm change per sweep below which the field is converged (m).
    pub tol: f64,
    /// Pseudo-time budget (s).
    pub t_max: f64,
    pub cfl: f64,
    pub scheme: Scheme,
    pub faces: FaceRule,
}

/// How ghost values past the grid faces are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceRule {
    /// Continue the local slope of the field: `2c − n`.
    Linear,
    /// Continue with the payoff's slope. Monotone, so the field ordering of
    /// two criteria survives every sweep.
    PayoffSlope,
}

/// Numerical Hamiltonian used by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    LaxFriedrichs,
    Upwind,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::LaxFriedrichs => "lax-friedrichs",
            Scheme::Upwind => "upwind",
        })
    }
}

impl std::fmt::Display for FaceRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FaceRule::Linear => "linear",
            FaceRule::PayoffSlope => "payoff-slope",
        })
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-3, t_max: 60.0, cfl: 0.5, scheme: Scheme::Upwind, faces: FaceRule::PayoffSlope }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), ParamError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(ParamError::new(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(ParamError::new(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(ParamError::new(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        Ok(())
    }
}

/// Progress report handed to a sweep observer.
#[derive(Debug, Clone, Copy)]
pub struct Sweep {
    pub iteration: usize,
    pub horizon: f64,
    pub residual: f64,
}

/// Solves for the value field of `params` under `criterion`.
pub fn solve(
    grid: &GridSpec,
    criterion: SafetyCriterion,
    params: &ControllerParams,
    model: &VehicleModel,
    bounds: &AccelBounds,
    options: &SolverOptions,
) -> Result<ValueField, ParamError> {
    solve_with_observer(grid, criterion, params, model, bounds, options, |_, _, _| {})
}

/// Like [`solve`], calling `observer(sweep, old, new)` after every sweep.
pub fn solve_with_observer<F>(
    grid: &GridSpec,
    criterion: SafetyCriterion,
    params: &ControllerParams,
    model: &VehicleModel,
    bounds: &AccelBounds,
    options: &SolverOptions,
    mut observer: F,
) -> Result<ValueField, ParamError>
where
    F: FnMut(&Sweep, &[f64], &[f64]),
{
    options.validate()?;
    let nodes: Vec<NodeDynamics> = (0..grid.len())
        .into_par_iter()
        .map(|idx| NodeDynamics::at(&grid.node_at(idx), params, model, bounds))
        .collect();

    let spacing = grid.spacing();
    let mut max_dissipation = [0.0f64; 3];
    for nd in &nodes {
        for d in 0..3 {
            max_dissipation[d] = max_dissipation[d].max(nd.dissipation[d]);
        }
    }
    let rate: f64 = (0..3).map(|d| max_dissipation[d] / spacing[d]).sum();

    let mut current = initial_payoff(grid, criterion).values().to_vec();
    let mut next = current.clone();
    let mut stats = SolveStats { iterations: 0, converged: false, residual: f64::INFINITY, horizon: 0.0, dt: 0.0 };

    if rate == 0.0 {
        // Nothing moves: the payoff is already the fixed point.
        stats.converged = true;
        stats.residual = 0.0;
    } else {
        let dt = options.cfl / rate;
        stats.dt = dt;
        let kernel = SweepKernel {
            grid,
            nodes: &nodes,
            bounds,
            spacing,
            dt,
            scheme: options.scheme,
            faces: options.faces,
            slope: criterion.payoff_gradient(),
        };
        while stats.horizon < options.t_max {
            let residual = kernel.sweep(&current, &mut next);
            stats.iterations += 1;
            stats.horizon += dt;
            stats.residual = residual;
            let sweep = Sweep { iteration: stats.iterations, horizon: stats.horizon, residual };
            observer(&sweep, &current, &next);
            std::mem::swap(&mut current, &mut next);
            if residual < options.tol {
                stats.converged = true;
                break;
            }
        }
    }

    let setup = SolveSetup {
        params: *params,
        model: *model,
        bounds: *bounds,
        tol: options.tol,
        t_max: options.t_max,
        cfl: options.cfl,
    };
    Ok(ValueField::from_parts(*grid, criterion, current, stats, Some(setup)))
}

struct SweepKernel<'a> {
    grid: &'a GridSpec,
    nodes: &'a [NodeDynamics],
    bounds: &'a AccelBounds,
    spacing: [f64; 3],
    dt: f64,
    scheme: Scheme,
    faces: FaceRule,
    slope: [f64; 3],
}

impl SweepKernel<'_> {
    /// One explicit update from `old` into `new`; returns the sup-norm change.
    fn sweep(&self, old: &[f64], new: &mut [f64]) -> f64 {
        let [_, nv, na] = self.grid.nodes();
        let slab = nv * na;
        new.par_chunks_mut(slab)
            .enumerate()
            .map(|(i, out)| {
                let mut residual = 0.0f64;
                for j in 0..nv {
                    for k in 0..na {
                        let idx = self.grid.index(i, j, k);
                        let updated = self.update(old, idx, [i, j, k]);
                        residual = residual.max(old[idx] - updated);
                        out[j * na + k] = updated;
                    }
                }
                residual
            })
            .reduce(|| 0.0, f64::max)
    }

    #[inline]
    fn update(&self, v: &[f64], idx: usize, pos: [usize; 3]) -> f64 {
        let strides = self.grid.strides();
        let counts = self.grid.nodes();
        let centre = v[idx];
        let nd = &self.nodes[idx];
        let mut back = [0.0; 3];
        let mut fwd = [0.0; 3];
        for d in 0..3 {
            let s = strides[d];
            let step = self.slope[d] * self.spacing[d];
            let below = if pos[d] > 0 {
                v[idx - s]
            } else {
                match self.faces {
                    FaceRule::Linear => 2.0 * centre - v[idx + s],
                    FaceRule::PayoffSlope => centre - step,
                }
            };
            let above = if pos[d] + 1 < counts[d] {
                v[idx + s]
            } else {
                match self.faces {
                    FaceRule::Linear => 2.0 * centre - v[idx - s],
                    FaceRule::PayoffSlope => centre + step,
                }
            };
            back[d] = (centre - below) / self.spacing[d];
            fwd[d] = (above - centre) / self.spacing[d];
        }
        let h = match self.scheme {
            Scheme::Upwind => nd.upwind_hamiltonian(back, fwd, self.bounds),
            Scheme::LaxFriedrichs => {
                let mean = [0, 1, 2].map(|d| 0.5 * (back[d] + fwd[d]));
                let spread: f64 = (0..3).map(|d| 0.5 * nd.dissipation[d] * (fwd[d] - back[d])).sum();
                nd.hamiltonian(mean, self.bounds) + spread
            }
        };
        centre + self.dt * h.min(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::State;

    fn coarse() -> GridSpec {
        GridSpec::with_nodes(15).unwrap()
    }

    #[test]
    fn sweeps_never_increase_values() {
        let opts = SolverOptions { t_max: 5.0, ..Default::default() };
        let mut sweeps = 0;
        let field = solve_with_observer(
            &coarse(),
            SafetyCriterion::Distance,
            &ControllerParams::original(),
            &VehicleModel::default(),
            &AccelBounds::default(),
            &opts,
            |_, old, new| {
                sweeps += 1;
                assert!(old.iter().zip(new).all(|(o, n)| n <= o));
            },
        )
        .unwrap();
        assert_eq!(sweeps, field.stats().iterations);
        assert!(sweeps > 0);
    }

    #[test]
    fn target_nodes_stay_in_target() {
        let grid = coarse();
        let crit = SafetyCriterion::time_headway(0.4).unwrap();
        let opts = SolverOptions { t_max: 5.0, ..Default::default() };
        let field =
            solve(&grid, crit, &ControllerParams::original(), &VehicleModel::default(), &AccelBounds::default(), &opts)
                .unwrap();
        for idx in 0..grid.len() {
            let l = crit.payoff(&grid.node_at(idx));
            let v = field.values()[idx];
            assert!(v <= l);
            if l <= 0.0 {
                assert!(v <= 0.0);
            }
        }
    }

    #[test]
    fn unconverged_run_is_flagged() {
        let opts = SolverOptions { t_max: 0.05, tol: 1e-12, ..Default::default() };
        let field = solve(
            &coarse(),
            SafetyCriterion::Distance,
            &ControllerParams::original(),
            &VehicleModel::default(),
            &AccelBounds::default(),
            &opts,
        )
        .unwrap();
        assert!(!field.converged());
        assert!(field.stats().horizon >= 0.05);
    }

    #[test]
    fn far_gap_at_rest_is_safe() {
        let field = solve(
            &coarse(),
            SafetyCriterion::Distance,
            &ControllerParams::original(),
            &VehicleModel::default(),
            &AccelBounds::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(field.is_safe(&State::new(49.0, 0.0, 0.0), 0.0).is_safe());
    }

    #[test]
    fn rejects_bad_options() {
        let bad = SolverOptions { cfl: 1.5, ..Default::default() };
        assert!(solve(
            &coarse(),
            SafetyCriterion::Distance,
            &ControllerParams::original(),
            &VehicleModel::default(),
            &AccelBounds::default(),
            &bad
        )
        .is_err());
    }
}

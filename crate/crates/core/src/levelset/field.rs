use std::fmt;

use crate::controller::{ControllerParams, State};
use crate::dynamics::{AccelBounds, VehicleModel};
use crate::error::ParamError;

use super::grid::GridSpec;

/// What counts as entering the target (unsafe) set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafetyCriterion {
    /// Payoff `x_rel`: collision when the gap closes.
    Distance,
    /// Payoff `x_rel − h·v_AV`: violation when the time headway drops below `h`.
    TimeHeadway { h: f64 },
}

pub const DEFAULT_MIN_HEADWAY: f64 = 0.4;

impl SafetyCriterion {
    pub fn time_headway(h: f64) -> Result<Self, ParamError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(ParamError::new(format!("minimum headway must be positive, got {h}")));
        }
        Ok(Self::TimeHeadway { h })
    }

    /// Payoff `l(z)`: negative inside the target set, zero on its boundary.
    #[inline]
    pub fn payoff(&self, s: &State) -> f64 {
        match *self {
            SafetyCriterion::Distance => s.x_rel,
            SafetyCriterion::TimeHeadway { h } => s.x_rel - h * s.v_av,
        }
    }

    /// Gradient of the payoff with respect to `(x_rel, v_rel, v_AV)`.
    pub fn payoff_gradient(&self) -> [f64; 3] {
        match *self {
            SafetyCriterion::Distance => [1.0, 0.0, 0.0],
            SafetyCriterion::TimeHeadway { h } => [1.0, 0.0, -h],
        }
    }
}

impl fmt::Display for SafetyCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SafetyCriterion::Distance => f.write_str("distance"),
            SafetyCriterion::TimeHeadway { h } => write!(f, "time-headway {h}"),
        }
    }
}

/// Inputs a field was solved with, kept for provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSetup {
    pub params: ControllerParams,
    pub model: VehicleModel,
    pub bounds: AccelBounds,
    pub tol: f64,
    pub t_max: f64,
    pub cfl: f64,
}

/// Convergence bookkeeping of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change over the final sweep (m).
    pub residual: f64,
    /// Accumulated pseudo-time (s).
    pub horizon: f64,
    /// Pseudo-time step (s).
    pub dt: f64,
}

impl SolveStats {
    fn initial() -> Self {
        Self { iterations: 0, converged: false, residual: f64::INFINITY, horizon: 0.0, dt: 0.0 }
    }
}

/// Result of a point query against a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafetyVerdict {
    Safe { value: f64 },
    Unsafe { value: f64 },
    OutOfDomain,
}

impl SafetyVerdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, SafetyVerdict::Safe { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            SafetyVerdict::Safe { value } | SafetyVerdict::Unsafe { value } => Some(value),
            SafetyVerdict::OutOfDomain => None,
        }
    }
}

/// Value function sampled on a grid. Its sub-zero level set approximates the
/// backward reachable (unsafe) set.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    grid: GridSpec,
    criterion: SafetyCriterion,
    values: Vec<f64>,
    stats: SolveStats,
    setup: Option<SolveSetup>,
}

impl ValueField {
    pub(crate) fn from_parts(
        grid: GridSpec,
        criterion: SafetyCriterion,
        values: Vec<f64>,
        stats: SolveStats,
        setup: Option<SolveSetup>,
    ) -> Self {
        assert_eq!(values.len(), grid.len());
        Self { grid, criterion, values, stats, setup }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn criterion(&self) -> SafetyCriterion {
        self.criterion
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    pub fn setup(&self) -> Option<&SolveSetup> {
        self.setup.as_ref()
    }

    pub fn converged(&self) -> bool {
        self.stats.converged
    }

    pub fn node_value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Trilinear interpolation of the field at `s`; `None` outside the grid.
    pub fn value_at(&self, s: &State) -> Option<f64> {
        let axes = self.grid.axes();
        let (i, fx) = axes[0].locate(s.x_rel)?;
        let (j, fv) = axes[1].locate(s.v_rel)?;
        let (k, fa) = axes[2].locate(s.v_av)?;
        let mut acc = 0.0;
        for (di, wx) in [(0, 1.0 - fx), (1, fx)] {
            for (dj, wv) in [(0, 1.0 - fv), (1, fv)] {
                for (dk, wa) in [(0, 1.0 - fa), (1, fa)] {
                    let w = wx * wv * wa;
                    if w != 0.0 {
                        acc += w * self.node_value(i + di, j + dj, k + dk);
                    }
                }
            }
        }
        Some(acc)
    }

    /// Safe iff the interpolated value exceeds `margin`.
    pub fn is_safe(&self, s: &State, margin: f64) -> SafetyVerdict {
        match self.value_at(s) {
            None => SafetyVerdict::OutOfDomain,
            Some(value) if value > margin => SafetyVerdict::Safe { value },
            Some(value) => SafetyVerdict::Unsafe { value },
        }
    }
}

/// Field holding the payoff `l(z)` at every node.
pub fn initial_payoff(grid: &GridSpec, criterion: SafetyCriterion) -> ValueField {
    let values = (0..grid.len()).map(|idx| criterion.payoff(&grid.node_at(idx))).collect();
    ValueField::from_parts(*grid, criterion, values, SolveStats::initial(), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> GridSpec {
        GridSpec::new([0.0, -2.0, 0.0], [4.0, 2.0, 30.0], [5, 5, 31]).unwrap()
    }

    #[test]
    fn payoff_examples() {
        let g = GridSpec::default();
        let d = initial_payoff(&g, SafetyCriterion::Distance);
        // x_rel = 10 at i = 10
        assert_eq!(d.node_value(10, 7, 33), 10.0);
        let h = SafetyCriterion::time_headway(0.4).unwrap();
        assert_eq!(h.payoff(&State::new(10.0, 0.0, 25.0)), 0.0);
        assert!((h.payoff(&State::new(5.0, 0.0, 20.0)) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_linear_between() {
        let g = small_grid();
        let mut f = initial_payoff(&g, SafetyCriterion::Distance);
        f.values[g.index(1, 2, 3)] = 3.2;
        let node = g.node(1, 2, 3);
        assert_eq!(f.value_at(&node), Some(3.2));
        assert!(f.is_safe(&node, 0.0).is_safe());

        f.values[g.index(2, 2, 3)] = 1.0;
        f.values[g.index(3, 2, 3)] = 3.0;
        let mid = State::new(2.5, node.v_rel, node.v_av);
        let v = f.value_at(&mid).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert!(f.is_safe(&mid, 0.0).is_safe());
    }

    #[test]
    fn negative_value_is_unsafe() {
        let g = small_grid();
        let mut f = initial_payoff(&g, SafetyCriterion::Distance);
        f.values.iter_mut().for_each(|v| *v = -0.1);
        assert!(matches!(f.is_safe(&State::new(1.3, 0.2, 4.4), 0.0), SafetyVerdict::Unsafe { .. }));
    }

    #[test]
    fn margin_is_strict() {
        let g = small_grid();
        let f = initial_payoff(&g, SafetyCriterion::Distance);
        assert!(!f.is_safe(&State::new(1.0, 0.0, 1.0), 1.0).is_safe());
        assert!(f.is_safe(&State::new(1.0, 0.0, 1.0), 0.5).is_safe());
    }

    #[test]
    fn out_of_domain_is_reported() {
        let f = initial_payoff(&small_grid(), SafetyCriterion::Distance);
        assert_eq!(f.is_safe(&State::new(5.0, 0.0, 1.0), 0.0), SafetyVerdict::OutOfDomain);
        assert_eq!(f.value_at(&State::new(1.0, 0.0, -1.0)), None);
    }

    #[test]
    fn rejects_nonpositive_headway() {
        assert!(SafetyCriterion::time_headway(0.0).is_err());
        assert!(SafetyCriterion::time_headway(-0.4).is_err());
    }
}

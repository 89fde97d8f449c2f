//! FollowerStopper command-speed law.
//!
//! The gap axis is split into four zones by three boundaries
//! `x̄_j = ω_j + (v*_rel)² / (2 α_j)` with `v*_rel = min(v_rel, 0)`. The
//! time-headway variant shifts every boundary by `h_j · v_AV`, which makes the
//! commanded following distance grow with ego speed.

use std::fmt;
use std::str::FromStr;

use crate::error::ParamError;

/// Two-car state `(x_rel, v_rel, v_AV)`.
///
/// `v_rel` is lead speed minus ego speed, so the lead speed is
/// `v_rel + v_av`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    /// Gap to the lead vehicle (m).
    pub x_rel: f64,
    /// Lead speed minus ego speed (m/s).
    pub v_rel: f64,
    /// Ego speed (m/s).
    pub v_av: f64,
}

impl State {
    pub const fn new(x_rel: f64, v_rel: f64, v_av: f64) -> Self {
        Self { x_rel, v_rel, v_av }
    }

    #[inline]
    pub fn v_lead(&self) -> f64 {
        self.v_rel + self.v_av
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x_rel, self.v_rel, self.v_av]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Which zone-boundary law the controller uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Boundaries depend on relative speed only.
    Original,
    /// Boundaries additionally grow by `h_j · v_AV`.
    Modified,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Original => "original",
            Variant::Modified => "modified",
        })
    }
}

impl FromStr for Variant {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(Variant::Original),
            "modified" => Ok(Variant::Modified),
            other => Err(ParamError::new(format!("unknown controller variant `{other}`"))),
        }
    }
}

/// FollowerStopper design parameters.
///
/// Construct with [`ControllerParams::new`] (or the `original`/`modified`
/// helpers); the constructor checks all ordering constraints so the control
/// law itself never has to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    omega: [f64; 3],
    alpha: [f64; 3],
    headways: [f64; 3],
    r: f64,
    variant: Variant,
}

pub const DEFAULT_OMEGA: [f64; 3] = [4.5, 5.25, 6.0];
pub const DEFAULT_ALPHA: [f64; 3] = [1.5, 1.0, 0.5];
pub const DEFAULT_HEADWAYS: [f64; 3] = [0.4, 1.2, 1.8];
pub const DEFAULT_SPEED_CAP: f64 = 30.0;

impl ControllerParams {
    pub fn new(
        omega: [f64; 3],
        alpha: [f64; 3],
        headways: [f64; 3],
        r: f64,
        variant: Variant,
    ) -> Result<Self, ParamError> {
        let all = omega.iter().chain(&alpha).chain(&headways).chain(std::iter::once(&r));
        if all.clone().any(|v| !v.is_finite()) {
            return Err(ParamError::new("controller parameters must be finite"));
        }
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(ParamError::new(format!("alpha must be positive, got {alpha:?}")));
        }
        if !(alpha[0] >= alpha[1] && alpha[1] >= alpha[2]) {
            return Err(ParamError::new(format!(
                "alpha must be nonincreasing (alpha1 >= alpha2 >= alpha3), got {alpha:?}"
            )));
        }
        if !(omega[0] < omega[1] && omega[1] < omega[2]) {
            return Err(ParamError::new(format!("omega must be strictly increasing, got {omega:?}")));
        }
        if variant == Variant::Modified {
            if headways.iter().any(|&h| h < 0.0) {
                return Err(ParamError::new(format!("headways must be nonnegative, got {headways:?}")));
            }
            // Nondecreasing is enough for strictly ordered boundaries because
            // omega is strictly increasing; it also admits h = 0 everywhere.
            if !(headways[0] <= headways[1] && headways[1] <= headways[2]) {
                return Err(ParamError::new(format!("headways must be nondecreasing, got {headways:?}")));
            }
        }
        if r <= 0.0 {
            return Err(ParamError::new(format!("speed cap r must be positive, got {r}")));
        }
        Ok(Self { omega, alpha, headways, r, variant })
    }

    /// Original law with the default parameter set.
    pub fn original() -> Self {
        Self::new(DEFAULT_OMEGA, DEFAULT_ALPHA, DEFAULT_HEADWAYS, DEFAULT_SPEED_CAP, Variant::Original)
            .expect("default parameters are valid")
    }

    /// Time-headway law with the default parameter set.
    pub fn modified() -> Self {
        Self::new(DEFAULT_OMEGA, DEFAULT_ALPHA, DEFAULT_HEADWAYS, DEFAULT_SPEED_CAP, Variant::Modified)
            .expect("default parameters are valid")
    }

    pub fn with_variant(self, variant: Variant) -> Result<Self, ParamError> {
        Self::new(self.omega, self.alpha, self.headways, self.r, variant)
    }

    pub fn omega(&self) -> [f64; 3] {
        self.omega
    }

    pub fn alpha(&self) -> [f64; 3] {
        self.alpha
    }

    pub fn headways(&self) -> [f64; 3] {
        self.headways
    }

    pub fn speed_cap(&self) -> f64 {
        self.r
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Zone boundaries `(x̄₁, x̄₂, x̄₃)` at the given relative and ego speed.
    pub fn zone_boundaries(&self, v_rel: f64, v_av: f64) -> [f64; 3] {
        let closing = v_rel.min(0.0);
        let quad = closing * closing;
        let shift = match self.variant {
            Variant::Original => [0.0; 3],
            Variant::Modified => self.headways.map(|h| h * v_av),
        };
        [0, 1, 2].map(|j| self.omega[j] + quad / (2.0 * self.alpha[j]) + shift[j])
    }

    /// Commanded ego speed for state `s`, always in `[0, r]`.
    pub fn command_speed(&self, s: &State) -> f64 {
        let [x1, x2, x3] = self.zone_boundaries(s.v_rel, s.v_av);
        let v = s.v_lead().max(0.0).min(self.r);
        let gap = s.x_rel;
        if gap <= x1 {
            0.0
        } else if gap <= x2 {
            v * (gap - x1) / (x2 - x1)
        } else if gap <= x3 {
            (v + (self.r - v) * (gap - x2) / (x3 - x2)).min(self.r)
        } else {
            self.r
        }
    }
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self::original()
    }
}

//! `key = value` run configuration.
//!
//! ```text
//! # FollowerStopper with a 1.5 s top headway
//! variant = modified
//! h3 = 1.5
//! u_min = -6
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::controller::{ControllerParams, Variant, DEFAULT_ALPHA, DEFAULT_HEADWAYS, DEFAULT_OMEGA, DEFAULT_SPEED_CAP};
use crate::dynamics::{AccelBounds, VehicleModel};
use crate::error::ParamError;
use crate::levelset::{FaceRule, GridSpec, SafetyCriterion, Scheme, SolverOptions, DEFAULT_MIN_HEADWAY};

pub const KNOWN_KEYS: &[&str] = &[
    "omega1",
    "omega2",
    "omega3",
    "alpha1",
    "alpha2",
    "alpha3",
    "h1",
    "h2",
    "h3",
    "r",
    "tau",
    "variant",
    "u_min",
    "u_max",
    "d_min",
    "d_max",
    "bounds",
    "traces",
    "criterion",
    "headway",
    "nodes",
    "tol",
    "t_max",
    "cfl",
    "scheme",
    "faces",
    "seed",
];

/// Where the acceleration bounds come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundsSource {
    Explicit(AccelBounds),
    /// Estimated from the listed trace files.
    FromData(Vec<String>),
}

/// Ordered key/value settings. Later assignments win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ParamError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ParamError::new(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| ParamError::new(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParamError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ParamError::new(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ParamError::new(format!("{}: {e}", path.display())))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ParamError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ParamError::new(format!("unknown config key `{key}`")));
        }
        let value = value.into();
        if value.is_empty() {
            return Err(ParamError::new(format!("`{key}` has no value")));
        }
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Entries of `other` override ours.
    pub fn merged(mut self, other: &Config) -> Self {
        self.entries.extend(other.entries.clone());
        self
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, ParamError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ParamError::new(format!("`{key}` must be a number, got `{v}`"))),
        }
    }

    fn triple(&self, stem: &str, default: [f64; 3]) -> Result<[f64; 3], ParamError> {
        Ok([
            self.number(&format!("{stem}1"), default[0])?,
            self.number(&format!("{stem}2"), default[1])?,
            self.number(&format!("{stem}3"), default[2])?,
        ])
    }

    pub fn controller(&self) -> Result<ControllerParams, ParamError> {
        let variant = match self.get("variant") {
            None => Variant::Original,
            Some(v) => v.parse()?,
        };
        ControllerParams::new(
            self.triple("omega", DEFAULT_OMEGA)?,
            self.triple("alpha", DEFAULT_ALPHA)?,
            self.triple("h", DEFAULT_HEADWAYS)?,
            self.number("r", DEFAULT_SPEED_CAP)?,
            variant,
        )
    }

    pub fn vehicle(&self) -> Result<VehicleModel, ParamError> {
        VehicleModel::new(self.number("tau", VehicleModel::default().tau())?)
    }

    pub fn bounds(&self) -> Result<BoundsSource, ParamError> {
        match self.get("bounds").unwrap_or("explicit") {
            "explicit" => {
                let d = AccelBounds::default();
                Ok(BoundsSource::Explicit(AccelBounds::new(
                    self.number("u_min", d.u_min())?,
                    self.number("u_max", d.u_max())?,
                    self.number("d_min", d.d_min())?,
                    self.number("d_max", d.d_max())?,
                )?))
            }
            "from-data" => {
                let traces: Vec<String> = self
                    .get("traces")
                    .unwrap_or("")
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
                if traces.is_empty() {
                    return Err(ParamError::new("`bounds = from-data` needs at least one trace in `traces`"));
                }
                Ok(BoundsSource::FromData(traces))
            }
            other => Err(ParamError::new(format!("`bounds` must be `explicit` or `from-data`, got `{other}`"))),
        }
    }

    pub fn criterion(&self) -> Result<SafetyCriterion, ParamError> {
        match self.get("criterion").unwrap_or("distance") {
            "distance" => Ok(SafetyCriterion::Distance),
            "headway" | "time-headway" => SafetyCriterion::time_headway(self.number("headway", DEFAULT_MIN_HEADWAY)?),
            other => Err(ParamError::new(format!("`criterion` must be `distance` or `headway`, got `{other}`"))),
        }
    }

    pub fn grid(&self) -> Result<GridSpec, ParamError> {
        let nodes = match self.get("nodes") {
            None => crate::levelset::grid::DEFAULT_NODES,
            Some(v) => v.parse().map_err(|_| ParamError::new(format!("`nodes` must be a count, got `{v}`")))?,
        };
        GridSpec::with_nodes(nodes)
    }

    pub fn solver(&self) -> Result<SolverOptions, ParamError> {
        let d = SolverOptions::default();
        let scheme = match self.get("scheme").unwrap_or("upwind") {
            "upwind" => Scheme::Upwind,
            "lax-friedrichs" | "lf" => Scheme::LaxFriedrichs,
            other => {
                return Err(ParamError::new(format!("`scheme` must be `upwind` or `lax-friedrichs`, got `{other}`")))
            }
        };
        let faces = match self.get("faces").unwrap_or("payoff-slope") {
            "payoff-slope" => FaceRule::PayoffSlope,
            "linear" => FaceRule::Linear,
            other => return Err(ParamError::new(format!("`faces` must be `payoff-slope` or `linear`, got `{other}`"))),
        };
        Ok(SolverOptions {
            tol: self.number("tol", d.tol)?,
            t_max: self.number("t_max", d.t_max)?,
            cfl: self.number("cfl", d.cfl)?,
            scheme,
            faces,
        })
    }

    pub fn seed(&self) -> Result<u64, ParamError> {
        match self.get("seed") {
            None => Ok(0),
            Some(v) => v.parse().map_err(|_| ParamError::new(format!("`seed` must be an integer, got `{v}`"))),
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

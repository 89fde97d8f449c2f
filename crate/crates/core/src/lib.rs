//! Safety verification of car-following controllers by level-set
//! reachability.

pub mod config;
pub mod controller;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod levelset;
pub mod sim;

pub use controller::{ControllerParams, State, Variant};
pub use dynamics::{AccelBounds, VehicleModel};
pub use error::{DataError, FieldIoError, ParamError};

//! Deterministic traffic-game engine.
//!
//! Vehicles on a multi-lane road plan coupled micro paths by maximizing a
//! shared-shape utility (forward progress, smoothness, lane keeping, and
//! sigmoid crash/collision risk premiums) over a kinematic bicycle model.
//! Two solvers are provided:
//!
//! * [`nash`] — iterated best response over full-horizon action sequences,
//!   with unilateral-deviation certification of the resulting equilibrium.
//! * [`adaptive`] — per-tick grid search over an action grid, scoring each
//!   candidate by a worst-case effective utility over a finite look-ahead
//!   anticipation of nearby agents ([`anticipation`]).
//!
//! All numeric code is generic over the [`scalar::Real`] scalar (`f32` or
//! `f64`); the `*64` aliases below fix `f64`, which is what the CLI uses.

pub mod adaptive;
pub mod anticipation;
pub mod dynamics;
pub mod error;
pub mod nash;
pub mod scalar;
mod seeding;
pub mod utility;
pub mod world;

pub use error::{ModelError, Result};
pub use scalar::Real;
pub use world::{AgentId, Barrier, Lanes};

/// `f64` aliases for the most commonly used types.
pub type VehicleState64 = dynamics::VehicleState<f64>;
pub type ActionPair64 = dynamics::ActionPair<f64>;
pub type VehicleGeometry64 = dynamics::VehicleGeometry<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type UtilityParams64 = utility::UtilityParams<f64>;
pub type UtilityWeights64 = utility::UtilityWeights<f64>;
pub type AgentUtilitySpec64 = utility::AgentUtilitySpec<f64>;
pub type AnticipationConfig64 = anticipation::AnticipationConfig<f64>;
pub type Lanes64 = world::Lanes<f64>;
pub type Barrier64 = world::Barrier<f64>;

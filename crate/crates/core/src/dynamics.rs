//! Kinematic bicycle model: slip angle, single-step state evolution, and
//! whole-horizon rollout.
//!
//! The step form is explicit Euler:
//!
//! ```text
//! x'   = x + dt * v * cos(psi + beta)
//! y'   = y + dt * v * sin(psi + beta)
//! psi' = psi + dt * (v/L) * cos(beta) * tan(delta)
//! v'   = max(0, v + dt * alpha)
//! beta = atan((b/L) * tan(delta))
//! ```
//!
//! Speed is clamped at zero; reversing is outside this model. Clamp events
//! are reported so callers can log them.

use crate::error::{ModelError, Result};
use crate::scalar::Real;

/// Rigid-body constants of one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleGeometry<T> {
    wheelbase: T,
    cg_to_rear: T,
    body_width: T,
    body_length: T,
}

impl<T: Real> VehicleGeometry<T> {
    pub fn new(wheelbase: T, cg_to_rear: T, body_width: T, body_length: T) -> Result<Self> {
        for (field, v) in [
            ("wheelbase", wheelbase),
            ("cg_to_rear", cg_to_rear),
            ("body_width", body_width),
            ("body_length", body_length),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite { field });
            }
        }
        if wheelbase <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "wheelbase",
                value: wheelbase.as_f64(),
                constraint: "> 0",
            });
        }
        if cg_to_rear <= T::zero() || cg_to_rear > wheelbase {
            return Err(ModelError::OutOfRange {
                field: "cg_to_rear",
                value: cg_to_rear.as_f64(),
                constraint: "0 < b <= wheelbase",
            });
        }
        if body_width <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "body_width",
                value: body_width.as_f64(),
                constraint: "> 0",
            });
        }
        if body_length <= T::zero() {
            return Err(ModelError::OutOfRange {
                field: "body_length",
                value: body_length.as_f64(),
                constraint: "> 0",
            });
        }
        Ok(Self { wheelbase, cg_to_rear, body_width, body_length })
    }

    /// Geometry with the center of gravity midway between the axles
    /// (`b = L/2`).
    pub fn balanced(wheelbase: T, body_width: T, body_length: T) -> Result<Self> {
        Self::new(wheelbase, wheelbase / T::of(2.0), body_width, body_length)
    }

    pub fn wheelbase(&self) -> T {
        self.wheelbase
    }

    pub fn cg_to_rear(&self) -> T {
        self.cg_to_rear
    }

    pub fn body_width(&self) -> T {
        self.body_width
    }

    pub fn body_length(&self) -> T {
        self.body_length
    }
}

impl<T: Real> Default for VehicleGeometry<T> {
    /// Sedan-sized vehicle: 2.88 m wheelbase, CG midway, 2.0 m wide, 4.5 m long.
    fn default() -> Self {
        Self::new(T::of(2.88), T::of(1.44), T::of(2.0), T::of(4.5)).expect("valid defaults")
    }
}

/// Pose and speed of one vehicle at one tick. Heading is in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState<T> {
    x: T,
    y: T,
    heading: T,
    speed: T,
}

impl<T: Real> VehicleState<T> {
    pub fn new(x: T, y: T, heading: T, speed: T) -> Result<Self> {
        for (field, v) in [("x", x), ("y", y), ("heading", heading), ("speed", speed)] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite { field });
            }
        }
        if speed < T::zero() {
            return Err(ModelError::OutOfRange {
                field: "speed",
                value: speed.as_f64(),
                constraint: ">= 0",
            });
        }
        Ok(Self { x, y, heading, speed })
    }

    pub fn x(&self) -> T {
        self.x
    }

    pub fn y(&self) -> T {
        self.y
    }

    pub fn heading(&self) -> T {
        self.heading
    }

    pub fn speed(&self) -> T {
        self.speed
    }
}

/// One decision: acceleration (m/s^2) and steering angle (radians).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionPair<T> {
    accel: T,
    steer: T,
}

impl<T: Real> ActionPair<T> {
    pub fn new(accel: T, steer: T) -> Result<Self> {
        if !accel.is_finite() {
            return Err(ModelError::NonFinite { field: "accel" });
        }
        if !steer.is_finite() {
            return Err(ModelError::NonFinite { field: "steer" });
        }
        if steer.abs() >= T::FRAC_PI_2() {
            return Err(ModelError::SteeringSingularity { value_rad: steer.as_f64() });
        }
        Ok(Self { accel, steer })
    }

    pub fn zero() -> Self {
        Self { accel: T::zero(), steer: T::zero() }
    }

    pub fn accel(&self) -> T {
        self.accel
    }

    pub fn steer(&self) -> T {
        self.steer
    }
}

/// Outcome of one integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub state: VehicleState<T>,
    /// True when the zero-speed floor clipped the velocity update.
    pub speed_clamped: bool,
}

/// Slip angle `beta = atan((b/L) tan(delta))`.
pub fn slip_angle<T: Real>(geom: &VehicleGeometry<T>, steer: T) -> Result<T> {
    if !steer.is_finite() || steer.abs() >= T::FRAC_PI_2() {
        return Err(ModelError::SteeringSingularity { value_rad: steer.as_f64() });
    }
    Ok(((geom.cg_to_rear / geom.wheelbase) * steer.tan()).atan())
}

/// One explicit-Euler step of the bicycle model, with the speed floor flag.
pub fn step_detailed<T: Real>(
    geom: &VehicleGeometry<T>,
    state: &VehicleState<T>,
    action: &ActionPair<T>,
    dt: T,
) -> Result<StepOutcome<T>> {
    if !dt.is_finite() || dt <= T::zero() {
        return Err(ModelError::OutOfRange {
            field: "dt",
            value: dt.as_f64(),
            constraint: "> 0",
        });
    }
    let beta = slip_angle(geom, action.steer)?;
    let course = state.heading + beta;
    let x = state.x + dt * state.speed * course.cos();
    let y = state.y + dt * state.speed * course.sin();
    let heading =
        state.heading + dt * (state.speed / geom.wheelbase) * beta.cos() * action.steer.tan();
    let raw_speed = state.speed + dt * action.accel;
    let speed_clamped = raw_speed < T::zero();
    let speed = if speed_clamped { T::zero() } else { raw_speed };
    Ok(StepOutcome { state: VehicleState { x, y, heading, speed }, speed_clamped })
}

/// One explicit-Euler step of the bicycle model.
pub fn step<T: Real>(
    geom: &VehicleGeometry<T>,
    state: &VehicleState<T>,
    action: &ActionPair<T>,
    dt: T,
) -> Result<VehicleState<T>> {
    step_detailed(geom, state, action, dt).map(|o| o.state)
}

/// A realized state/action history: `states.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    dt: T,
    states: Vec<VehicleState<T>>,
    actions: Vec<ActionPair<T>>,
}

impl<T: Real> Trajectory<T> {
    /// Build from parts, checking the shape invariant and that every
    /// consecutive state pair reproduces `step` exactly (bitwise).
    pub fn new(
        geom: &VehicleGeometry<T>,
        dt: T,
        states: Vec<VehicleState<T>>,
        actions: Vec<ActionPair<T>>,
    ) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return Err(ModelError::LengthMismatch {
                expected: actions.len() + 1,
                got: states.len(),
            });
        }
        for (i, action) in actions.iter().enumerate() {
            let expect = step(geom, &states[i], action, dt)
                .map_err(|e| ModelError::StepFailed { index: i, source: Box::new(e) })?;
            if expect != states[i + 1] {
                return Err(ModelError::InconsistentTrajectory { index: i });
            }
        }
        Ok(Self { dt, states, actions })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn states(&self) -> &[VehicleState<T>] {
        &self.states
    }

    pub fn actions(&self) -> &[ActionPair<T>] {
        &self.actions
    }

    /// Number of actions (steps) in the trajectory.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn initial_state(&self) -> &VehicleState<T> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &VehicleState<T> {
        self.states.last().expect("states nonempty by construction")
    }

    pub(crate) fn from_rollout(dt: T, states: Vec<VehicleState<T>>, actions: Vec<ActionPair<T>>) -> Self {
        debug_assert_eq!(states.len(), actions.len() + 1);
        Self { dt, states, actions }
    }
}

/// Roll a state forward under an action sequence. Deterministic; fails with
/// the offending index if any step fails.
pub fn rollout<T: Real>(
    geom: &VehicleGeometry<T>,
    initial: &VehicleState<T>,
    actions: &[ActionPair<T>],
    dt: T,
) -> Result<Trajectory<T>> {
    if actions.is_empty() {
        return Err(ModelError::EmptyActions);
    }
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(*initial);
    for (i, action) in actions.iter().enumerate() {
        let next = step(geom, states.last().expect("nonempty"), action, dt)
            .map_err(|e| ModelError::StepFailed { index: i, source: Box::new(e) })?;
        states.push(next);
    }
    Ok(Trajectory::from_rollout(dt, states, actions.to_vec()))
}

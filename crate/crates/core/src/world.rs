//! Shared road-world types: agent identifiers, lane geometry, and the barrier.

use crate::error::{ModelError, Result};
use crate::scalar::Real;

/// Index-style agent identifier, unique within one scenario.
#[derive(Clone, Copy, Debug, Hash, PartialEq, Eq, PartialOrd, Ord)]
pub struct AgentId(pub usize);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "agent{}", self.0)
    }
}

/// Lane center-line y offsets, stored sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Lanes<T> {
    centers: Vec<T>,
}

impl<T: Real> Lanes<T> {
    pub fn new(mut centers: Vec<T>) -> Result<Self> {
        if centers.is_empty() {
            return Err(ModelError::EmptyLanes);
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::NonFinite { field: "lane center" });
        }
        centers.sort_by(|a, b| a.partial_cmp(b).expect("finite lane centers"));
        Ok(Self { centers })
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    /// Center closest to `y`; ties resolve to the lower lane.
    pub fn nearest_center(&self, y: T) -> T {
        let mut best = self.centers[0];
        let mut best_d = (y - best).abs();
        for &c in &self.centers[1..] {
            let d = (y - c).abs();
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        best
    }

    /// The first center strictly on the given side of `y` (`direction > 0`
    /// means above), or `None` at the road edge.
    pub fn next_center_toward(&self, y: T, direction: T) -> Option<T> {
        if direction > T::zero() {
            self.centers.iter().copied().find(|&c| c > y)
        } else if direction < T::zero() {
            self.centers.iter().rev().copied().find(|&c| c < y)
        } else {
            None
        }
    }

    /// Lowest lane center.
    pub fn bottom(&self) -> T {
        self.centers[0]
    }
}

/// A barrier blocking one lane from `x` onward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barrier<T> {
    /// Longitudinal position of the obstruction.
    pub x: T,
    /// Center-line y of the blocked lane.
    pub blocked_lane_y: T,
}

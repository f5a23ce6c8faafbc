//! Touchdown detection and the plastic impact map.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{BodyPoint, Coords, FullState, RobotModel};

/// Bracket width at which a touchdown time is accepted (s).
pub const EVENT_TIME_TOLERANCE: f64 = 1e-9;

/// Touchdown guard: swing foot descending through the surface late enough in
/// the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchGuard {
    /// Phase below which crossings are ignored; `None` accepts any phase.
    pub min_phase: Option<f64>,
}

impl Default for SwitchGuard {
    fn default() -> Self {
        Self { min_phase: Some(0.5) }
    }
}

impl SwitchGuard {
    /// Whether the swing height went from above the surface to at or below
    /// it while descending.
    pub fn crossed(&self, height_before: f64, height_after: f64, vertical_velocity: f64, phase: f64) -> bool {
        let late_enough = self.min_phase.map_or(true, |m| phase > m);
        late_enough && height_before > 0.0 && height_after <= 0.0 && vertical_velocity < 0.0
    }
}

/// Bisect a sign change of `height` on `[lo, hi]` (`height(lo) > 0`,
/// `height(hi) <= 0`) down to `tol`; returns the upper end of the final
/// bracket, where the height is at or just below zero.
pub fn bisect_touchdown(mut height: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if height(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Outcome of the impact map.
#[derive(Debug, Clone)]
pub struct ImpactResult {
    pub post: FullState,
    /// Impulse on the landing foot (N s, world frame).
    pub impulse: Vector2<f64>,
    /// `true` if the surface would have to pull the foot down.
    pub pulling: bool,
}

/// Plastic touchdown of the swing foot on a surface moving at `surface_velocity`:
/// impulsive force at the landing foot only, post-impact foot velocity equal to
/// the surface velocity. Positions are continuous and the legs swap roles.
pub fn impact_reset(model: &RobotModel, pre: &FullState, surface_velocity: f64) -> Result<ImpactResult> {
    let landing = pre.stance.swing().foot();
    let m = dynamics::mass_matrix(model, &pre.q);
    let chol = m.cholesky().ok_or(Error::SingularConfiguration { condition: f64::INFINITY })?;
    let j = dynamics::point_jacobian(model, &pre.q, landing);
    let jmj = j * chol.solve(&j.transpose());
    let lambda = jmj.try_inverse().ok_or(Error::SingularConfiguration { condition: f64::INFINITY })?;
    let target = Vector2::new(surface_velocity, 0.0);
    let impulse = lambda * (target - j * pre.qdot);
    let qdot: Coords = pre.qdot + chol.solve(&(j.transpose() * impulse));
    Ok(ImpactResult {
        post: FullState {
            q: pre.q,
            qdot,
            stance: pre.stance.swing(),
            t: pre.t,
            step_index: pre.step_index + 1,
        },
        impulse,
        pulling: impulse.y < 0.0,
    })
}

/// Swing-foot height and vertical velocity.
pub fn swing_height(model: &RobotModel, state: &FullState) -> (f64, f64) {
    let foot = state.stance.swing().foot();
    let p = dynamics::point_position(model, &state.q, foot);
    let v = dynamics::point_jacobian(model, &state.q, foot) * state.qdot;
    (p.y, v.y)
}

/// Total linear momentum.
pub fn momentum(model: &RobotModel, state: &FullState) -> Vector2<f64> {
    model.total_mass() * dynamics::point_jacobian(model, &state.q, BodyPoint::Com) * state.qdot
}

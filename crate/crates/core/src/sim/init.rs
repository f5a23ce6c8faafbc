//! Full-order initial state matching a reduced-order state.

use nalgebra::{SMatrix, SVector, Vector2};

use crate::alip::AlipState;
use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{BodyPoint, Coords, FullState, Link, RobotModel, StanceLeg, NDOF};
use crate::surface::SurfaceMotion;

type Square = SMatrix<f64, NDOF, NDOF>;
type Residual = SVector<f64, NDOF>;

const IK_TOLERANCE: f64 = 1e-12;
const IK_MAX_ITERS: usize = 100;

/// Where the robot should start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialPose {
    pub alip: AlipState,
    pub com_height: f64,
    pub trunk_pitch: f64,
    /// Horizontal offset of the swing foot from the stance foot (m).
    pub swing_offset: f64,
    pub stance: StanceLeg,
}

/// Two-link inverse kinematics with the knee bent forward; returns absolute
/// thigh angle and relative knee angle for a foot at `d` from the hip.
fn leg_ik(l1: f64, l2: f64, d: Vector2<f64>) -> (f64, f64) {
    let r = d.norm().clamp((l1 - l2).abs() + 1e-9, l1 + l2 - 1e-9);
    let cos_knee = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = -cos_knee.acos();
    let beta = d.x.atan2(-d.y);
    let thigh = beta - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
    (thigh, knee)
}

fn leg_slots(stance: StanceLeg) -> (usize, usize) {
    match stance {
        StanceLeg::Left => (3, 5),
        StanceLeg::Right => (5, 3),
    }
}

fn residual(model: &RobotModel, q: &Coords, pose: &InitialPose, stance_x: f64) -> Residual {
    let st = dynamics::point_position(model, q, pose.stance.foot());
    let sw = dynamics::point_position(model, q, pose.stance.swing().foot());
    let com = dynamics::point_position(model, q, BodyPoint::Com);
    Residual::from_column_slice(&[
        st.x - stance_x,
        st.y,
        com.x - (stance_x + pose.alip.x_sc),
        com.y - pose.com_height,
        q[2] - pose.trunk_pitch,
        sw.x - (stance_x + pose.swing_offset),
        sw.y,
    ])
}

fn residual_jacobian(model: &RobotModel, q: &Coords, pose: &InitialPose) -> Square {
    let st = dynamics::point_jacobian(model, q, pose.stance.foot());
    let sw = dynamics::point_jacobian(model, q, pose.stance.swing().foot());
    let com = dynamics::point_jacobian(model, q, BodyPoint::Com);
    let mut j = Square::zeros();
    j.set_row(0, &st.row(0));
    j.set_row(1, &st.row(1));
    j.set_row(2, &com.row(0));
    j.set_row(3, &com.row(1));
    j[(4, 2)] = 1.0;
    j.set_row(5, &sw.row(0));
    j.set_row(6, &sw.row(1));
    j
}

/// Configuration with the stance foot on the surface at `x_S(0)`, the CoM at
/// `(x_S(0) + x_SC, H)`, the given trunk pitch, and the swing foot on the
/// surface at the given offset. Velocities put both feet at the surface
/// velocity, hold pitch and CoM height, and give the requested `L_S`.
pub fn initialize_full_state(model: &RobotModel, pose: &InitialPose, surface: &SurfaceMotion) -> Result<FullState> {
    model.validate()?;
    let stance_x = surface.position(0.0);
    let (st_slot, sw_slot) = leg_slots(pose.stance);
    let thigh = model.link(Link::LeftThigh).length;
    let shank = model.link(Link::LeftShank).length;

    // Seed: hip under the CoM, lowered by the trunk's share of the CoM offset.
    let trunk = model.link(Link::Trunk);
    let lift = trunk.mass * trunk.com_offset / model.total_mass();
    let hip = Vector2::new(
        stance_x + pose.alip.x_sc + lift * pose.trunk_pitch.sin(),
        pose.com_height - lift * pose.trunk_pitch.cos(),
    );
    let mut q = Coords::zeros();
    q[0] = hip.x;
    q[1] = hip.y;
    q[2] = pose.trunk_pitch;
    for (slot, foot_x) in [(st_slot, stance_x), (sw_slot, stance_x + pose.swing_offset)] {
        let (phi, knee) = leg_ik(thigh, shank, Vector2::new(foot_x, 0.0) - hip);
        q[slot] = phi - pose.trunk_pitch;
        q[slot + 1] = knee;
    }

    let mut r = residual(model, &q, pose, stance_x);
    let mut damping = 1e-6;
    for _ in 0..IK_MAX_ITERS {
        if r.amax() < IK_TOLERANCE {
            break;
        }
        let j = residual_jacobian(model, &q, pose);
        let jt = j.transpose();
        let step = (jt * j + damping * Square::identity())
            .cholesky()
            .map(|c| c.solve(&(jt * r)))
            .unwrap_or_else(Residual::zeros);
        let trial = q - step;
        let rt = residual(model, &trial, pose, stance_x);
        if rt.norm() < r.norm() {
            q = trial;
            r = rt;
            damping = (damping * 0.1).max(1e-12);
        } else {
            damping *= 10.0;
            if damping > 1e6 {
                break;
            }
        }
    }
    // Knees must stay bent forward so the nominal pose is reachable by the
    // controller without passing through a straight knee.
    if r.amax() > 1e-9 || q[st_slot + 1] >= 0.0 || q[sw_slot + 1] >= 0.0 {
        let mut nearest = [0.0; 7];
        nearest.copy_from_slice(q.as_slice());
        return Err(Error::InverseKinematics { residual: r.norm(), nearest });
    }

    let vs = surface.velocity(0.0);
    let st = dynamics::point_jacobian(model, &q, pose.stance.foot());
    let sw = dynamics::point_jacobian(model, &q, pose.stance.swing().foot());
    let com = dynamics::point_jacobian(model, &q, BodyPoint::Com);
    let foot = dynamics::point_position(model, &q, pose.stance.foot());
    let lrow = dynamics::angular_momentum_row(model, &q, &foot);
    let mut a = Square::zeros();
    a.set_row(0, &st.row(0));
    a.set_row(1, &st.row(1));
    a.set_row(2, &sw.row(0));
    a.set_row(3, &sw.row(1));
    a[(4, 2)] = 1.0;
    a.set_row(5, &com.row(1));
    a.set_row(6, &lrow);
    let b = Residual::from_column_slice(&[vs, 0.0, vs, 0.0, 0.0, 0.0, pose.alip.l_s]);
    let qdot = a.lu().solve(&b).ok_or(Error::SingularConfiguration { condition: f64::INFINITY })?;

    Ok(FullState { q, qdot, stance: pose.stance, t: 0.0, step_index: 0 })
}

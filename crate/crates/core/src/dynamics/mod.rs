//! Floating-base rigid-body dynamics of the planar biped.
//!
//! The model is a kinematic tree of seven bodies: two massless virtual bodies
//! carrying the base x/y translation, the trunk (base pitch), and the two
//! thigh/shank chains. Body `i` is driven by generalized coordinate `i`, so the
//! body index doubles as the DOF index. Everything is expressed in world
//! coordinates, so no frame transforms appear in the recursions.
//!
//! The mass matrix comes from the composite-rigid-body algorithm and the bias
//! vector from recursive Newton-Euler with zero joint acceleration.

pub mod spatial;

use nalgebra::{SMatrix, Vector2};

use crate::error::Result;
use crate::model::{BodyPoint, Coords, Link, RobotModel, NDOF};
use spatial::{Force, Inertia, Motion};

pub type MassMatrix = SMatrix<f64, NDOF, NDOF>;
pub type PointJacobian = SMatrix<f64, 2, NDOF>;

const NB: usize = NDOF;

const PARENT: [Option<usize>; NB] = [None, Some(0), Some(1), Some(2), Some(3), Some(2), Some(5)];

const BODY_LINK: [Option<Link>; NB] = [
    None,
    None,
    Some(Link::Trunk),
    Some(Link::LeftThigh),
    Some(Link::LeftShank),
    Some(Link::RightThigh),
    Some(Link::RightShank),
];

const LINK_BODY: [usize; 5] = [2, 3, 4, 5, 6];

/// Unit vector along a leg link with absolute angle `phi` (zero = pointing down).
#[inline]
fn leg_axis(phi: f64) -> Vector2<f64> {
    Vector2::new(phi.sin(), -phi.cos())
}

/// Unit vector along the trunk (zero pitch = pointing up).
#[inline]
fn trunk_axis(theta: f64) -> Vector2<f64> {
    Vector2::new(-theta.sin(), theta.cos())
}

/// Position-level kinematics of every body for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// Absolute orientation of each body.
    pub angle: [f64; NB],
    /// Joint pivot of each body (virtual bodies: base origin).
    pub pivot: [Vector2<f64>; NB],
    /// CoM of each body (virtual bodies: unused).
    pub com: [Vector2<f64>; NB],
    pub subspace: [Motion; NB],
    pub left_foot: Vector2<f64>,
    pub right_foot: Vector2<f64>,
}

impl Kinematics {
    pub fn new(model: &RobotModel, q: &Coords) -> Self {
        let hip = Vector2::new(q[0], q[1]);
        let theta = q[2];
        let mut angle = [0.0; NB];
        angle[2] = theta;
        angle[3] = theta + q[3];
        angle[4] = angle[3] + q[4];
        angle[5] = theta + q[5];
        angle[6] = angle[5] + q[6];

        let lt = model.link(Link::LeftThigh);
        let ls = model.link(Link::LeftShank);
        let rt = model.link(Link::RightThigh);
        let rs = model.link(Link::RightShank);
        let trunk = model.link(Link::Trunk);

        let left_knee = hip + lt.length * leg_axis(angle[3]);
        let right_knee = hip + rt.length * leg_axis(angle[5]);
        let pivot = [hip, hip, hip, hip, left_knee, hip, right_knee];

        let com = [
            hip,
            hip,
            hip + trunk.com_offset * trunk_axis(theta),
            hip + lt.com_offset * leg_axis(angle[3]),
            left_knee + ls.com_offset * leg_axis(angle[4]),
            hip + rt.com_offset * leg_axis(angle[5]),
            right_knee + rs.com_offset * leg_axis(angle[6]),
        ];

        let mut subspace = [Motion::zeros(); NB];
        subspace[0] = Motion::new(0.0, 1.0, 0.0);
        subspace[1] = Motion::new(0.0, 0.0, 1.0);
        for i in 2..NB {
            subspace[i] = spatial::revolute_axis(&pivot[i]);
        }

        Self {
            angle,
            left_foot: left_knee + ls.length * leg_axis(angle[4]),
            right_foot: right_knee + rs.length * leg_axis(angle[6]),
            pivot,
            com,
            subspace,
        }
    }

    /// Body carrying `point` and its world position. `None` for the CoM.
    fn locate(&self, point: BodyPoint) -> Option<(usize, Vector2<f64>)> {
        match point {
            BodyPoint::LeftFoot => Some((4, self.left_foot)),
            BodyPoint::RightFoot => Some((6, self.right_foot)),
            BodyPoint::Trunk => Some((2, self.com[2])),
            BodyPoint::Hip => Some((2, self.pivot[2])),
            BodyPoint::Com => None,
        }
    }

    fn inertias(&self, model: &RobotModel) -> [Inertia; NB] {
        let mut out = [Inertia::zeros(); NB];
        for (i, link) in BODY_LINK.iter().enumerate() {
            if let Some(link) = link {
                let spec = model.link(*link);
                out[i] = spatial::inertia(spec.mass, &self.com[i], spec.inertia_zz);
            }
        }
        out
    }
}

/// Spatial velocities and velocity-product accelerations of all bodies.
struct Motions {
    vel: [Motion; NB],
    /// Acceleration with zero joint acceleration, excluding gravity.
    bias: [Motion; NB],
}

fn forward_motions(kin: &Kinematics, qdot: &Coords) -> Motions {
    let mut vel = [Motion::zeros(); NB];
    let mut bias = [Motion::zeros(); NB];
    for i in 0..NB {
        let (vp, ap) = match PARENT[i] {
            Some(p) => (vel[p], bias[p]),
            None => (Motion::zeros(), Motion::zeros()),
        };
        vel[i] = vp + kin.subspace[i] * qdot[i];
        bias[i] = ap + spatial::cross_motion(&vel[i], &kin.subspace[i]) * qdot[i];
    }
    Motions { vel, bias }
}

fn ancestors(body: usize) -> impl Iterator<Item = usize> {
    std::iter::successors(Some(body), |&b| PARENT[b])
}

/// Joint-space inertia matrix `M(q)` (composite-rigid-body algorithm).
pub fn mass_matrix(model: &RobotModel, q: &Coords) -> MassMatrix {
    let kin = Kinematics::new(model, q);
    let mut composite = kin.inertias(model);
    for i in (1..NB).rev() {
        if let Some(p) = PARENT[i] {
            let ci = composite[i];
            composite[p] += ci;
        }
    }
    let mut m = MassMatrix::zeros();
    for i in 0..NB {
        let f = composite[i] * kin.subspace[i];
        for j in ancestors(i) {
            let mij = kin.subspace[j].dot(&f);
            m[(i, j)] = mij;
            m[(j, i)] = mij;
        }
    }
    m
}

/// Recursive Newton-Euler inverse dynamics: `M(q) qddot + c(q, qdot)`.
pub fn inverse_dynamics(model: &RobotModel, q: &Coords, qdot: &Coords, qddot: &Coords) -> Coords {
    let kin = Kinematics::new(model, q);
    let inertias = kin.inertias(model);
    let gravity = Motion::new(0.0, 0.0, model.gravity);

    let mut vel = [Motion::zeros(); NB];
    let mut acc = [Motion::zeros(); NB];
    let mut force = [Force::zeros(); NB];
    for i in 0..NB {
        let (vp, ap) = match PARENT[i] {
            Some(p) => (vel[p], acc[p]),
            None => (Motion::zeros(), gravity),
        };
        let s = kin.subspace[i];
        vel[i] = vp + s * qdot[i];
        acc[i] = ap + spatial::cross_motion(&vel[i], &s) * qdot[i] + s * qddot[i];
        let h = inertias[i] * vel[i];
        force[i] = inertias[i] * acc[i] + spatial::cross_force(&vel[i], &h);
    }
    let mut tau = Coords::zeros();
    for i in (0..NB).rev() {
        tau[i] = kin.subspace[i].dot(&force[i]);
        if let Some(p) = PARENT[i] {
            let fi = force[i];
            force[p] += fi;
        }
    }
    tau
}

/// Gravity, Coriolis and centrifugal terms `c(q, qdot)`.
pub fn bias_forces(model: &RobotModel, q: &Coords, qdot: &Coords) -> Coords {
    inverse_dynamics(model, q, qdot, &Coords::zeros())
}

pub fn point_position(model: &RobotModel, q: &Coords, point: BodyPoint) -> Vector2<f64> {
    let kin = Kinematics::new(model, q);
    point_position_with(model, &kin, point)
}

fn point_position_with(model: &RobotModel, kin: &Kinematics, point: BodyPoint) -> Vector2<f64> {
    match kin.locate(point) {
        Some((_, p)) => p,
        None => {
            let mut acc = Vector2::zeros();
            for (l, &b) in LINK_BODY.iter().enumerate() {
                acc += model.links[l].mass * kin.com[b];
            }
            acc / model.total_mass()
        }
    }
}

fn body_point_jacobian(kin: &Kinematics, body: usize, p: &Vector2<f64>) -> PointJacobian {
    let mut jac = PointJacobian::zeros();
    for j in ancestors(body) {
        jac.set_column(j, &spatial::point_velocity(&kin.subspace[j], p));
    }
    jac
}

/// `J = dp/dq` for one of the named points.
pub fn point_jacobian(model: &RobotModel, q: &Coords, point: BodyPoint) -> PointJacobian {
    let kin = Kinematics::new(model, q);
    point_jacobian_with(model, &kin, point)
}

/// Same as [`point_jacobian`] with the point given by name, e.g. `"left_foot"`.
pub fn point_jacobian_by_name(model: &RobotModel, q: &Coords, name: &str) -> Result<PointJacobian> {
    Ok(point_jacobian(model, q, name.parse()?))
}

fn point_jacobian_with(model: &RobotModel, kin: &Kinematics, point: BodyPoint) -> PointJacobian {
    match kin.locate(point) {
        Some((b, p)) => body_point_jacobian(kin, b, &p),
        None => {
            let mut jac = PointJacobian::zeros();
            for (l, &b) in LINK_BODY.iter().enumerate() {
                jac += model.links[l].mass * body_point_jacobian(kin, b, &kin.com[b]);
            }
            jac / model.total_mass()
        }
    }
}

/// Velocity-product term `Jdot * qdot` of a point's acceleration.
pub fn point_bias_acceleration(
    model: &RobotModel,
    q: &Coords,
    qdot: &Coords,
    point: BodyPoint,
) -> Vector2<f64> {
    let kin = Kinematics::new(model, q);
    let mo = forward_motions(&kin, qdot);
    point_bias_with(model, &kin, &mo, point)
}

fn point_bias_with(model: &RobotModel, kin: &Kinematics, mo: &Motions, point: BodyPoint) -> Vector2<f64> {
    match kin.locate(point) {
        Some((b, p)) => spatial::point_acceleration(&mo.vel[b], &mo.bias[b], &p),
        None => {
            let mut acc = Vector2::zeros();
            for (l, &b) in LINK_BODY.iter().enumerate() {
                acc += model.links[l].mass * spatial::point_acceleration(&mo.vel[b], &mo.bias[b], &kin.com[b]);
            }
            acc / model.total_mass()
        }
    }
}

/// Everything the controller needs about one configuration, computed once.
#[derive(Debug, Clone)]
pub struct PointKinematics {
    pub position: Vector2<f64>,
    pub jacobian: PointJacobian,
    /// `Jdot * qdot`.
    pub bias: Vector2<f64>,
}

impl PointKinematics {
    pub fn velocity(&self, qdot: &Coords) -> Vector2<f64> {
        self.jacobian * qdot
    }
}

/// Positions, Jacobians and bias accelerations of several points in one pass.
pub fn points_kinematics<const N: usize>(
    model: &RobotModel,
    q: &Coords,
    qdot: &Coords,
    points: [BodyPoint; N],
) -> [PointKinematics; N] {
    let kin = Kinematics::new(model, q);
    let mo = forward_motions(&kin, qdot);
    points.map(|p| PointKinematics {
        position: point_position_with(model, &kin, p),
        jacobian: point_jacobian_with(model, &kin, p),
        bias: point_bias_with(model, &kin, &mo, p),
    })
}

/// CoM position and velocity (world frame).
pub fn com_state(model: &RobotModel, q: &Coords, qdot: &Coords) -> (Vector2<f64>, Vector2<f64>) {
    let kin = Kinematics::new(model, q);
    let p = point_position_with(model, &kin, BodyPoint::Com);
    let v = point_jacobian_with(model, &kin, BodyPoint::Com) * qdot;
    (p, v)
}

/// Angular momentum about an inertially fixed point coinciding with `point`.
///
/// Sign convention matches the reduced-order model: positive when the robot
/// pitches forward over the point (x forward, z up, moment about the lateral
/// axis), i.e. the negative of the counter-clockwise component. For a point
/// mass at height `h` above the point moving forward at `v`, `L = m h v`.
pub fn angular_momentum_about(model: &RobotModel, q: &Coords, qdot: &Coords, point: &Vector2<f64>) -> f64 {
    let kin = Kinematics::new(model, q);
    let mo = forward_motions(&kin, qdot);
    let mut ccw = 0.0;
    for (l, &b) in LINK_BODY.iter().enumerate() {
        let spec = &model.links[l];
        let vc = spatial::point_velocity(&mo.vel[b], &kin.com[b]);
        ccw += spec.mass * spatial::cross2(&(kin.com[b] - point), &vc) + spec.inertia_zz * mo.vel[b][0];
    }
    -ccw
}

/// Row `dL/dqdot` of the (linear-in-velocity) angular momentum about `point`.
pub fn angular_momentum_row(model: &RobotModel, q: &Coords, point: &Vector2<f64>) -> SMatrix<f64, 1, NDOF> {
    let mut row = SMatrix::<f64, 1, NDOF>::zeros();
    for j in 0..NDOF {
        let mut e = Coords::zeros();
        e[j] = 1.0;
        row[j] = angular_momentum_about(model, q, &e, point);
    }
    row
}

pub fn kinetic_energy(model: &RobotModel, q: &Coords, qdot: &Coords) -> f64 {
    0.5 * qdot.dot(&(mass_matrix(model, q) * qdot))
}

pub fn potential_energy(model: &RobotModel, q: &Coords) -> f64 {
    let kin = Kinematics::new(model, q);
    LINK_BODY
        .iter()
        .enumerate()
        .map(|(l, &b)| model.links[l].mass * model.gravity * kin.com[b].y)
        .sum()
}

pub fn total_energy(model: &RobotModel, q: &Coords, qdot: &Coords) -> f64 {
    kinetic_energy(model, q, qdot) + potential_energy(model, q)
}

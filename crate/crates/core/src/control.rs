//! Stance-phase dynamics under the moving-surface contact constraint and the
//! input-output linearizing controller built on it.

use nalgebra::{Cholesky, Matrix2, SMatrix, Vector2, Vector4, U7};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, MassMatrix, PointJacobian};
use crate::error::{Error, Result};
use crate::model::{BodyPoint, Coords, RobotModel, StanceLeg, NACT, NDOF};
use crate::pattern::DesiredSample;
use crate::surface::SurfaceMotion;

pub type OutputJacobian = SMatrix<f64, 4, NDOF>;
pub type Actuation = SMatrix<f64, NDOF, NACT>;

/// Names of the controlled outputs, in order.
pub const OUTPUT_NAMES: [&str; 4] = ["com_height", "trunk_pitch", "swing_x", "swing_z"];

/// Largest accepted condition number of the contact inertia `J M^-1 J^T`.
pub const CONTACT_CONDITION_LIMIT: f64 = 1e10;
/// Largest accepted condition number of the decoupling matrix.
pub const DECOUPLING_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self { kp: 2500.0, kd: 100.0 }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp > 0.0 && self.kd > 0.0 && self.kp.is_finite() && self.kd.is_finite()) {
            return Err(Error::InvalidConfig(format!("control gains must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Joint torques enter only the four joint rows.
pub fn actuation_matrix() -> Actuation {
    let mut b = Actuation::zeros();
    for i in 0..NACT {
        b[(3 + i, i)] = 1.0;
    }
    b
}

/// Controlled outputs `h_c(q)`, their Jacobian and `Hdot qdot`.
#[derive(Debug, Clone)]
pub struct ControlOutputs {
    pub h: Vector4<f64>,
    pub jacobian: OutputJacobian,
    pub bias: Vector4<f64>,
}

/// `[z_CoM, pitch, x_sw - x_st, z_sw - z_st]`; the surface is the line `y = 0`.
pub fn control_outputs(model: &RobotModel, q: &Coords, qdot: &Coords, stance: StanceLeg) -> ControlOutputs {
    let [st, sw, com] = dynamics::points_kinematics(model, q, qdot, [stance.foot(), stance.swing().foot(), BodyPoint::Com]);
    let mut jacobian = OutputJacobian::zeros();
    jacobian.set_row(0, &com.jacobian.row(1));
    jacobian[(1, 2)] = 1.0;
    let rel: PointJacobian = sw.jacobian - st.jacobian;
    jacobian.set_row(2, &rel.row(0));
    jacobian.set_row(3, &rel.row(1));
    let d = sw.position - st.position;
    let db = sw.bias - st.bias;
    ControlOutputs {
        h: Vector4::new(com.position.y, q[2], d.x, d.y),
        jacobian,
        bias: Vector4::new(com.bias.y, 0.0, db.x, db.y),
    }
}

/// Equations of motion with the stance foot pinned to the surface,
/// `M qddot + c_bar = B_bar tau`.
#[derive(Debug, Clone)]
pub struct ConstrainedDynamics {
    pub mass: MassMatrix,
    chol: Cholesky<f64, U7>,
    pub bias: Coords,
    pub c_bar: Coords,
    pub b_bar: Actuation,
    pub contact_jacobian: PointJacobian,
    /// `Jdot qdot` of the stance foot.
    pub contact_bias: Vector2<f64>,
    /// `(J M^-1 J^T)^-1`.
    pub contact_inertia: Matrix2<f64>,
    /// Surface acceleration imposed on the foot.
    pub surface_acceleration: Vector2<f64>,
    pub contact_condition: f64,
}

fn sym2_condition(m: &Matrix2<f64>) -> f64 {
    let e = m.symmetric_eigenvalues();
    let (lo, hi) = (e.min(), e.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn constrained_dynamics(
    model: &RobotModel,
    q: &Coords,
    qdot: &Coords,
    stance: StanceLeg,
    t: f64,
    surface: &SurfaceMotion,
) -> Result<ConstrainedDynamics> {
    let mass = dynamics::mass_matrix(model, q);
    let bias = dynamics::bias_forces(model, q, qdot);
    let [foot] = dynamics::points_kinematics(model, q, qdot, [stance.foot()]);
    let chol = mass
        .cholesky()
        .ok_or(Error::SingularConfiguration { condition: f64::INFINITY })?;
    let j = foot.jacobian;
    let minv_jt = chol.solve(&j.transpose());
    let jmj = j * minv_jt;
    let condition = sym2_condition(&jmj);
    if !(condition <= CONTACT_CONDITION_LIMIT) {
        return Err(Error::SingularConfiguration { condition });
    }
    let lambda = jmj.try_inverse().ok_or(Error::SingularConfiguration { condition })?;
    let accel = Vector2::new(surface.acceleration(t), 0.0);
    let b = actuation_matrix();
    let c_bar = bias - j.transpose() * (lambda * (j * chol.solve(&bias) - foot.bias + accel));
    let b_bar = b - j.transpose() * (lambda * (j * chol.solve(&b)));
    Ok(ConstrainedDynamics {
        mass,
        chol,
        bias,
        c_bar,
        b_bar,
        contact_jacobian: j,
        contact_bias: foot.bias,
        contact_inertia: lambda,
        surface_acceleration: accel,
        contact_condition: condition,
    })
}

impl ConstrainedDynamics {
    pub fn solve_mass(&self, rhs: &Coords) -> Coords {
        self.chol.solve(rhs)
    }

    pub fn acceleration(&self, tau: &Vector4<f64>) -> Coords {
        self.chol.solve(&(self.b_bar * tau - self.c_bar))
    }

    /// Contact force on the stance foot (world frame) that keeps it on the surface.
    pub fn contact_force(&self, tau: &Vector4<f64>) -> Vector2<f64> {
        let b = actuation_matrix();
        let free = self.chol.solve(&(b * tau - self.bias));
        self.contact_inertia * (self.surface_acceleration - self.contact_bias - self.contact_jacobian * free)
    }
}

/// Output errors, torque and diagnostics of one control evaluation.
#[derive(Debug, Clone)]
pub struct ControlAction {
    pub tau: Vector4<f64>,
    pub y: Vector4<f64>,
    pub ydot: Vector4<f64>,
    /// Commanded output acceleration `-Kp y - Kd ydot`.
    pub v: Vector4<f64>,
    /// Desired output acceleration `h_d'' / T^2`.
    pub desired_acceleration: Vector4<f64>,
    pub decoupling_condition: f64,
}

/// Name of the output whose Jacobian row is closest to the span of the others.
fn least_independent_output(a: &SMatrix<f64, 4, 4>) -> &'static str {
    let mut worst = (f64::INFINITY, 0);
    for i in 0..4 {
        let row = a.row(i).transpose();
        let others = a.remove_row(i).transpose();
        let proj = others.svd(true, false);
        let u = proj.u.unwrap();
        let mut residual = row;
        for (k, sv) in proj.singular_values.iter().enumerate() {
            if *sv > 1e-12 * proj.singular_values.max() {
                let col = u.column(k);
                residual -= col * col.dot(&row);
            }
        }
        let score = residual.norm() / row.norm().max(1e-300);
        if score < worst.0 {
            worst = (score, i);
        }
    }
    OUTPUT_NAMES[worst.1]
}

fn matrix_condition(a: &SMatrix<f64, 4, 4>) -> f64 {
    let sv = a.singular_values();
    let lo = sv.min();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / lo
    }
}

/// Torque that makes the outputs obey `yddot = -Kp y - Kd ydot`, with the
/// desired curve coefficients held fixed over the evaluation.
pub fn io_linearizing_torque(
    dynamics: &ConstrainedDynamics,
    outputs: &ControlOutputs,
    qdot: &Coords,
    desired: &DesiredSample,
    period: f64,
    gains: &ControlGains,
) -> Result<ControlAction> {
    let hd = Vector4::from(desired.value);
    let hd_rate = Vector4::from(desired.d1) / period;
    let hd_acc = Vector4::from(desired.d2) / (period * period);
    let y = outputs.h - hd;
    let ydot = outputs.jacobian * qdot - hd_rate;
    let v = -gains.kp * y - gains.kd * ydot;

    let minv_bbar = dynamics.chol.solve(&dynamics.b_bar);
    let decoupling: SMatrix<f64, 4, 4> = outputs.jacobian * minv_bbar;
    let condition = matrix_condition(&decoupling);
    if !(condition <= DECOUPLING_CONDITION_LIMIT) {
        return Err(Error::DecouplingSingular { output: least_independent_output(&decoupling) });
    }
    let drift = outputs.jacobian * dynamics.chol.solve(&dynamics.c_bar) - outputs.bias + hd_acc + v;
    let tau = decoupling
        .lu()
        .solve(&drift)
        .ok_or(Error::DecouplingSingular { output: least_independent_output(&decoupling) })?;
    Ok(ControlAction { tau, y, ydot, v, desired_acceleration: hd_acc, decoupling_condition: condition })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stance_pose() -> Coords {
        Coords::from_column_slice(&[0.0, 0.78, 0.0, 0.25, -0.5, -0.25, -0.1])
    }

    #[test]
    fn pitch_row_selects_base_angle() {
        let model = RobotModel::default();
        let out = control_outputs(&model, &stance_pose(), &Coords::zeros(), StanceLeg::Left);
        let row: Vec<f64> = out.jacobian.row(1).iter().copied().collect();
        assert_eq!(row, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn coincident_feet_have_zero_swing_offset() {
        let model = RobotModel::default();
        let q = Coords::from_column_slice(&[0.0, 0.7, 0.0, 0.2, -0.4, 0.2, -0.4]);
        let out = control_outputs(&model, &q, &Coords::zeros(), StanceLeg::Right);
        assert!(out.h[2].abs() < 1e-15 && out.h[3].abs() < 1e-15);
    }

    #[test]
    fn actuation_structure() {
        let b = actuation_matrix();
        assert_eq!(b.rows(0, 3), SMatrix::<f64, 3, 4>::zeros());
        assert_eq!(b.rows(3, 4), SMatrix::<f64, 4, 4>::identity());
    }

    #[test]
    fn rejects_nonpositive_gains() {
        assert!(ControlGains { kp: 0.0, kd: 1.0 }.validate().is_err());
        ControlGains::default().validate().unwrap();
    }

    #[test]
    fn singular_decoupling_names_an_output() {
        let mut a = SMatrix::<f64, 4, 4>::identity();
        a.set_row(3, &(a.row(2) * 2.0));
        let name = least_independent_output(&a);
        assert!(name == "swing_x" || name == "swing_z");
    }
}

//! Planar spatial vector algebra.
//!
//! Motion vectors are `[omega, v_x, v_y]` and force vectors `[n, f_x, f_y]`,
//! both expressed in world coordinates about the world origin. Angular
//! components are counter-clockwise positive (out of the x-y plane).

use nalgebra::{Matrix3, Vector2, Vector3};

pub type Motion = Vector3<f64>;
pub type Force = Vector3<f64>;
pub type Inertia = Matrix3<f64>;

/// `z x p` for an in-plane vector `p`.
#[inline]
pub fn perp(p: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-p.y, p.x)
}

/// Scalar (out-of-plane) cross product `a x b`.
#[inline]
pub fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// `v x m` for motion vectors.
#[inline]
pub fn cross_motion(v: &Motion, m: &Motion) -> Motion {
    Motion::new(0.0, -v[0] * m[2] + m[0] * v[2], v[0] * m[1] - m[0] * v[1])
}

/// `v x* f` for a force vector.
#[inline]
pub fn cross_force(v: &Motion, f: &Force) -> Force {
    Force::new(v[1] * f[2] - v[2] * f[1], -v[0] * f[2], v[0] * f[1])
}

/// Spatial inertia about the world origin of a body with CoM at `com`.
pub fn inertia(mass: f64, com: &Vector2<f64>, izz: f64) -> Inertia {
    let (cx, cy) = (com.x, com.y);
    Matrix3::new(
        izz + mass * (cx * cx + cy * cy),
        -mass * cy,
        mass * cx,
        -mass * cy,
        mass,
        0.0,
        mass * cx,
        0.0,
        mass,
    )
}

/// Motion subspace of a revolute joint with its axis through `pivot`.
#[inline]
pub fn revolute_axis(pivot: &Vector2<f64>) -> Motion {
    Motion::new(1.0, pivot.y, -pivot.x)
}

/// Linear velocity of the body-fixed point currently at `p`.
#[inline]
pub fn point_velocity(v: &Motion, p: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(v[1], v[2]) + v[0] * perp(p)
}

/// Classical linear acceleration of the body-fixed point at `p`, given the
/// body's spatial velocity `v` and spatial acceleration `a`.
#[inline]
pub fn point_acceleration(v: &Motion, a: &Motion, p: &Vector2<f64>) -> Vector2<f64> {
    let pdot = point_velocity(v, p);
    Vector2::new(a[1], a[2]) + a[0] * perp(p) + v[0] * perp(&pdot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_cross_is_dual_of_motion_cross() {
        let v = Motion::new(0.7, -1.2, 0.4);
        let m = Motion::new(-0.3, 2.0, 1.1);
        let f = Force::new(1.5, -0.2, 0.9);
        let lhs = cross_motion(&v, &m).dot(&f);
        let rhs = -m.dot(&cross_force(&v, &f));
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn inertia_gives_momentum_of_point_mass() {
        let com = Vector2::new(0.3, -0.8);
        let i = inertia(2.0, &com, 0.0);
        let v = Motion::new(1.5, 0.2, -0.4);
        let h = i * v;
        let vc = point_velocity(&v, &com);
        assert!((h[1] - 2.0 * vc.x).abs() < 1e-14);
        assert!((h[2] - 2.0 * vc.y).abs() < 1e-14);
        assert!((h[0] - 2.0 * cross2(&com, &vc)).abs() < 1e-14);
    }
}

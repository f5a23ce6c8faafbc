use drswalk::dynamics::{self, Kinematics};
use drswalk::model::{swap_legs, BodyPoint, Coords, RobotModel, NDOF};
use nalgebra::{SMatrix, SymmetricEigen, Vector2};
use proptest::prelude::*;

fn coords(v: [f64; 7]) -> Coords {
    Coords::from_column_slice(&v)
}

fn arb_q() -> impl Strategy<Value = Coords> {
    (
        -1.0..1.0f64,
        0.3..1.0f64,
        -0.6..0.6f64,
        -1.2..1.2f64,
        -1.5..0.0f64,
        -1.2..1.2f64,
        -1.5..0.0f64,
    )
        .prop_map(|(a, b, c, d, e, f, g)| coords([a, b, c, d, e, f, g]))
}

fn arb_qdot() -> impl Strategy<Value = Coords> {
    proptest::array::uniform7(-2.0..2.0f64).prop_map(coords)
}

/// Independent route: M = sum m Jc^T Jc + I Jw^T Jw with Jacobians by
/// central differences of the forward kinematics.
fn mass_matrix_oracle(model: &RobotModel, q: &Coords) -> SMatrix<f64, 7, 7> {
    let h = 1e-6;
    let mut m = SMatrix::<f64, 7, 7>::zeros();
    for (l, body) in [2usize, 3, 4, 5, 6].into_iter().enumerate() {
        let spec = model.links[l];
        let mut jc = SMatrix::<f64, 2, 7>::zeros();
        let mut jw = SMatrix::<f64, 1, 7>::zeros();
        for j in 0..NDOF {
            let mut qp = *q;
            let mut qm = *q;
            qp[j] += h;
            qm[j] -= h;
            let (kp, km) = (Kinematics::new(model, &qp), Kinematics::new(model, &qm));
            jc.set_column(j, &((kp.com[body] - km.com[body]) / (2.0 * h)));
            jw[j] = (kp.angle[body] - km.angle[body]) / (2.0 * h);
        }
        m += spec.mass * jc.transpose() * jc + spec.inertia_zz * jw.transpose() * jw;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mass_matrix_symmetric_positive_definite(q in arb_q()) {
        let model = RobotModel::default();
        let m = dynamics::mass_matrix(&model, &q);
        prop_assert!((m - m.transpose()).norm() < 1e-12);
        prop_assert!(m.cholesky().is_some());
    }

    #[test]
    fn mass_matrix_matches_lagrangian_route(q in arb_q()) {
        let model = RobotModel::default();
        let m = dynamics::mass_matrix(&model, &q);
        let oracle = mass_matrix_oracle(&model, &q);
        prop_assert!((m - oracle).norm() < 1e-6 * m.norm());
    }

    #[test]
    fn point_jacobians_match_finite_differences(q in arb_q(), qd in arb_qdot()) {
        let model = RobotModel::default();
        for point in [BodyPoint::LeftFoot, BodyPoint::RightFoot, BodyPoint::Com, BodyPoint::Trunk, BodyPoint::Hip] {
            let j = dynamics::point_jacobian(&model, &q, point);
            let h = 1e-6;
            let fd = (dynamics::point_position(&model, &(q + h * qd), point)
                - dynamics::point_position(&model, &(q - h * qd), point)) / (2.0 * h);
            let v = j * qd;
            prop_assert!((v - fd).norm() <= 1e-6 * (1.0 + v.norm()), "{point:?}: {v} vs {fd}");
        }
    }

    #[test]
    fn jacobian_rate_matches_finite_differences(q in arb_q(), qd in arb_qdot()) {
        let model = RobotModel::default();
        for point in [BodyPoint::LeftFoot, BodyPoint::RightFoot, BodyPoint::Com] {
            let analytic = dynamics::point_bias_acceleration(&model, &q, &qd, point);
            let h = 1e-6;
            let jp = dynamics::point_jacobian(&model, &(q + h * qd), point);
            let jm = dynamics::point_jacobian(&model, &(q - h * qd), point);
            let fd = (jp - jm) / (2.0 * h) * qd;
            prop_assert!((analytic - fd).norm() <= 1e-5 * (1.0 + fd.norm()), "{point:?}: {analytic} vs {fd}");
        }
    }

    #[test]
    fn angular_momentum_transfer_identity(q in arb_q(), qd in arb_qdot(),
                                          ax in -1.0..1.0f64, ay in -1.0..1.0f64,
                                          bx in -1.0..1.0f64, by in -1.0..1.0f64) {
        let model = RobotModel::default();
        let (a, b) = (Vector2::new(ax, ay), Vector2::new(bx, by));
        let la = dynamics::angular_momentum_about(&model, &q, &qd, &a);
        let lb = dynamics::angular_momentum_about(&model, &q, &qd, &b);
        let (_, v) = dynamics::com_state(&model, &q, &qd);
        let m = model.total_mass();
        // Lateral-axis component of p_{B->A} x (m v), x forward / z up.
        let p = a - b;
        let transfer = p.y * m * v.x - p.x * m * v.y;
        prop_assert!((lb - (la + transfer)).abs() < 1e-10 * (1.0 + la.abs()));
    }

    #[test]
    fn leg_swap_preserves_inertia_spectrum(q in arb_q()) {
        let model = RobotModel::default();
        let m1 = dynamics::mass_matrix(&model, &q);
        let m2 = dynamics::mass_matrix(&model, &swap_legs(&q));
        let mut e1: Vec<f64> = SymmetricEigen::new(m1).eigenvalues.iter().copied().collect();
        let mut e2: Vec<f64> = SymmetricEigen::new(m2).eigenvalues.iter().copied().collect();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        for (x, y) in e1.iter().zip(&e2) {
            prop_assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn bias_at_rest_ignores_velocity_scaling(q in arb_q(), alpha in -10.0..10.0f64) {
        let model = RobotModel::default();
        let c0 = dynamics::bias_forces(&model, &q, &Coords::zeros());
        let ca = dynamics::bias_forces(&model, &q, &(alpha * Coords::zeros()));
        prop_assert_eq!(c0, ca);
    }
}

/// Lagrangian route for the bias vector:
/// c = Mdot qd - 1/2 d(qd^T M qd)/dq + dV/dq, derivatives by central differences.
#[test]
fn bias_forces_match_lagrangian_route() {
    let model = RobotModel::default();
    let q = coords([0.1, 0.6, 0.1, 0.5, -0.9, -0.3, -0.4]);
    let qd = coords([0.4, -0.3, 0.8, -1.2, 1.5, 0.7, -0.6]);
    let h = 1e-6;
    let mdot = (dynamics::mass_matrix(&model, &(q + h * qd)) - dynamics::mass_matrix(&model, &(q - h * qd))) / (2.0 * h);
    let mut grad_t = Coords::zeros();
    let mut grad_v = Coords::zeros();
    for j in 0..NDOF {
        let mut qp = q;
        let mut qm = q;
        qp[j] += h;
        qm[j] -= h;
        grad_t[j] = (qd.dot(&(dynamics::mass_matrix(&model, &qp) * qd)) - qd.dot(&(dynamics::mass_matrix(&model, &qm) * qd)))
            / (4.0 * h);
        grad_v[j] = (dynamics::potential_energy(&model, &qp) - dynamics::potential_energy(&model, &qm)) / (2.0 * h);
    }
    let oracle = mdot * qd - grad_t + grad_v;
    let c = dynamics::bias_forces(&model, &q, &qd);
    assert!((c - oracle).norm() < 1e-5 * (1.0 + c.norm()), "{c} vs {oracle}");
}

fn flight_rhs(model: &RobotModel, q: &Coords, qd: &Coords) -> Coords {
    let m = dynamics::mass_matrix(model, q);
    let c = dynamics::bias_forces(model, q, qd);
    m.cholesky().unwrap().solve(&(-c))
}

#[test]
fn passive_flight_conserves_energy() {
    let model = RobotModel::default();
    let mut q = coords([0.0, 1.0, 0.2, 0.6, -0.8, -0.4, -0.3]);
    let mut qd = coords([0.5, 1.0, 1.5, -2.0, 3.0, 2.5, -1.5]);
    let e0 = dynamics::total_energy(&model, &q, &qd);
    let dt = 1e-4;
    for _ in 0..10_000 {
        let k1q = qd;
        let k1v = flight_rhs(&model, &q, &qd);
        let k2q = qd + 0.5 * dt * k1v;
        let k2v = flight_rhs(&model, &(q + 0.5 * dt * k1q), &k2q);
        let k3q = qd + 0.5 * dt * k2v;
        let k3v = flight_rhs(&model, &(q + 0.5 * dt * k2q), &k3q);
        let k4q = qd + dt * k3v;
        let k4v = flight_rhs(&model, &(q + dt * k3q), &k4q);
        q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        qd += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    let e1 = dynamics::total_energy(&model, &q, &qd);
    assert!((e1 - e0).abs() < 1e-6, "energy drift {:e}", e1 - e0);
}

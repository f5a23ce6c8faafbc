use drswalk::alip::{self, AlipState, FootstepPolicy, GaitConfig};
use drswalk::optimizer::{self, GaitStyle, OptimizerConfig};
use drswalk::surface::SurfaceMotion;
use drswalk::Error;

fn config(period: f64, surface: SurfaceMotion) -> GaitConfig {
    GaitConfig { com_height: 0.81, period, mass: 39.8, gravity: 9.81, surface }
}

fn case_a() -> (GaitConfig, OptimizerConfig) {
    (config(0.4, SurfaceMotion::sway(0.03, 0.4)), OptimizerConfig::default())
}

fn case_b() -> (GaitConfig, OptimizerConfig) {
    (
        config(0.2, SurfaceMotion::sway(0.03, 0.2)),
        OptimizerConfig { gait_style: GaitStyle::StepInPlace, ..OptimizerConfig::default() },
    )
}

fn check_solution(cfg: &GaitConfig, opt: &OptimizerConfig) -> optimizer::GaitSolution {
    let sol = optimizer::optimize_gait(cfg, opt, 1).unwrap();
    let rho = alip::spectral_radius(&alip::monodromy(&sol.policy, cfg));
    assert!(rho < opt.eigen_cap, "rho {rho}");
    assert_eq!(optimizer::constraint_violation(&sol.policy, cfg, opt), 0.0);
    assert!((sol.spectral_radius() - rho).abs() < 1e-12);
    let k = sol.policy.gain;
    assert!((sol.cost - (k[0] * k[0] + k[1] * k[1])).abs() < 1e-15);
    sol.verify().unwrap();
    // On the induced orbit the commanded step is u*.
    let pre = alip::orbit_preimpact(&sol.policy, cfg).unwrap();
    assert!((alip::footstep_command(&pre, &sol.policy) - sol.policy.u_star).abs() < 1e-5);
    sol
}

#[test]
fn case_a_meets_multiplier_cap() {
    let (cfg, opt) = case_a();
    let sol = check_solution(&cfg, &opt);
    assert!((sol.policy.u_star - 0.2).abs() < 1e-12);
}

#[test]
fn case_b_meets_multiplier_cap() {
    let (cfg, opt) = case_b();
    let sol = check_solution(&cfg, &opt);
    assert!(sol.policy.u_star.abs() < 1e-12);
}

#[test]
fn result_is_deterministic() {
    let (cfg, opt) = case_a();
    let a = optimizer::optimize_gait(&cfg, &opt, 42).unwrap();
    let b = optimizer::optimize_gait(&cfg, &opt, 42).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn best_cost_never_increases_across_penalty_rounds() {
    let (cfg, opt) = case_b();
    let report = optimizer::optimize_gait_traced(&cfg, &opt, 3).unwrap();
    for w in report.best_cost_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn looser_cap_never_costs_more() {
    let cfg = config(0.4, SurfaceMotion::stationary());
    let mut last = f64::INFINITY;
    for cap in [0.2, 0.4, 0.8] {
        let opt = OptimizerConfig { eigen_cap: cap, gait_style: GaitStyle::StepInPlace, ..OptimizerConfig::default() };
        let sol = optimizer::optimize_gait(&cfg, &opt, 0).unwrap();
        assert!(sol.cost <= last + 1e-9, "cap {cap}: {} > {last}", sol.cost);
        last = sol.cost;
    }
}

#[test]
fn feasible_initial_guess_is_never_worsened() {
    let (cfg, _) = case_a();
    let (u, x) = optimizer::gait_style_targets(GaitStyle::ForwardWalk, &cfg, 0.2).unwrap();
    let guess = FootstepPolicy { gain: [0.9, 0.01], u_star: u, x_star: x };
    let opt = OptimizerConfig { initial_guess: Some(guess), ..OptimizerConfig::default() };
    assert_eq!(optimizer::constraint_violation(&guess, &cfg, &opt), 0.0);
    let sol = optimizer::optimize_gait(&cfg, &opt, 0).unwrap();
    assert!(sol.cost <= 0.9 * 0.9 + 0.01 * 0.01);
}

/// Exhaustive grid over K in [-5, 5]^2 at 0.01 on a still surface, stepping
/// in place. The optimizer must not be beaten by any grid point, and the grid
/// minimum must be within one cell of the optimizer's cost.
#[test]
fn step_in_place_matches_grid_search() {
    let cfg = config(0.4, SurfaceMotion::stationary());
    let opt = OptimizerConfig { gait_style: GaitStyle::StepInPlace, ..OptimizerConfig::default() };
    let sol = optimizer::optimize_gait(&cfg, &opt, 0).unwrap();
    assert_eq!(sol.policy.u_star, 0.0);
    assert_eq!(sol.policy.x_star, AlipState::ZERO);

    let mut grid_best = f64::INFINITY;
    for i in -500..=500 {
        for j in -500..=500 {
            let k = [i as f64 * 0.01, j as f64 * 0.01];
            let p = FootstepPolicy { gain: k, u_star: 0.0, x_star: AlipState::ZERO };
            if optimizer::constraint_violation(&p, &cfg, &opt) == 0.0 {
                grid_best = grid_best.min(k[0] * k[0] + k[1] * k[1]);
            }
        }
    }
    assert!(sol.cost <= grid_best + 1e-12, "{} vs grid {grid_best}", sol.cost);
    assert!(grid_best - sol.cost < 2.0 * 0.01 * (1.0 + sol.cost.sqrt()), "{} vs grid {grid_best}", sol.cost);
}

#[test]
fn zero_gain_is_never_returned() {
    let (cfg, _) = case_a();
    let opt = OptimizerConfig { eigen_cap: 0.999, ..OptimizerConfig::default() };
    let sol = optimizer::optimize_gait(&cfg, &opt, 0).unwrap();
    assert!(sol.policy.gain != [0.0, 0.0]);
    let zero = FootstepPolicy { gain: [0.0, 0.0], ..sol.policy };
    assert!(optimizer::constraint_violation(&zero, &cfg, &opt) > 4.0232 - 0.999 - 1e-3);
}

#[test]
fn bounds_excluding_the_gait_are_infeasible() {
    let (cfg, opt) = case_a();
    // The forward-walk orbit needs L about 19 kg m^2/s before impact.
    let opt = OptimizerConfig { x_max: AlipState::new(0.7, 5.0), ..opt };
    match optimizer::optimize_gait(&cfg, &opt, 0) {
        Err(Error::Infeasible { violation }) => assert!(violation > 0.0),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn tiny_cap_is_reachable_with_deadbeat_gain() {
    let (cfg, opt) = case_a();
    let opt = OptimizerConfig { eigen_cap: 1e-4, ..opt };
    let sol = optimizer::optimize_gait(&cfg, &opt, 0).unwrap();
    assert!(sol.spectral_radius() < 1e-4);
}

#[test]
fn solution_round_trips_through_json() {
    let (cfg, opt) = case_b();
    let sol = optimizer::optimize_gait(&cfg, &opt, 5).unwrap();
    let text = serde_json::to_string_pretty(&sol).unwrap();
    let back: optimizer::GaitSolution = serde_json::from_str(&text).unwrap();
    assert_eq!(back, sol);
    back.verify().unwrap();
}

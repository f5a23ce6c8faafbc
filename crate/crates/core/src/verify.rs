//! The acceptance checks, with their tolerances pinned here so the test
//! suite and the command line report the same numbers.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alip::{self, AlipState, FootstepPolicy, GaitConfig};
use crate::config::{Preset, RunConfig};
use crate::dynamics;
use crate::error::Result;
use crate::model::{BodyPoint, Coords, RobotModel};
use crate::optimizer::{self, GaitSolution};
use crate::sim::{self, SimTrace};

pub const UNCONTROLLED_TOLERANCE: f64 = 1e-6;
pub const UNCONTROLLED_RUNTIME: Duration = Duration::from_secs(1);
pub const REFERENCE_EIGEN_CAP: f64 = 0.69;
pub const OPTIMIZER_RUNTIME: Duration = Duration::from_secs(60);
pub const CONTRACTION_PERTURBATION: f64 = 0.05;
pub const CONTRACTION_STEPS: usize = 30;
pub const CONTRACTION_SLACK: f64 = 0.05;
pub const MIN_STEPS: usize = 20;
pub const PREIMPACT_TOLERANCE: f64 = 0.05;
pub const SIM_RUNTIME: Duration = Duration::from_secs(60);
pub const FOOTSTEP_TOLERANCE: f64 = 0.05;
pub const PLANAR_RATE_TOLERANCE: f64 = 0.05;
pub const EXACT_RATE_TOLERANCE: f64 = 1e-3;
pub const IMPACT_TOLERANCE: f64 = 1e-9;
pub const LINEARIZATION_TOLERANCE: f64 = 1e-4;
pub const PITCH_PERTURBATION: f64 = 0.02;
pub const PERTURBATION_WINDOW: f64 = 0.15;
pub const ENVELOPE_TOLERANCE: f64 = 0.2;
pub const FLIGHT_ENERGY_TOLERANCE: f64 = 1e-6;
pub const JACOBIAN_TOLERANCE: f64 = 1e-6;
pub const RANDOM_STATES: usize = 100;
pub const DYNAMICS_RUNTIME: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}: {}", self.id, self.name, self.measured)
    }
}

/// Optimized gait and closed-loop run of one configuration.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub preset: Preset,
    pub config: RunConfig,
    /// Policy under test; differs from the optimized one when a gain is injected.
    pub policy: FootstepPolicy,
    /// Whether the optimizer returned a gait.
    pub optimized: bool,
    pub solution: Option<GaitSolution>,
    pub trace: Option<SimTrace>,
    /// Why the optimizer or the simulation could not produce a result.
    pub error: Option<String>,
    pub optimize_time: Duration,
    pub simulate_time: Duration,
}

impl CaseRun {
    /// Optimize, then simulate. With `gain` the optimized gain is replaced before
    /// the stability checks and the simulation.
    pub fn execute(config: RunConfig, gain: Option<[f64; 2]>) -> Self {
        let mut run = CaseRun {
            preset: config.preset,
            policy: FootstepPolicy { gain: [0.0; 2], u_star: 0.0, x_star: AlipState::ZERO },
            config,
            optimized: false,
            solution: None,
            trace: None,
            error: None,
            optimize_time: Duration::ZERO,
            simulate_time: Duration::ZERO,
        };
        let start = Instant::now();
        let solved = optimizer::optimize_gait(&run.config.gait, &run.config.optimizer, run.config.seed);
        run.optimize_time = start.elapsed();
        let mut solution = match solved {
            Ok(s) => s,
            Err(e) => {
                run.error = Some(format!("optimizer: {e}"));
                return run;
            }
        };
        if let Some(k) = gain {
            solution.policy.gain = k;
            solution.eigenvalues = alip::eigenvalues_2x2(&alip::monodromy(&solution.policy, &solution.config));
        }
        run.optimized = true;
        run.policy = solution.policy;
        if solution.verify().is_err() {
            run.error = Some("policy has no stable periodic orbit".into());
            return run;
        }
        let start = Instant::now();
        let traced = run.config.scenario(solution.clone()).and_then(|s| sim::run_scenario(&s));
        run.simulate_time = start.elapsed();
        match traced {
            Ok(t) => run.trace = Some(t),
            Err(e) => run.error = Some(format!("simulation: {e}")),
        }
        run.solution = Some(solution);
        run
    }

    fn label(&self) -> String {
        self.preset.to_string()
    }

    fn missing(&self) -> String {
        format!("{}: {}", self.label(), self.error.as_deref().unwrap_or("no result"))
    }
}

fn combine(id: u8, name: &'static str, parts: Vec<(bool, String)>) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed: !parts.is_empty() && parts.iter().all(|p| p.0),
        measured: parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; "),
    }
}

/// Zero gain: multipliers must be `exp(+-omega T)`.
pub fn uncontrolled_instability(cfg: &GaitConfig) -> CriterionResult {
    let start = Instant::now();
    let zero = FootstepPolicy { gain: [0.0; 2], u_star: 0.0, x_star: AlipState::ZERO };
    let mut mods: Vec<f64> = alip::eigenvalues_2x2(&alip::monodromy(&zero, cfg)).iter().map(|m| m.modulus()).collect();
    mods.sort_by(f64::total_cmp);
    let wt = cfg.omega() * cfg.period;
    let err = (mods[0] - (-wt).exp()).abs().max((mods[1] - wt.exp()).abs());
    let elapsed = start.elapsed();
    combine(
        1,
        "uncontrolled ALIP instability",
        vec![(
            err < UNCONTROLLED_TOLERANCE && elapsed < UNCONTROLLED_RUNTIME,
            format!("|mu| = {{{:.6}, {:.6}}}, error {err:.2e}, {elapsed:.2?}", mods[1], mods[0]),
        )],
    )
}

pub fn optimizer_constraints(runs: &[&CaseRun]) -> CriterionResult {
    let parts = runs
        .iter()
        .map(|r| {
            if !r.optimized {
                return (false, r.missing());
            }
            let cfg = &r.config.gait;
            let rho = alip::spectral_radius(&alip::monodromy(&r.policy, cfg));
            let opt = &r.config.optimizer;
            let violation = optimizer::constraint_violation(&r.policy, cfg, opt);
            let cap = opt.eigen_cap.min(REFERENCE_EIGEN_CAP);
            (
                rho < cap && violation == 0.0 && r.optimize_time < OPTIMIZER_RUNTIME,
                format!("{}: rho {rho:.6}, violation {violation:.1e}, {:.2?}", r.label(), r.optimize_time),
            )
        })
        .collect();
    combine(2, "optimizer constraints", parts)
}

/// Deviation in units where both state components are lengths.
fn scaled_deviation(a: &AlipState, b: &AlipState, cfg: &GaitConfig) -> f64 {
    let s = 1.0 / (cfg.mass * cfg.com_height * cfg.omega());
    (a.x_sc - b.x_sc).hypot((a.l_s - b.l_s) * s)
}

/// Per-step contraction of a reduced-model perturbation of the orbit start.
pub fn alip_contraction(runs: &[&CaseRun]) -> CriterionResult {
    let parts = runs
        .iter()
        .map(|r| {
            let Some(sol) = &r.solution else { return (false, r.missing()) };
            let cfg = &sol.config;
            let orbit = &sol.periodic_orbit;
            let rho = sol.spectral_radius();
            let x0 = AlipState::new(orbit.post_impact.x_sc + CONTRACTION_PERTURBATION, orbit.post_impact.l_s);
            let trace = match alip::simulate_hybrid_alip(&x0, &r.policy, cfg, CONTRACTION_STEPS) {
                Ok(t) => t,
                Err(e) => return (false, format!("{}: {e}", r.label())),
            };
            let mut dev = vec![scaled_deviation(&x0, &orbit.post_impact, cfg)];
            dev.extend(trace.steps.iter().map(|s| scaled_deviation(&s.post, &orbit.post_impact, cfg)));
            let worst = dev.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            let mean = (dev[dev.len() - 1] / dev[0]).powf(1.0 / (dev.len() - 1) as f64);
            (
                mean <= rho + CONTRACTION_SLACK,
                format!("{}: mean ratio {mean:.4}, worst step {worst:.4}, bound {:.4}", r.label(), rho + CONTRACTION_SLACK),
            )
        })
        .collect();
    combine(3, "closed-loop ALIP contraction", parts)
}

pub fn full_order_stability(id: u8, run: &CaseRun) -> CriterionResult {
    let name = if id == 4 { "full-order stability, case A" } else { "full-order stability, case B" };
    let Some(trace) = &run.trace else { return combine(id, name, vec![(false, run.missing())]) };
    let s = trace.summary();
    let part = (
        s.failure.is_none()
            && s.steps_completed >= MIN_STEPS
            && s.stable
            && s.max_preimpact_deviation < PREIMPACT_TOLERANCE
            && run.simulate_time < SIM_RUNTIME,
        format!(
            "{} steps, max |x_SC| {:.4}, max |L_S| {:.3}, pre-impact deviation {:.4}, {:.2?}{}",
            s.steps_completed,
            s.max_abs_x_sc,
            s.max_abs_l_s,
            s.max_preimpact_deviation,
            run.simulate_time,
            s.failure.as_ref().map(|f| format!(", failure: {f}")).unwrap_or_default()
        ),
    );
    combine(id, name, vec![part])
}

pub fn footstep_tracking(runs: &[&CaseRun]) -> CriterionResult {
    let parts = runs
        .iter()
        .map(|r| {
            let Some(trace) = &r.trace else { return (false, r.missing()) };
            match trace.summary().mean_footstep_error {
                Some(e) => (e < FOOTSTEP_TOLERANCE, format!("{}: mean |u - u*| {e:.4}", r.label())),
                None => (false, format!("{}: fewer than 10 steps", r.label())),
            }
        })
        .collect();
    combine(6, "footstep tracking", parts)
}

pub fn momentum_rate_identity(runs: &[&CaseRun]) -> CriterionResult {
    let parts = runs
        .iter()
        .map(|r| {
            let Some(trace) = &r.trace else { return (false, r.missing()) };
            let m = trace.summary().momentum_rate;
            (
                m.samples > 0 && m.planar_relative_rms < PLANAR_RATE_TOLERANCE && m.exact_relative_rms < EXACT_RATE_TOLERANCE,
                format!(
                    "{}: planar RMS {:.3}% of peak, exact relative RMS {:.2e}",
                    r.label(),
                    100.0 * m.planar_relative_rms,
                    m.exact_relative_rms
                ),
            )
        })
        .collect();
    combine(7, "stance angular-momentum rate", parts)
}

pub fn impact_invariants(runs: &[&CaseRun]) -> CriterionResult {
    let parts = runs
        .iter()
        .map(|r| {
            let Some(trace) = &r.trace else { return (false, r.missing()) };
            let s = trace.summary();
            (
                !trace.impacts.is_empty()
                    && s.max_impact_momentum_change <= IMPACT_TOLERANCE
                    && s.max_transfer_residual <= IMPACT_TOLERANCE,
                format!(
                    "{}: {} impacts, max |dL| {:.1e}, transfer residual {:.1e}",
                    r.label(),
                    trace.impacts.len(),
                    s.max_impact_momentum_change,
                    s.max_transfer_residual
                ),
            )
        })
        .collect();
    combine(8, "impact invariants", parts)
}

/// Largest deviation of the pitch error after a trunk tilt from the
/// critically damped response, relative to the initial error.
pub fn pitch_perturbation_envelope(run: &CaseRun) -> Result<f64> {
    let Some(sol) = &run.solution else {
        return Err(crate::Error::InvalidConfig(run.missing()));
    };
    let scn = run.config.scenario(sol.clone())?;
    let mut start = sim::initial_state(&scn)?;
    // Tilt the trunk while keeping both legs fixed in the world.
    start.q[2] += PITCH_PERTURBATION;
    start.q[3] -= PITCH_PERTURBATION;
    start.q[5] -= PITCH_PERTURBATION;
    let samples = sim::stance_rollout(&scn, start, PERTURBATION_WINDOW)?;
    let gains = scn.params.gains;
    let pole = (gains.kp).sqrt();
    let y0 = samples[0].y[1];
    let h = scn.params.physics_dt;
    let yd0 = (samples[1].y[1] - y0) / h;
    let reference = |t: f64| (y0 + (yd0 + pole * y0) * t) * (-pole * t).exp();
    let worst = samples.iter().map(|s| (s.y[1] - reference(s.t)).abs()).fold(0.0, f64::max);
    Ok(worst / y0.abs())
}

pub fn output_linearization(runs: &[&CaseRun]) -> CriterionResult {
    let mut parts: Vec<(bool, String)> = runs
        .iter()
        .map(|r| {
            let Some(trace) = &r.trace else { return (false, r.missing()) };
            let res = trace.summary().max_linearization_residual;
            (res < LINEARIZATION_TOLERANCE, format!("{}: max residual {res:.1e}", r.label()))
        })
        .collect();
    if let Some(first) = runs.first() {
        parts.push(match pitch_perturbation_envelope(first) {
            Ok(e) => (e < ENVELOPE_TOLERANCE, format!("tilt response envelope error {:.2}%", 100.0 * e)),
            Err(e) => (false, format!("tilt response: {e}")),
        });
    }
    combine(9, "output linearization", parts)
}

/// Random configuration with both knees bent forward.
pub fn random_coords(rng: &mut impl Rng) -> Coords {
    Coords::from_column_slice(&[
        rng.gen_range(-1.0..1.0),
        rng.gen_range(0.3..1.0),
        rng.gen_range(-0.6..0.6),
        rng.gen_range(-1.2..1.2),
        rng.gen_range(-1.5..0.0),
        rng.gen_range(-1.2..1.2),
        rng.gen_range(-1.5..0.0),
    ])
}

fn flight_acceleration(model: &RobotModel, q: &Coords, qdot: &Coords) -> Coords {
    let m = dynamics::mass_matrix(model, q);
    let c = dynamics::bias_forces(model, q, qdot);
    m.cholesky().expect("mass matrix positive definite").solve(&(-c))
}

/// Energy drift of one second of unactuated flight.
pub fn flight_energy_drift(model: &RobotModel, q0: Coords, v0: Coords) -> f64 {
    let h = 1e-4;
    let (mut q, mut v) = (q0, v0);
    let e0 = dynamics::total_energy(model, &q, &v);
    for _ in 0..10_000 {
        let a1 = flight_acceleration(model, &q, &v);
        let (q2, v2) = (q + 0.5 * h * v, v + 0.5 * h * a1);
        let a2 = flight_acceleration(model, &q2, &v2);
        let (q3, v3) = (q + 0.5 * h * v2, v + 0.5 * h * a2);
        let a3 = flight_acceleration(model, &q3, &v3);
        let (q4, v4) = (q + h * v3, v + h * a3);
        let a4 = flight_acceleration(model, &q4, &v4);
        q += h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4);
        v += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    }
    (dynamics::total_energy(model, &q, &v) - e0).abs()
}

pub fn dynamics_oracles(model: &RobotModel, seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q0 = random_coords(&mut rng);
    let v0 = Coords::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let drift = flight_energy_drift(model, q0, v0);

    let (mut jac_err, mut asym, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    let h = 1e-6;
    for _ in 0..RANDOM_STATES {
        let q = random_coords(&mut rng);
        let m = dynamics::mass_matrix(model, &q);
        asym = asym.max((m - m.transpose()).amax() / m.amax());
        min_eig = min_eig.min(m.symmetric_eigenvalues().min());
        for point in [BodyPoint::LeftFoot, BodyPoint::RightFoot, BodyPoint::Com, BodyPoint::Trunk, BodyPoint::Hip] {
            let j = dynamics::point_jacobian(model, &q, point);
            for k in 0..q.len() {
                let (mut qp, mut qm) = (q, q);
                qp[k] += h;
                qm[k] -= h;
                let fd = (dynamics::point_position(model, &qp, point) - dynamics::point_position(model, &qm, point)) / (2.0 * h);
                jac_err = jac_err.max((fd - j.column(k)).amax());
            }
        }
    }
    let elapsed = start.elapsed();
    combine(
        10,
        "dynamics oracles",
        vec![(
            drift < FLIGHT_ENERGY_TOLERANCE
                && jac_err < JACOBIAN_TOLERANCE
                && asym < 1e-12
                && min_eig > 0.0
                && elapsed < DYNAMICS_RUNTIME,
            format!(
                "flight |dE| {drift:.1e} J, Jacobian FD error {jac_err:.1e}, M asymmetry {asym:.1e}, min eigenvalue {min_eig:.3e}, {elapsed:.2?}"
            ),
        )],
    )
}

/// Whole suite on the two reference cases. `gain` replaces the optimized
/// gains of both cases.
pub fn run_all(case_a: RunConfig, case_b: RunConfig, gain: Option<[f64; 2]>) -> Vec<CriterionResult> {
    let (a, b) = std::thread::scope(|s| {
        let ha = s.spawn(|| CaseRun::execute(case_a.clone(), gain));
        let hb = s.spawn(|| CaseRun::execute(case_b.clone(), gain));
        (ha.join().expect("case A thread"), hb.join().expect("case B thread"))
    });
    let both = [&a, &b];
    vec![
        uncontrolled_instability(&a.config.gait),
        optimizer_constraints(&both),
        alip_contraction(&both),
        full_order_stability(4, &a),
        full_order_stability(5, &b),
        footstep_tracking(&both),
        momentum_rate_identity(&both),
        impact_invariants(&both),
        output_linearization(&both),
        dynamics_oracles(&a.config.robot(), a.config.seed),
    ]
}


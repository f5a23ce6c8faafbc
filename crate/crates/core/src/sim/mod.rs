//! Hybrid simulation of the full-order robot under the three-layer controller.

pub mod events;
pub mod init;
pub mod trace;

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::alip::AlipState;
use crate::control::{self, ControlGains};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{Coords, FullState, RobotModel, StanceLeg};
use crate::optimizer::GaitSolution;
use crate::pattern::{self, DesiredOutputs, PatternGenerator, SWING_HEIGHT};

pub use events::{bisect_touchdown, impact_reset, SwitchGuard, EVENT_TIME_TOLERANCE};
pub use init::{initialize_full_state, InitialPose};
pub use trace::{MomentumRateCheck, StanceDiagnostics, FOOTSTEP_WINDOW};
pub use trace::{ImpactRecord, Sample, SimSummary, SimTrace, StanceRecord, StepRecord};

/// Position drift of the stance foot above which it is projected back (m).
pub const DRIFT_TOLERANCE: f64 = 1e-8;
/// `|q|` or `|qdot|` beyond which the run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e4;

fn default_dt() -> f64 {
    1e-4
}
fn default_rate() -> f64 {
    100.0
}
fn default_swing_height() -> Vec<f64> {
    SWING_HEIGHT.to_vec()
}
fn default_guard() -> f64 {
    0.5
}

/// Simulation settings independent of the gait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub duration_steps: usize,
    #[serde(default = "default_dt")]
    pub physics_dt: f64,
    #[serde(default = "default_rate")]
    pub planner_rate: f64,
    /// Touchdowns before this phase are ignored; 0 disables the guard.
    #[serde(default = "default_guard")]
    pub min_switch_phase: f64,
    #[serde(default)]
    pub trunk_pitch: f64,
    #[serde(default = "default_swing_height")]
    pub swing_height: Vec<f64>,
    #[serde(default)]
    pub gains: ControlGains,
    /// Envelope for the stability verdict: `|x_SC|` and `|L_S|` limits.
    #[serde(default = "default_envelope")]
    pub envelope: AlipState,
}

fn default_envelope() -> AlipState {
    AlipState::new(0.7, 40.0)
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            duration_steps: 25,
            physics_dt: default_dt(),
            planner_rate: default_rate(),
            min_switch_phase: default_guard(),
            trunk_pitch: 0.0,
            swing_height: default_swing_height(),
            gains: ControlGains::default(),
            envelope: default_envelope(),
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.physics_dt > 0.0 && self.physics_dt <= 1e-3) {
            return Err(Error::InvalidConfig(format!("physics_dt must lie in (0, 1e-3], got {}", self.physics_dt)));
        }
        if !(self.planner_rate > 0.0) || !self.planner_rate.is_finite() {
            return Err(Error::InvalidConfig("planner_rate must be positive".into()));
        }
        let ratio = 1.0 / (self.planner_rate * self.physics_dt);
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
            return Err(Error::InvalidConfig("planner period must be a whole number of physics steps".into()));
        }
        if !(0.0..1.0).contains(&self.min_switch_phase) {
            return Err(Error::InvalidConfig("min_switch_phase must lie in [0, 1)".into()));
        }
        self.gains.validate()
    }

    fn planner_every(&self) -> usize {
        (1.0 / (self.planner_rate * self.physics_dt)).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub robot: RobotModel,
    pub gait: GaitSolution,
    pub params: ScenarioParams,
}

/// Everything the closed-loop vector field reads, frozen during a physics step.
struct Loop<'a> {
    model: &'a RobotModel,
    gait: &'a GaitSolution,
    gains: ControlGains,
    generator: PatternGenerator,
}

/// Closed-loop evaluation at one state.
struct Evaluation {
    qddot: Coords,
    tau: Vector4<f64>,
    y: Vector4<f64>,
    v: Vector4<f64>,
    /// `yddot` reconstructed from `qddot`.
    yddot: Vector4<f64>,
    clamped: bool,
    /// Actuator plus contact power.
    actuator_power: f64,
    contact_power: f64,
}

impl Loop<'_> {
    fn evaluate(&self, q: &Coords, qdot: &Coords, stance: StanceLeg, t: f64) -> Result<Evaluation> {
        let surface = &self.gait.config.surface;
        let cd = control::constrained_dynamics(self.model, q, qdot, stance, t, surface)?;
        let outputs = control::control_outputs(self.model, q, qdot, stance);
        let desired = self.generator.desired(t);
        let action = control::io_linearizing_torque(&cd, &outputs, qdot, &desired, self.gait.config.period, &self.gains)?;
        let qddot = cd.acceleration(&action.tau);
        let yddot = outputs.jacobian * qddot + outputs.bias - action.desired_acceleration;
        let force = cd.contact_force(&action.tau);
        Ok(Evaluation {
            qddot,
            tau: action.tau,
            y: action.y,
            v: action.v,
            yddot,
            clamped: desired.clamped,
            actuator_power: action.tau.dot(&qdot.fixed_rows::<4>(3)),
            contact_power: force.x * surface.velocity(t),
        })
    }

    /// One RK4 step of length `h`; returns the new state and the work done by
    /// the actuators and the contact force over the step.
    fn step(&self, q: &Coords, qdot: &Coords, stance: StanceLeg, t: f64, h: f64) -> Result<(Coords, Coords, f64, f64)> {
        let e1 = self.evaluate(q, qdot, stance, t)?;
        let (q2, v2) = (q + 0.5 * h * qdot, qdot + 0.5 * h * e1.qddot);
        let e2 = self.evaluate(&q2, &v2, stance, t + 0.5 * h)?;
        let (q3, v3) = (q + 0.5 * h * v2, qdot + 0.5 * h * e2.qddot);
        let e3 = self.evaluate(&q3, &v3, stance, t + 0.5 * h)?;
        let (q4, v4) = (q + h * v3, qdot + h * e3.qddot);
        let e4 = self.evaluate(&q4, &v4, stance, t + h)?;
        let qn = q + h / 6.0 * (qdot + 2.0 * v2 + 2.0 * v3 + v4);
        let vn = qdot + h / 6.0 * (e1.qddot + 2.0 * e2.qddot + 2.0 * e3.qddot + e4.qddot);
        let w = |f: fn(&Evaluation) -> f64| h / 6.0 * (f(&e1) + 2.0 * f(&e2) + 2.0 * f(&e3) + f(&e4));
        Ok((qn, vn, w(|e| e.actuator_power), w(|e| e.contact_power)))
    }
}

/// Pull the stance foot back onto its surface anchor and remove any relative
/// velocity, if it drifted. Returns whether a correction was applied.
fn project_contact(model: &RobotModel, state: &mut FullState, anchor: Vector2<f64>, surface_velocity: f64) -> bool {
    let foot = state.stance.foot();
    let mut corrected = false;
    for _ in 0..3 {
        let p = dynamics::point_position(model, &state.q, foot);
        let err = anchor - p;
        if err.amax() <= DRIFT_TOLERANCE {
            break;
        }
        let j = dynamics::point_jacobian(model, &state.q, foot);
        if let Some(inv) = (j * j.transpose()).try_inverse() {
            state.q += j.transpose() * (inv * err);
            corrected = true;
        }
    }
    let j = dynamics::point_jacobian(model, &state.q, foot);
    let verr = Vector2::new(surface_velocity, 0.0) - j * state.qdot;
    if verr.amax() > DRIFT_TOLERANCE {
        let m = dynamics::mass_matrix(model, &state.q);
        if let Some(chol) = m.cholesky() {
            let minv_jt = chol.solve(&j.transpose());
            if let Some(lambda) = (j * minv_jt).try_inverse() {
                state.qdot += minv_jt * (lambda * verr);
                corrected = true;
            }
        }
    }
    corrected
}

fn diverged(state: &FullState) -> bool {
    let bad = |v: &Coords| v.iter().any(|x| !x.is_finite()) || v.amax() > DIVERGENCE_LIMIT;
    bad(&state.q) || bad(&state.qdot)
}

impl<'a> Loop<'a> {
    fn new(scn: &'a Scenario) -> Result<Self> {
        let cfg = scn.gait.config;
        let params = &scn.params;
        let u_star = scn.gait.policy.u_star;
        let outputs = DesiredOutputs::new(cfg.com_height, params.trunk_pitch, -u_star, &params.swing_height)?;
        Ok(Self {
            model: &scn.robot,
            gait: &scn.gait,
            gains: params.gains,
            generator: PatternGenerator::new(outputs, &cfg, u_star),
        })
    }
}

/// Full-order state on the periodic orbit right after a touchdown, left leg
/// in stance, swing foot one nominal step behind.
pub fn initial_state(scn: &Scenario) -> Result<FullState> {
    let cfg = &scn.gait.config;
    let pose = InitialPose {
        alip: scn.gait.periodic_orbit.post_impact,
        com_height: cfg.com_height,
        trunk_pitch: scn.params.trunk_pitch,
        swing_offset: -scn.gait.policy.u_star,
        stance: StanceLeg::Left,
    };
    initialize_full_state(&scn.robot, &pose, &cfg.surface)
}

/// Output-level sample of a single-stance rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSample {
    pub t: f64,
    pub y: Vector4<f64>,
    pub v: Vector4<f64>,
    pub yddot: Vector4<f64>,
}

/// Integrate the first stance phase from `start` for `duration` seconds
/// without touchdown handling or planner updates, recording the outputs at
/// every physics step.
pub fn stance_rollout(scn: &Scenario, start: FullState, duration: f64) -> Result<Vec<OutputSample>> {
    scn.params.validate()?;
    let lp = Loop::new(scn)?;
    let dt = scn.params.physics_dt;
    let n = (duration / dt).round() as usize;
    let mut state = start;
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 * dt;
        let e = lp.evaluate(&state.q, &state.qdot, state.stance, t)?;
        out.push(OutputSample { t, y: e.y, v: e.v, yddot: e.yddot });
        if i == n {
            break;
        }
        let (q, v, _, _) = lp.step(&state.q, &state.qdot, state.stance, t, dt)?;
        state.q = q;
        state.qdot = v;
        if diverged(&state) {
            return Err(Error::Diverged { time: t + dt, norm: state.q.amax().max(state.qdot.amax()) });
        }
    }
    Ok(out)
}

/// Run the closed loop for `duration_steps` touchdowns. Numerical failures
/// truncate the trace and are recorded in [`SimTrace::failure`]; only invalid
/// inputs return an error.
pub fn run_scenario(scn: &Scenario) -> Result<SimTrace> {
    scn.robot.validate()?;
    scn.params.validate()?;
    scn.gait.verify()?;
    let cfg = scn.gait.config;
    let surface = cfg.surface;
    let params = &scn.params;
    let model = &scn.robot;
    let policy = scn.gait.policy;
    let orbit = &scn.gait.periodic_orbit;

    let mut trace = SimTrace::new(&scn.gait, model.total_mass(), params.physics_dt);
    if params.duration_steps == 0 {
        trace.finish(params);
        return Ok(trace);
    }

    let mut state = initial_state(scn)?;
    let mut lp = Loop::new(scn)?;
    let guard = SwitchGuard { min_phase: (params.min_switch_phase > 0.0).then_some(params.min_switch_phase) };
    let dt = params.physics_dt;
    let every = params.planner_every();
    // Give up if touchdowns stop coming: three nominal periods per step.
    let max_steps_n = ((params.duration_steps as f64 + 1.0) * 3.0 * cfg.period / dt).ceil() as usize;

    let foot_anchor = |model: &RobotModel, s: &FullState| dynamics::point_position(model, &s.q, s.stance.foot());
    let mut anchor_offset = foot_anchor(model, &state) - Vector2::new(surface.position(0.0), 0.0);
    let mut last_tick = lp.generator.tick(model, &state.q, &state.qdot, state.stance, 0.0, &policy, &cfg);
    let mut stance_rec = StanceRecord::start(0, 0.0, dynamics::total_energy(model, &state.q, &state.qdot));
    let mut impact_pending = false;

    let mut n = 0usize;
    while n < max_steps_n {
        let t = n as f64 * dt;
        if n % every == 0 {
            if n > 0 {
                last_tick = lp.generator.tick(model, &state.q, &state.qdot, state.stance, t, &policy, &cfg);
            }
            match lp.evaluate(&state.q, &state.qdot, state.stance, t) {
                Ok(e) => trace.push_sample(Sample::new(&state, t, last_tick.current, &e.y, &e.tau, last_tick.u, impact_pending, e.clamped)),
                Err(err) => {
                    trace.fail(t, &err);
                    break;
                }
            }
            impact_pending = false;
        }

        // Stance diagnostics on the physics grid.
        if let Ok(e) = lp.evaluate(&state.q, &state.qdot, state.stance, t) {
            let foot = dynamics::point_position(model, &state.q, state.stance.foot());
            let (_, vcom) = dynamics::com_state(model, &state.q, &state.qdot);
            let x = pattern::full_to_alip(model, &state.q, &state.qdot, state.stance);
            trace.push_diagnostic(state.step_index, t, x, vcom.y, surface.velocity(t), foot.y, &e.yddot, &e.v);
        }

        let t_next = (n + 1) as f64 * dt;
        let mut h = t_next - t;
        let result = lp.step(&state.q, &state.qdot, state.stance, t, h);
        let (mut qn, mut vn, mut wa, mut wc) = match result {
            Ok(r) => r,
            Err(err) => {
                trace.fail(t, &err);
                break;
            }
        };

        // Touchdown within this step?
        let before = events::swing_height(model, &state).0;
        let trial = FullState { q: qn, qdot: vn, t: t_next, ..state };
        let (after, after_rate) = events::swing_height(model, &trial);
        let phase = lp.generator.clock.phase(t_next);
        if guard.crossed(before, after, after_rate, phase) {
            let start = state;
            let lpr = &lp;
            let height_at = |hh: f64| match lpr.step(&start.q, &start.qdot, start.stance, t, hh) {
                Ok((q, v, _, _)) => events::swing_height(model, &FullState { q, qdot: v, ..start }).0,
                Err(_) => f64::NAN,
            };
            let h_event = bisect_touchdown(height_at, 0.0, h, EVENT_TIME_TOLERANCE);
            match lp.step(&state.q, &state.qdot, state.stance, t, h_event) {
                Ok((q, v, a, c)) => {
                    qn = q;
                    vn = v;
                    wa = a;
                    wc = c;
                }
                Err(err) => {
                    trace.fail(t, &err);
                    break;
                }
            }
            let t_event = t + h_event;
            let pre = FullState { q: qn, qdot: vn, t: t_event, ..state };
            stance_rec.actuator_work += wa;
            stance_rec.contact_work += wc;
            stance_rec.end = t_event;
            stance_rec.energy_end = dynamics::total_energy(model, &pre.q, &pre.qdot);
            let vs = surface.velocity(t_event);
            let impact = match impact_reset(model, &pre, vs) {
                Ok(r) => r,
                Err(err) => {
                    trace.fail(t_event, &err);
                    break;
                }
            };
            if impact.pulling {
                trace.warn(format!("impact at t = {t_event:.6} needs a pulling impulse"));
            }
            let record = ImpactRecord::build(model, &pre, &impact, vs, &policy, orbit, &last_tick, lp.generator.clock.step_start);
            let ke_jump = record.kinetic_energy_change;
            trace.push_impact(record);
            trace.push_stance(stance_rec);

            state = impact.post;
            anchor_offset = foot_anchor(model, &state) - Vector2::new(surface.position(t_event), 0.0);
            if state.step_index >= params.duration_steps {
                break;
            }
            let swing_x = pattern::swing_offset(model, &state.q, state.stance).x;
            lp.generator.start_step(t_event, state.step_index, swing_x);
            last_tick = lp.generator.tick(model, &state.q, &state.qdot, state.stance, t_event, &policy, &cfg);
            impact_pending = true;
            stance_rec = StanceRecord::start(state.step_index, t_event, stance_rec.energy_end + ke_jump);

            // Finish the physics step from the event to the grid.
            h = t_next - t_event;
            if h > 0.0 {
                match lp.step(&state.q, &state.qdot, state.stance, t_event, h) {
                    Ok((q, v, a, c)) => {
                        qn = q;
                        vn = v;
                        wa = a;
                        wc = c;
                    }
                    Err(err) => {
                        trace.fail(t_event, &err);
                        break;
                    }
                }
            } else {
                qn = state.q;
                vn = state.qdot;
                wa = 0.0;
                wc = 0.0;
            }
        }

        stance_rec.actuator_work += wa;
        stance_rec.contact_work += wc;
        state.q = qn;
        state.qdot = vn;
        state.t = t_next;
        let anchor = anchor_offset + Vector2::new(surface.position(t_next), 0.0);
        let e_before = dynamics::total_energy(model, &state.q, &state.qdot);
        if project_contact(model, &mut state, anchor, surface.velocity(t_next)) {
            stance_rec.projection_energy += dynamics::total_energy(model, &state.q, &state.qdot) - e_before;
            stance_rec.projections += 1;
        }
        if diverged(&state) {
            trace.fail(t_next, &Error::Diverged { time: t_next, norm: state.q.amax().max(state.qdot.amax()) });
            break;
        }
        n += 1;
    }
    if n >= max_steps_n && trace.impacts.len() < params.duration_steps {
        trace.fail(n as f64 * dt, &Error::Diverged { time: n as f64 * dt, norm: f64::NAN });
        trace.failure = Some(format!("stalled: only {} touchdowns by t = {:.3}", trace.impacts.len(), n as f64 * dt));
    }
    trace.finish(params);
    Ok(trace)
}

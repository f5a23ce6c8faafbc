//! Simulation records, derived metrics and their CSV / JSON export.

use std::io::Write;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::alip::{AlipState, FootstepPolicy, Multiplier, PeriodicOrbit};
use crate::dynamics::{self, spatial::cross2};
use crate::error::{Error, Result};
use crate::model::{FullState, RobotModel, StanceLeg};
use crate::optimizer::GaitSolution;
use crate::pattern::{self, PlannerTick};

use super::events::ImpactResult;
use super::ScenarioParams;

/// One row of the planner-rate trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub q: [f64; 7],
    pub qdot: [f64; 7],
    pub stance: StanceLeg,
    pub alip: AlipState,
    pub y: [f64; 4],
    pub tau: [f64; 4],
    /// Latest footstep command.
    pub u: f64,
    /// A touchdown happened since the previous row.
    pub impact: bool,
    /// The phase was past the end of the step and the desired outputs held.
    pub clamped: bool,
}

impl Sample {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        state: &FullState,
        t: f64,
        alip: AlipState,
        y: &Vector4<f64>,
        tau: &Vector4<f64>,
        u: f64,
        impact: bool,
        clamped: bool,
    ) -> Self {
        let mut q = [0.0; 7];
        let mut qdot = [0.0; 7];
        q.copy_from_slice(state.q.as_slice());
        qdot.copy_from_slice(state.qdot.as_slice());
        Self { t, q, qdot, stance: state.stance, alip, y: (*y).into(), tau: (*tau).into(), u, impact, clamped }
    }
}

/// Everything logged at a touchdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRecord {
    pub t: f64,
    /// Index of the step that ended.
    pub step_index: usize,
    pub step_duration: f64,
    pub swing_height: f64,
    /// Reduced state about the old contact just before touchdown.
    pub alip_pre: AlipState,
    /// Reduced state about the new contact just after touchdown.
    pub alip_post: AlipState,
    /// Angular momentum about the new contact before and after the impulse.
    pub l_new_pre: f64,
    pub l_new_post: f64,
    /// `L_new^- - (L_old^- + p_(new->old) x m v_CoM^-)`.
    pub transfer_residual: f64,
    /// Executed step: new contact minus old contact (m).
    pub u_executed: f64,
    /// Last command issued by the planner.
    pub u_command: f64,
    /// Pre-impact state of the planned periodic orbit.
    pub planned_pre: AlipState,
    /// Planner's last prediction of the pre-impact state.
    pub predicted_pre: AlipState,
    pub impulse: [f64; 2],
    pub pulling: bool,
    pub kinetic_energy_change: f64,
    /// Kinetic energy lost in the surface frame (never positive).
    pub impact_loss: f64,
    pub q: [f64; 7],
    pub qdot_pre: [f64; 7],
    pub qdot_post: [f64; 7],
}

impl ImpactRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        model: &RobotModel,
        pre: &FullState,
        impact: &ImpactResult,
        surface_velocity: f64,
        _policy: &FootstepPolicy,
        orbit: &PeriodicOrbit,
        tick: &PlannerTick,
        step_start: f64,
    ) -> Self {
        let post = &impact.post;
        let old = dynamics::point_position(model, &pre.q, pre.stance.foot());
        let new = dynamics::point_position(model, &pre.q, post.stance.foot());
        let l_old = dynamics::angular_momentum_about(model, &pre.q, &pre.qdot, &old);
        let l_new_pre = dynamics::angular_momentum_about(model, &pre.q, &pre.qdot, &new);
        let l_new_post = dynamics::angular_momentum_about(model, &post.q, &post.qdot, &new);
        let (_, v) = dynamics::com_state(model, &pre.q, &pre.qdot);
        // Lateral-axis moment is the negative counter-clockwise component.
        let transfer = -cross2(&(old - new), &(model.total_mass() * v));
        let ke_pre = dynamics::kinetic_energy(model, &pre.q, &pre.qdot);
        let ke_post = dynamics::kinetic_energy(model, &post.q, &post.qdot);
        let dke = ke_post - ke_pre;
        let arr = |c: &crate::model::Coords| {
            let mut a = [0.0; 7];
            a.copy_from_slice(c.as_slice());
            a
        };
        Self {
            t: pre.t,
            step_index: pre.step_index,
            step_duration: pre.t - step_start,
            swing_height: new.y,
            alip_pre: pattern::full_to_alip(model, &pre.q, &pre.qdot, pre.stance),
            alip_post: pattern::full_to_alip(model, &post.q, &post.qdot, post.stance),
            l_new_pre,
            l_new_post,
            transfer_residual: l_new_pre - (l_old + transfer),
            u_executed: new.x - old.x,
            u_command: tick.u,
            planned_pre: orbit.pre_impact,
            predicted_pre: tick.predicted,
            impulse: [impact.impulse.x, impact.impulse.y],
            pulling: impact.pulling,
            kinetic_energy_change: dke,
            impact_loss: dke - impact.impulse.x * surface_velocity,
            q: arr(&pre.q),
            qdot_pre: arr(&pre.qdot),
            qdot_post: arr(&post.qdot),
        }
    }
}

/// Energy bookkeeping over one stance phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceRecord {
    pub step_index: usize,
    pub start: f64,
    pub end: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub actuator_work: f64,
    pub contact_work: f64,
    /// Energy changed by contact-drift projections.
    pub projection_energy: f64,
    pub projections: usize,
}

impl StanceRecord {
    pub(crate) fn start(step_index: usize, t: f64, energy: f64) -> Self {
        Self {
            step_index,
            start: t,
            end: t,
            energy_start: energy,
            energy_end: energy,
            actuator_work: 0.0,
            contact_work: 0.0,
            projection_energy: 0.0,
            projections: 0,
        }
    }

    /// `Delta E - W_actuators - W_contact - projections`.
    pub fn audit_residual(&self) -> f64 {
        self.energy_end - self.energy_start - self.actuator_work - self.contact_work - self.projection_energy
    }
}

/// Per-step summary row.
pub type StepRecord = StanceRecord;

/// Physics-rate samples along stance phases, used for identity checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StanceDiagnostics {
    pub segment: Vec<usize>,
    pub t: Vec<f64>,
    pub x_sc: Vec<f64>,
    pub l_s: Vec<f64>,
    pub com_vertical_velocity: Vec<f64>,
    pub surface_velocity: Vec<f64>,
    /// Largest stance-foot height seen.
    pub max_stance_height: f64,
    /// Largest `|yddot - v| / (1 + |v|)`.
    pub max_linearization_residual: f64,
}

/// Finite-difference check of the stance angular-momentum rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumRateCheck {
    pub samples: usize,
    /// RMS of `Ldot - (m g x_SC + m xdot_S zdot_CoM)` over RMS of `Ldot`.
    pub exact_relative_rms: f64,
    /// RMS of `Ldot - m g x_SC` over peak `|Ldot|`.
    pub planar_relative_rms: f64,
    pub peak_rate: f64,
}

impl StanceDiagnostics {
    pub fn momentum_rate_check(&self, mass: f64, gravity: f64, dt: f64) -> MomentumRateCheck {
        let n = self.t.len();
        let (mut exact, mut planar, mut energy, mut peak, mut count) = (0.0, 0.0, 0.0, 0.0f64, 0usize);
        for i in 1..n.saturating_sub(1) {
            let same = self.segment[i - 1] == self.segment[i] && self.segment[i + 1] == self.segment[i];
            let uniform = ((self.t[i + 1] - self.t[i - 1]) - 2.0 * dt).abs() < 1e-12;
            if !(same && uniform) {
                continue;
            }
            let rate = (self.l_s[i + 1] - self.l_s[i - 1]) / (2.0 * dt);
            let grav = mass * gravity * self.x_sc[i];
            let moving = mass * self.surface_velocity[i] * self.com_vertical_velocity[i];
            exact += (rate - grav - moving).powi(2);
            planar += (rate - grav).powi(2);
            energy += rate * rate;
            peak = peak.max(rate.abs());
            count += 1;
        }
        if count == 0 {
            return MomentumRateCheck { samples: 0, exact_relative_rms: 0.0, planar_relative_rms: 0.0, peak_rate: 0.0 };
        }
        let rms = |s: f64| (s / count as f64).sqrt();
        MomentumRateCheck {
            samples: count,
            exact_relative_rms: rms(exact) / rms(energy).max(1e-300),
            planar_relative_rms: rms(planar) / peak.max(1e-300),
            peak_rate: peak,
        }
    }
}

/// Aggregate figures of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub duration_steps: usize,
    pub steps_completed: usize,
    pub step_lengths: Vec<f64>,
    pub step_durations: Vec<f64>,
    pub eigenvalues: [Multiplier; 2],
    pub spectral_radius: f64,
    pub max_abs_x_sc: f64,
    pub max_abs_l_s: f64,
    /// Largest `|x_SC(full) - x_SC(plan)|` at pre-impact instants.
    pub max_preimpact_deviation: f64,
    /// Mean `|u - u*|` over steps 10 to 20.
    pub mean_footstep_error: Option<f64>,
    pub momentum_rate: MomentumRateCheck,
    pub max_linearization_residual: f64,
    pub max_impact_momentum_change: f64,
    pub max_transfer_residual: f64,
    pub max_event_height: f64,
    pub max_impact_loss: f64,
    pub max_energy_audit_residual: f64,
    pub stable: bool,
    pub failure: Option<String>,
}

/// Planner-rate samples, touchdowns, per-step energy and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub samples: Vec<Sample>,
    pub impacts: Vec<ImpactRecord>,
    pub steps: Vec<StanceRecord>,
    pub diagnostics: StanceDiagnostics,
    pub warnings: Vec<String>,
    /// Why the run stopped early, if it did.
    pub failure: Option<String>,
    pub summary: Option<SimSummary>,
    #[serde(skip)]
    context: Option<TraceContext>,
}

#[derive(Debug, Clone, PartialEq)]
struct TraceContext {
    u_star: f64,
    eigenvalues: [Multiplier; 2],
    mass: f64,
    gravity: f64,
    dt: f64,
}

/// Steps (1-based, inclusive) averaged for the footstep-tracking figure.
pub const FOOTSTEP_WINDOW: (usize, usize) = (10, 20);

impl SimTrace {
    pub(crate) fn new(gait: &GaitSolution, robot_mass: f64, dt: f64) -> Self {
        Self {
            samples: Vec::new(),
            impacts: Vec::new(),
            steps: Vec::new(),
            diagnostics: StanceDiagnostics::default(),
            warnings: Vec::new(),
            failure: None,
            summary: None,
            context: Some(TraceContext {
                u_star: gait.policy.u_star,
                eigenvalues: gait.eigenvalues,
                mass: robot_mass,
                gravity: gait.config.gravity,
                dt,
            }),
        }
    }

    pub(crate) fn push_sample(&mut self, s: Sample) {
        self.samples.push(s);
    }

    pub(crate) fn push_impact(&mut self, r: ImpactRecord) {
        self.impacts.push(r);
    }

    pub(crate) fn push_stance(&mut self, r: StanceRecord) {
        self.steps.push(r);
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push_diagnostic(
        &mut self,
        segment: usize,
        t: f64,
        x: AlipState,
        zdot: f64,
        vs: f64,
        stance_height: f64,
        yddot: &Vector4<f64>,
        v: &Vector4<f64>,
    ) {
        let d = &mut self.diagnostics;
        d.segment.push(segment);
        d.t.push(t);
        d.x_sc.push(x.x_sc);
        d.l_s.push(x.l_s);
        d.com_vertical_velocity.push(zdot);
        d.surface_velocity.push(vs);
        d.max_stance_height = d.max_stance_height.max(stance_height.abs());
        let r = (yddot - v).norm() / (1.0 + v.norm());
        d.max_linearization_residual = d.max_linearization_residual.max(r);
    }

    pub(crate) fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub(crate) fn fail(&mut self, t: f64, err: &Error) {
        self.failure = Some(format!("t = {t:.6}: {err}"));
    }

    pub(crate) fn finish(&mut self, params: &ScenarioParams) {
        let ctx = self.context.clone().expect("trace context");
        let fold = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
        let max_abs_x_sc = fold(&mut self.samples.iter().map(|s| s.alip.x_sc.abs()));
        let max_abs_l_s = fold(&mut self.samples.iter().map(|s| s.alip.l_s.abs()));
        let (lo, hi) = FOOTSTEP_WINDOW;
        let window: Vec<f64> = self
            .impacts
            .iter()
            .skip(lo - 1)
            .take(hi - lo + 1)
            .map(|r| (r.u_executed - ctx.u_star).abs())
            .collect();
        let mean_footstep_error =
            if window.is_empty() { None } else { Some(window.iter().sum::<f64>() / window.len() as f64) };
        let steps_completed = self.impacts.len();
        let stable = self.failure.is_none()
            && steps_completed >= params.duration_steps
            && max_abs_x_sc <= params.envelope.x_sc
            && max_abs_l_s <= params.envelope.l_s;
        self.summary = Some(SimSummary {
            duration_steps: params.duration_steps,
            steps_completed,
            step_lengths: self.impacts.iter().map(|r| r.u_executed).collect(),
            step_durations: self.impacts.iter().map(|r| r.step_duration).collect(),
            eigenvalues: ctx.eigenvalues,
            spectral_radius: ctx.eigenvalues.iter().map(Multiplier::modulus).fold(0.0, f64::max),
            max_abs_x_sc,
            max_abs_l_s,
            max_preimpact_deviation: fold(&mut self.impacts.iter().map(|r| (r.alip_pre.x_sc - r.planned_pre.x_sc).abs())),
            mean_footstep_error,
            momentum_rate: self.diagnostics.momentum_rate_check(ctx.mass, ctx.gravity, ctx.dt),
            max_linearization_residual: self.diagnostics.max_linearization_residual,
            max_impact_momentum_change: fold(&mut self.impacts.iter().map(|r| (r.l_new_post - r.l_new_pre).abs())),
            max_transfer_residual: fold(&mut self.impacts.iter().map(|r| r.transfer_residual.abs())),
            max_event_height: fold(&mut self.impacts.iter().map(|r| r.swing_height.abs())),
            max_impact_loss: self.impacts.iter().map(|r| r.impact_loss).fold(f64::NEG_INFINITY, f64::max),
            max_energy_audit_residual: fold(&mut self.steps.iter().map(|s| s.audit_residual().abs())),
            stable,
            failure: self.failure.clone(),
        });
    }

    pub fn summary(&self) -> &SimSummary {
        self.summary.as_ref().expect("finished trace")
    }

    /// Column names of [`SimTrace::write_csv`].
    pub fn csv_header() -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..7).map(|i| format!("q{i}")));
        cols.extend((0..7).map(|i| format!("qdot{i}")));
        cols.extend(["x_sc", "l_s"].map(String::from));
        cols.extend((0..4).map(|i| format!("y{i}")));
        cols.extend((0..4).map(|i| format!("tau{i}")));
        cols.extend(["u", "stance", "impact", "clamped"].map(String::from));
        cols.join(",")
    }

    /// One row per sample; floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::csv_header())?;
        let f = |v: f64| format!("{v:.16e}");
        for s in &self.samples {
            let mut row: Vec<String> = vec![f(s.t)];
            row.extend(s.q.iter().map(|v| f(*v)));
            row.extend(s.qdot.iter().map(|v| f(*v)));
            row.push(f(s.alip.x_sc));
            row.push(f(s.alip.l_s));
            row.extend(s.y.iter().map(|v| f(*v)));
            row.extend(s.tau.iter().map(|v| f(*v)));
            row.push(f(s.u));
            row.push(match s.stance {
                StanceLeg::Left => "0".into(),
                StanceLeg::Right => "1".into(),
            });
            row.push(u8::from(s.impact).to_string());
            row.push(u8::from(s.clamped).to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

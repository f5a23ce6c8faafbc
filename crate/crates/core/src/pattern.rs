//! Desired output trajectories and the online footstep update that reshapes
//! the horizontal swing-foot curve from the reduced-order prediction.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::alip::{self, AlipState, FootstepPolicy, GaitConfig};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{BodyPoint, Coords, RobotModel, StanceLeg};

/// Order of the horizontal swing-foot curve.
pub const SWING_ORDER: usize = 6;
/// Default vertical swing-foot profile (m).
pub const SWING_HEIGHT: [f64; 7] = [0.0, 0.075, 0.05, 0.045, 0.05, 0.075, 0.0];

/// Bezier polynomial in Bernstein form on `s in [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BezierCurve {
    coefficients: Vec<f64>,
}

/// Value and phase derivatives of a curve at one phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurvePoint {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein_sum(coeffs: &[f64], s: f64) -> f64 {
    let n = coeffs.len() - 1;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| a * binomial(n, i) * s.powi(i as i32) * (1.0 - s).powi((n - i) as i32))
        .sum()
}

impl BezierCurve {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() < 2 || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "a Bezier curve needs at least two finite coefficients, got {coefficients:?}"
            )));
        }
        Ok(Self { coefficients })
    }

    pub fn constant(value: f64, order: usize) -> Self {
        Self { coefficients: vec![value; order.max(1) + 1] }
    }

    /// Coefficients evenly spaced from `start` to `end`: a straight line in `s`.
    pub fn linear(start: f64, end: f64, order: usize) -> Self {
        let m = order.max(1);
        Self { coefficients: (0..=m).map(|i| start + (i as f64 / m as f64) * (end - start)).collect() }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Evaluate on `[0, 1]`. The second value is `true` when `s` was outside
    /// and got clamped; the curve then holds its end value with zero rates.
    pub fn eval(&self, s: f64) -> (CurvePoint, bool) {
        if !(0.0..=1.0).contains(&s) {
            let end = if s > 1.0 { self.coefficients[self.order()] } else { self.coefficients[0] };
            return (CurvePoint { value: end, d1: 0.0, d2: 0.0 }, true);
        }
        let a = &self.coefficients;
        let m = self.order() as f64;
        let first: Vec<f64> = a.windows(2).map(|w| w[1] - w[0]).collect();
        let d1 = m * bernstein_sum(&first, s);
        let d2 = if a.len() > 2 {
            let second: Vec<f64> = first.windows(2).map(|w| w[1] - w[0]).collect();
            m * (m - 1.0) * bernstein_sum(&second, s)
        } else {
            0.0
        };
        (CurvePoint { value: bernstein_sum(a, s), d1, d2 }, false)
    }
}

/// Desired trajectories of `[z_CoM, pitch, x_sw, z_sw]` in the phase variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredOutputs {
    pub com_height: BezierCurve,
    pub pitch: BezierCurve,
    pub swing_x: BezierCurve,
    pub swing_z: BezierCurve,
}

/// `h_d` and its phase derivatives at one phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DesiredSample {
    pub value: [f64; 4],
    pub d1: [f64; 4],
    pub d2: [f64; 4],
    pub clamped: bool,
}

impl DesiredOutputs {
    pub fn new(com_height: f64, pitch: f64, swing_start: f64, swing_height: &[f64]) -> Result<Self> {
        let swing_z = BezierCurve::new(swing_height.to_vec())?;
        if swing_z.coefficients[0] != 0.0 || swing_z.coefficients[swing_z.order()] != 0.0 {
            return Err(Error::InvalidConfig("swing height profile must start and end at zero".into()));
        }
        Ok(Self {
            com_height: BezierCurve::constant(com_height, 1),
            pitch: BezierCurve::constant(pitch, 1),
            swing_x: BezierCurve::constant(swing_start, SWING_ORDER),
            swing_z,
        })
    }

    pub fn eval(&self, s: f64) -> DesiredSample {
        let mut out = DesiredSample::default();
        for (i, curve) in [&self.com_height, &self.pitch, &self.swing_x, &self.swing_z].into_iter().enumerate() {
            let (p, clamped) = curve.eval(s);
            out.value[i] = p.value;
            out.d1[i] = p.d1;
            out.d2[i] = p.d2;
            out.clamped |= clamped;
        }
        out
    }
}

/// Time-based phase `s = (t - T_k) / T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseClock {
    pub step_start: f64,
    pub period: f64,
}

impl PhaseClock {
    pub fn phase(&self, t: f64) -> f64 {
        ((t - self.step_start) / self.period).max(0.0)
    }
}

/// Reduced-order state of the full robot about its stance foot.
pub fn full_to_alip(model: &RobotModel, q: &Coords, qdot: &Coords, stance: StanceLeg) -> AlipState {
    let foot = dynamics::point_position(model, q, stance.foot());
    let com = dynamics::point_position(model, q, BodyPoint::Com);
    AlipState::new(com.x - foot.x, dynamics::angular_momentum_about(model, q, qdot, &foot))
}

/// Flow the reduced model from `t_now` to the planned switch `tau_next`.
pub fn predict_preimpact(x_now: &AlipState, t_now: f64, tau_next: f64, cfg: &GaitConfig) -> AlipState {
    if tau_next <= t_now {
        return *x_now;
    }
    alip::flow(x_now, t_now, tau_next, cfg)
}

/// Outcome of one planner tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerTick {
    pub s: f64,
    pub applied: bool,
    pub current: AlipState,
    pub predicted: AlipState,
    /// Footstep command from the prediction (the previous one when not applied).
    pub u: f64,
}

/// Middle layer: owns the desired outputs and reshapes the horizontal swing
/// curve so that it lands at the footstep the reduced-order planner asks for.
#[derive(Debug, Clone)]
pub struct PatternGenerator {
    pub outputs: DesiredOutputs,
    pub clock: PhaseClock,
    /// Index `k` of the current step; its planned end is `(k + 1) T`.
    pub step_index: usize,
    pub last_command: f64,
}

impl PatternGenerator {
    pub fn new(outputs: DesiredOutputs, cfg: &GaitConfig, u_star: f64) -> Self {
        Self {
            outputs,
            clock: PhaseClock { step_start: 0.0, period: cfg.period },
            step_index: 0,
            last_command: u_star,
        }
    }

    /// Begin step `k` at time `t` with the swing foot at `swing_x` relative to
    /// the new stance foot.
    pub fn start_step(&mut self, t: f64, k: usize, swing_x: f64) {
        self.clock.step_start = t;
        self.step_index = k;
        let end = self.outputs.swing_x.coefficients[SWING_ORDER];
        self.outputs.swing_x = BezierCurve::linear(swing_x, end, SWING_ORDER);
    }

    /// Rewrite the horizontal swing-foot coefficients for command `u`,
    /// keeping the start coefficient.
    pub fn set_target(&mut self, u: f64) {
        let start = self.outputs.swing_x.coefficients[0];
        self.outputs.swing_x = BezierCurve::linear(start, u, SWING_ORDER);
        self.last_command = u;
    }

    /// One planner update at time `t` for the robot state `(q, qdot)`.
    pub fn tick(
        &mut self,
        model: &RobotModel,
        q: &Coords,
        qdot: &Coords,
        stance: StanceLeg,
        t: f64,
        policy: &FootstepPolicy,
        cfg: &GaitConfig,
    ) -> PlannerTick {
        let s = self.clock.phase(t);
        let current = full_to_alip(model, q, qdot, stance);
        if s > 1.0 {
            return PlannerTick { s, applied: false, current, predicted: current, u: self.last_command };
        }
        let tau = cfg.switching_time(self.step_index);
        let predicted = predict_preimpact(&current, t, tau, cfg);
        let u = alip::footstep_command(&predicted, policy);
        if !(predicted.is_finite() && u.is_finite()) {
            log::warn!("footstep prediction not finite at t = {t:.4}; keeping previous coefficients");
            return PlannerTick { s, applied: false, current, predicted, u: self.last_command };
        }
        self.set_target(u);
        PlannerTick { s, applied: true, current, predicted, u }
    }

    pub fn desired(&self, t: f64) -> DesiredSample {
        self.outputs.eval(self.clock.phase(t))
    }
}

/// Horizontal and vertical swing-foot offset from the stance foot.
pub fn swing_offset(model: &RobotModel, q: &Coords, stance: StanceLeg) -> Vector2<f64> {
    dynamics::point_position(model, q, stance.swing().foot()) - dynamics::point_position(model, q, stance.foot())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curve() {
        let c = BezierCurve::constant(0.81, 6);
        for s in [0.0, 0.3, 1.0] {
            let (p, _) = c.eval(s);
            assert!((p.value - 0.81).abs() < 1e-15);
            assert!(p.d1.abs() < 1e-14 && p.d2.abs() < 1e-14);
        }
    }

    #[test]
    fn linear_curve() {
        let c = BezierCurve::new(vec![0.0, 1.0]).unwrap();
        let (p, clamped) = c.eval(0.37);
        assert!((p.value - 0.37).abs() < 1e-15 && (p.d1 - 1.0).abs() < 1e-15 && !clamped);
    }

    #[test]
    fn swing_height_endpoints() {
        let c = BezierCurve::new(SWING_HEIGHT.to_vec()).unwrap();
        assert_eq!(c.eval(0.0).0.value, 0.0);
        assert_eq!(c.eval(1.0).0.value, 0.0);
        assert!(c.eval(0.5).0.value > 0.04);
    }

    #[test]
    fn late_phase_holds_terminal_value() {
        let c = BezierCurve::linear(0.1, 0.3, 6);
        let (p, clamped) = c.eval(1.2);
        assert!(clamped);
        assert_eq!(p, CurvePoint { value: 0.3, d1: 0.0, d2: 0.0 });
    }

    #[test]
    fn interpolated_coefficients() {
        let c = BezierCurve::linear(0.1, 0.3, 6);
        let expected = [0.1, 0.13333333333, 0.16666666667, 0.2, 0.23333333333, 0.26666666667, 0.3];
        for (a, b) in c.coefficients().iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bad_curves_rejected() {
        assert!(BezierCurve::new(vec![1.0]).is_err());
        assert!(BezierCurve::new(vec![0.0, f64::NAN]).is_err());
        assert!(DesiredOutputs::new(0.81, 0.0, 0.0, &[0.0, 0.1, 0.01]).is_err());
    }

    #[test]
    fn phase_is_nonnegative() {
        let c = PhaseClock { step_start: 1.0, period: 0.4 };
        assert_eq!(c.phase(0.9), 0.0);
        assert!((c.phase(1.2) - 0.5).abs() < 1e-12);
    }
}

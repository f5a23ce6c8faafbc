//! Hybrid, linear, time-varying angular-momentum inverted pendulum (ALIP) on a
//! horizontally swaying surface.
//!
//! State `x = [x_SC, L_S]`: CoM position relative to the contact point and the
//! angular momentum about the contact point. During a step
//!
//! ```text
//! x_SC' = L_S / (m H) - xdot_S(t)
//! L_S'  = m g x_SC
//! ```
//!
//! and at the fixed instants `tau_k = k T` the contact point jumps forward by
//! the commanded step `u`, leaving `L_S` unchanged. A step is planned by the
//! discrete law `u = u* + K (x^- - x*)`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::SurfaceMotion;

/// Maximum quadrature step of the forced-response integral.
pub const QUADRATURE_STEP: f64 = 1e-4;

const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlipState {
    /// CoM position relative to the contact point (m).
    pub x_sc: f64,
    /// Angular momentum about the contact point (kg m^2 / s).
    pub l_s: f64,
}

impl AlipState {
    pub const ZERO: AlipState = AlipState { x_sc: 0.0, l_s: 0.0 };

    pub fn new(x_sc: f64, l_s: f64) -> Self {
        Self { x_sc, l_s }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x_sc, self.l_s)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self { x_sc: v.x, l_s: v.y }
    }

    pub fn is_finite(&self) -> bool {
        self.x_sc.is_finite() && self.l_s.is_finite()
    }
}

/// User-specified gait parameters of the reduced-order planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitConfig {
    /// Constant CoM height `H` above the surface (m).
    pub com_height: f64,
    /// Step period `T` (s).
    pub period: f64,
    /// Point mass of the pendulum (kg).
    pub mass: f64,
    pub gravity: f64,
    pub surface: SurfaceMotion,
}

impl GaitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.com_height, self.period, self.mass, self.gravity]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "gait parameters must be positive: H={}, T={}, m={}, g={}",
                self.com_height, self.period, self.mass, self.gravity
            )));
        }
        self.surface.validate()
    }

    /// Natural frequency `sqrt(g / H)`.
    pub fn omega(&self) -> f64 {
        (self.gravity / self.com_height).sqrt()
    }

    /// Homogeneous system matrix `A`.
    pub fn system_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0 / (self.mass * self.com_height), self.mass * self.gravity, 0.0)
    }

    /// Fixed ALIP switching instant that ends step `k` (steps counted from 0).
    pub fn switching_time(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.period
    }
}

/// Parameters of the discrete footstep law `u = u* + K (x^- - x*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootstepPolicy {
    /// Feedback row `K` (dimensionless, m / (kg m^2 / s)).
    pub gain: [f64; 2],
    /// Desired step `u*` (m).
    pub u_star: f64,
    /// Desired pre-impact state `x*`.
    pub x_star: AlipState,
}

impl FootstepPolicy {
    pub fn is_finite(&self) -> bool {
        self.gain.iter().all(|g| g.is_finite()) && self.u_star.is_finite() && self.x_star.is_finite()
    }

    /// `I + B` with `B = [-K; 0]`.
    pub fn reset_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(1.0 - self.gain[0], -self.gain[1], 0.0, 1.0)
    }

    /// Constant part `G = [K x* - u*, 0]` of the closed-loop jump.
    pub fn reset_offset(&self) -> Vector2<f64> {
        Vector2::new(self.gain[0] * self.x_star.x_sc + self.gain[1] * self.x_star.l_s - self.u_star, 0.0)
    }
}

/// Time derivative of the ALIP state.
pub fn alip_vector_field(x: &AlipState, t: f64, cfg: &GaitConfig) -> AlipState {
    AlipState {
        x_sc: x.l_s / (cfg.mass * cfg.com_height) - cfg.surface.velocity(t),
        l_s: cfg.mass * cfg.gravity * x.x_sc,
    }
}

/// Contact switch to a point `u` ahead of the old one.
pub fn apply_impact(x_pre: &AlipState, u: f64) -> AlipState {
    AlipState { x_sc: x_pre.x_sc - u, l_s: x_pre.l_s }
}

pub fn footstep_command(x_pre: &AlipState, policy: &FootstepPolicy) -> f64 {
    policy.u_star
        + policy.gain[0] * (x_pre.x_sc - policy.x_star.x_sc)
        + policy.gain[1] * (x_pre.l_s - policy.x_star.l_s)
}

/// `exp(A t)` in closed form.
pub fn continuous_stm(cfg: &GaitConfig, duration: f64) -> Matrix2<f64> {
    let w = cfg.omega();
    let mhw = cfg.mass * cfg.com_height * w;
    let (c, s) = ((w * duration).cosh(), (w * duration).sinh());
    Matrix2::new(c, s / mhw, mhw * s, c)
}

/// Response to the surface forcing over `[t0, t1]` from a zero initial state:
/// `int Phi(t1 - s) (-f(s)) ds`, composite Simpson.
pub fn forced_response(cfg: &GaitConfig, t0: f64, t1: f64) -> Vector2<f64> {
    let span = t1 - t0;
    if cfg.surface.is_stationary() || span <= 0.0 {
        return Vector2::zeros();
    }
    let mut n = (span / QUADRATURE_STEP).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = span / n as f64;
    let w = cfg.omega();
    let mhw = cfg.mass * cfg.com_height * w;
    let integrand = |s: f64| {
        let r = w * (t1 - s);
        -cfg.surface.velocity(s) * Vector2::new(r.cosh(), mhw * r.sinh())
    };
    let mut acc = integrand(t0) + integrand(t1);
    for i in 1..n {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * integrand(t0 + i as f64 * h);
    }
    acc * (h / 3.0)
}

/// Continuous flow of the ALIP from `t0` to `t1` (no switching).
pub fn flow(x: &AlipState, t0: f64, t1: f64, cfg: &GaitConfig) -> AlipState {
    let phi = continuous_stm(cfg, t1 - t0);
    AlipState::from_vector(phi * x.to_vector() + forced_response(cfg, t0, t1))
}

/// Monodromy matrix of the homogeneous closed loop, `(I + B) exp(A T)`:
/// flow for one period, then the footstep reset at `tau^-`.
pub fn monodromy(policy: &FootstepPolicy, cfg: &GaitConfig) -> Matrix2<f64> {
    policy.reset_matrix() * continuous_stm(cfg, cfg.period)
}

/// A Floquet multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
}

impl Multiplier {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Eigenvalues of a real 2x2 matrix from its characteristic polynomial.
pub fn eigenvalues_2x2(m: &Matrix2<f64>) -> [Multiplier; 2] {
    let half_trace = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m.determinant();
    let disc = half_trace * half_trace - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // Stable root pairing: the larger-magnitude root first, the other from det.
        let big = half_trace + r.copysign(half_trace);
        let small = if big != 0.0 { det / big } else { half_trace - r };
        [Multiplier { re: big, im: 0.0 }, Multiplier { re: small, im: 0.0 }]
    } else {
        let r = (-disc).sqrt();
        [Multiplier { re: half_trace, im: r }, Multiplier { re: half_trace, im: -r }]
    }
}

pub fn spectral_radius(m: &Matrix2<f64>) -> f64 {
    eigenvalues_2x2(m).iter().map(Multiplier::modulus).fold(0.0, f64::max)
}

/// Pre-impact state `x*` that makes the orbit with constant step `u` periodic:
/// `x* = Phi(T) (x* - [u, 0]) + d`, independent of the feedback gain.
pub fn consistent_preimpact(cfg: &GaitConfig, u: f64) -> Result<AlipState> {
    let phi = continuous_stm(cfg, cfg.period);
    let d = forced_response(cfg, 0.0, cfg.period);
    let rhs = d - phi * Vector2::new(u, 0.0);
    let lhs = Matrix2::identity() - phi;
    lhs.lu()
        .solve(&rhs)
        .map(AlipState::from_vector)
        .ok_or_else(|| Error::InvalidConfig("degenerate step period".into()))
}

/// Pre-impact state of the periodic orbit actually induced by `policy`,
/// i.e. the fixed point of `x^- -> Phi(T) ((I + B) x^- + G) + d`.
pub fn orbit_preimpact(policy: &FootstepPolicy, cfg: &GaitConfig) -> Option<AlipState> {
    let phi = continuous_stm(cfg, cfg.period);
    let d = forced_response(cfg, 0.0, cfg.period);
    let lhs = Matrix2::identity() - phi * policy.reset_matrix();
    lhs.lu()
        .solve(&(phi * policy.reset_offset() + d))
        .map(AlipState::from_vector)
}

/// Sampled T-periodic solution of the closed-loop hybrid ALIP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: f64,
    /// State right after the switch, `psi(0)`.
    pub post_impact: AlipState,
    /// State right before the switch, `psi(T^-)`.
    pub pre_impact: AlipState,
    pub times: Vec<f64>,
    pub states: Vec<AlipState>,
}

pub fn periodic_solution(policy: &FootstepPolicy, cfg: &GaitConfig, samples_per_step: usize) -> Result<PeriodicOrbit> {
    cfg.validate()?;
    if !cfg.surface.repeats_every(cfg.period) {
        return Err(Error::InvalidConfig(format!(
            "step period {} is not a multiple of the surface period {}",
            cfg.period, cfg.surface.period
        )));
    }
    let mono = monodromy(policy, cfg);
    let rho = spectral_radius(&mono);
    if !(rho < 1.0) {
        return Err(Error::NoStablePeriodicSolution { spectral_radius: rho });
    }
    let d = forced_response(cfg, 0.0, cfg.period);
    let jump = policy.reset_matrix();
    // x0 = (I + B)(Phi x0 + d) + G
    let rhs = jump * d + policy.reset_offset();
    let x0 = (Matrix2::identity() - mono)
        .lu()
        .solve(&rhs)
        .map(AlipState::from_vector)
        .ok_or(Error::NoStablePeriodicSolution { spectral_radius: rho })?;

    let n = samples_per_step.max(1);
    let dt = cfg.period / n as f64;
    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut x = x0;
    for i in 0..n {
        let t = i as f64 * dt;
        times.push(t);
        states.push(x);
        x = flow(&x, t, t + dt, cfg);
    }
    Ok(PeriodicOrbit {
        period: cfg.period,
        post_impact: x0,
        pre_impact: flow(&x0, 0.0, cfg.period, cfg),
        times,
        states,
    })
}

impl PeriodicOrbit {
    /// `psi(t)` by flowing from the nearest preceding sample.
    pub fn eval(&self, t: f64, cfg: &GaitConfig) -> AlipState {
        let local = t.rem_euclid(self.period);
        let dt = self.period / self.times.len() as f64;
        let i = ((local / dt).floor() as usize).min(self.times.len() - 1);
        let base = t - local + self.times[i];
        flow(&self.states[i], base, base + (local - self.times[i]), cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlipStep {
    pub t_impact: f64,
    pub pre: AlipState,
    pub u: f64,
    pub post: AlipState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlipTrace {
    pub times: Vec<f64>,
    pub states: Vec<AlipState>,
    pub steps: Vec<AlipStep>,
}

/// Samples recorded per step by [`simulate_hybrid_alip`].
pub const TRACE_SAMPLES_PER_STEP: usize = 20;

/// Simulate the closed-loop hybrid ALIP from the post-impact state `x0` at
/// `t = 0` for `n_steps` fixed-time steps.
pub fn simulate_hybrid_alip(x0: &AlipState, policy: &FootstepPolicy, cfg: &GaitConfig, n_steps: usize) -> Result<AlipTrace> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
    }
    cfg.validate()?;
    let mut trace = AlipTrace::default();
    let dt = cfg.period / TRACE_SAMPLES_PER_STEP as f64;
    let mut x = *x0;
    for k in 0..n_steps {
        let t_start = k as f64 * cfg.period;
        for i in 0..TRACE_SAMPLES_PER_STEP {
            let t = t_start + i as f64 * dt;
            trace.times.push(t);
            trace.states.push(x);
            x = flow(&x, t, t + dt, cfg);
            let norm = x.to_vector().norm();
            if !(norm < DIVERGENCE_NORM) {
                return Err(Error::Diverged { time: t + dt, norm });
            }
        }
        let t_impact = cfg.switching_time(k);
        let u = footstep_command(&x, policy);
        let post = apply_impact(&x, u);
        trace.steps.push(AlipStep { t_impact, pre: x, u, post });
        x = post;
    }
    trace.times.push(n_steps as f64 * cfg.period);
    trace.states.push(x);
    Ok(trace)
}

//! Footstep-policy optimization: find `(K, u*, x*)` with minimal `K K^T`
//! subject to step/state bounds and a cap on the Floquet multipliers of the
//! closed-loop hybrid ALIP.
//!
//! The problem is scalarized with exact (L1) penalties and solved by
//! deterministic multi-start Nelder-Mead inside an outer loop that raises the
//! penalty weight. Besides the bound and stability constraints, the desired
//! step `u*` is anchored to the requested gait style and `x*` is tied to the
//! pre-impact state of the periodic orbit the policy induces, so that on the
//! orbit the commanded step equals `u*`.

pub mod nelder_mead;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alip::{self, AlipState, FootstepPolicy, GaitConfig, Multiplier, PeriodicOrbit};
use crate::error::{Error, Result};
use nelder_mead::NelderMeadOptions;

/// Margin by which the multiplier cap is tightened to make it strict.
pub const EIGEN_MARGIN: f64 = 1e-6;
/// Tolerance on the style and orbit-consistency equalities.
pub const EQUALITY_TOLERANCE: f64 = 1e-6;
/// Default forward stride (m).
pub const DEFAULT_STRIDE: f64 = 0.2;
/// Samples of the periodic orbit stored with a solution.
pub const ORBIT_SAMPLES: usize = 40;

const PENALTY_SCHEDULE: [f64; 4] = [10.0, 100.0, 1e3, 1e4];
/// Internal stability target sits a little inside the reported margin so that
/// simplex vertices that hug the boundary still verify.
const SEARCH_MARGIN: f64 = 2.0 * EIGEN_MARGIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitStyle {
    /// Walking along one direction, legs passing each other.
    ForwardWalk,
    /// Stepping in place with respect to the surface.
    StepInPlace,
}

fn default_stride() -> f64 {
    DEFAULT_STRIDE
}
fn default_true() -> bool {
    true
}
fn default_penalty() -> f64 {
    1e3
}
fn default_starts() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub u_min: f64,
    pub u_max: f64,
    pub x_min: AlipState,
    pub x_max: AlipState,
    /// Upper bound on the Floquet multiplier moduli.
    pub eigen_cap: f64,
    pub gait_style: GaitStyle,
    /// Forward-walk stride (m).
    #[serde(default = "default_stride")]
    pub stride: f64,
    #[serde(default)]
    pub initial_guess: Option<FootstepPolicy>,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Tie `x*` to the pre-impact state of the induced periodic orbit.
    #[serde(default = "default_true")]
    pub enforce_consistency: bool,
    /// Weight of the consistency residual relative to the hard constraints.
    #[serde(default = "default_penalty")]
    pub consistency_weight: f64,
    /// Number of Nelder-Mead starts (the first is the initial guess).
    #[serde(default = "default_starts")]
    pub starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            u_min: -0.7,
            u_max: 0.7,
            x_min: AlipState::new(-0.7, -40.0),
            x_max: AlipState::new(0.7, 40.0),
            eigen_cap: 0.69,
            gait_style: GaitStyle::ForwardWalk,
            stride: DEFAULT_STRIDE,
            initial_guess: None,
            max_iters: 4000,
            tolerance: 1e-12,
            enforce_consistency: true,
            consistency_weight: 1e3,
            starts: 6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.u_min < self.u_max) {
            return bad("u_min must be below u_max");
        }
        if !(self.x_min.x_sc < self.x_max.x_sc && self.x_min.l_s < self.x_max.l_s) {
            return bad("x_min must be below x_max componentwise");
        }
        if !(self.eigen_cap > 0.0 && self.eigen_cap < 1.0) {
            return bad("eigen_cap must lie in (0, 1)");
        }
        if self.max_iters == 0 || !(self.tolerance > 0.0) || self.starts == 0 {
            return bad("max_iters, tolerance and starts must be positive");
        }
        if !(self.consistency_weight >= 0.0) || !self.stride.is_finite() {
            return bad("invalid consistency weight or stride");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSolution {
    pub config: GaitConfig,
    pub style: GaitStyle,
    pub policy: FootstepPolicy,
    pub eigenvalues: [Multiplier; 2],
    pub cost: f64,
    pub periodic_orbit: PeriodicOrbit,
}

impl GaitSolution {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(Multiplier::modulus).fold(0.0, f64::max)
    }

    /// Recompute everything derivable from `config` and `policy` and check the
    /// stored values; used when loading a solution from disk.
    pub fn verify(&self) -> Result<()> {
        self.config.validate()?;
        if !self.policy.is_finite() {
            return Err(Error::InvalidConfig("non-finite policy".into()));
        }
        let mono = alip::monodromy(&self.policy, &self.config);
        let rho = alip::spectral_radius(&mono);
        if (rho - self.spectral_radius()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "stored multipliers do not match the policy (stored {}, recomputed {rho})",
                self.spectral_radius()
            )));
        }
        let k = self.policy.gain;
        if (k[0] * k[0] + k[1] * k[1] - self.cost).abs() > 1e-12 * (1.0 + self.cost) {
            return Err(Error::InvalidConfig("stored cost does not match the gain".into()));
        }
        alip::periodic_solution(&self.policy, &self.config, 2)?;
        Ok(())
    }
}

/// Seeds `(u*, x*)` for a gait style: the style's step and the pre-impact
/// state that makes that step periodic.
pub fn gait_style_targets(style: GaitStyle, cfg: &GaitConfig, stride: f64) -> Result<(f64, AlipState)> {
    let u = match style {
        GaitStyle::ForwardWalk => stride,
        // Repeat the same surface-frame foothold: the surface displacement
        // accumulated between two switches.
        GaitStyle::StepInPlace => cfg.surface.position(cfg.switching_time(0)) - cfg.surface.position(0.0),
    };
    Ok((u, alip::consistent_preimpact(cfg, u)?))
}

/// Per-constraint violations of a candidate policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    /// C-1: step bounds.
    pub step: f64,
    /// C-2: state bounds.
    pub state: f64,
    /// C-3: multiplier cap.
    pub stability: f64,
    /// Distance of `u*` from the style target.
    pub style: f64,
    /// Distance of `x*` from the induced orbit's pre-impact state (L scaled).
    pub consistency: f64,
}

impl Violations {
    pub fn bounds_and_stability(&self) -> f64 {
        self.step + self.state + self.stability
    }
}

fn hinge(value: f64, lo: f64, hi: f64) -> f64 {
    (lo - value).max(0.0) + (value - hi).max(0.0)
}

/// Sum of hinge violations of the step bounds, state bounds and multiplier
/// cap (strict, with margin [`EIGEN_MARGIN`]). Zero iff all three hold.
pub fn constraint_violation(policy: &FootstepPolicy, cfg: &GaitConfig, opt: &OptimizerConfig) -> f64 {
    let rho = alip::spectral_radius(&alip::monodromy(policy, cfg));
    hinge(policy.u_star, opt.u_min, opt.u_max)
        + hinge(policy.x_star.x_sc, opt.x_min.x_sc, opt.x_max.x_sc)
        + hinge(policy.x_star.l_s, opt.x_min.l_s, opt.x_max.l_s)
        + (rho - (opt.eigen_cap - EIGEN_MARGIN)).max(0.0)
}

/// Precomputed per-problem quantities.
struct Problem<'a> {
    cfg: &'a GaitConfig,
    opt: &'a OptimizerConfig,
    phi: Matrix2<f64>,
    forcing: Vector2<f64>,
    /// Scale of angular momentum, `m H omega`.
    l_scale: f64,
    u_target: f64,
    x_target: AlipState,
}

impl<'a> Problem<'a> {
    fn new(cfg: &'a GaitConfig, opt: &'a OptimizerConfig) -> Result<Self> {
        let (u_target, x_target) = gait_style_targets(opt.gait_style, cfg, opt.stride)?;
        Ok(Self {
            cfg,
            opt,
            phi: alip::continuous_stm(cfg, cfg.period),
            forcing: alip::forced_response(cfg, 0.0, cfg.period),
            l_scale: cfg.mass * cfg.com_height * cfg.omega(),
            u_target,
            x_target,
        })
    }

    fn decode(&self, z: &[f64; 5]) -> FootstepPolicy {
        FootstepPolicy {
            gain: [z[0], z[1] / self.l_scale],
            u_star: z[2],
            x_star: AlipState::new(z[3], z[4] * self.l_scale),
        }
    }

    fn encode(&self, p: &FootstepPolicy) -> [f64; 5] {
        [p.gain[0], p.gain[1] * self.l_scale, p.u_star, p.x_star.x_sc, p.x_star.l_s / self.l_scale]
    }

    fn violations(&self, p: &FootstepPolicy, margin: f64) -> Violations {
        let rho = alip::spectral_radius(&(p.reset_matrix() * self.phi));
        let mut v = Violations {
            step: hinge(p.u_star, self.opt.u_min, self.opt.u_max),
            state: hinge(p.x_star.x_sc, self.opt.x_min.x_sc, self.opt.x_max.x_sc)
                + hinge(p.x_star.l_s, self.opt.x_min.l_s, self.opt.x_max.l_s) / self.l_scale,
            stability: (rho - (self.opt.eigen_cap - margin)).max(0.0),
            style: (p.u_star - self.u_target).abs(),
            consistency: 0.0,
        };
        if self.opt.enforce_consistency {
            let lhs = Matrix2::identity() - self.phi * p.reset_matrix();
            v.consistency = match lhs.lu().solve(&(self.phi * p.reset_offset() + self.forcing)) {
                Some(pre) => (p.x_star.x_sc - pre.x).abs() + (p.x_star.l_s - pre.y).abs() / self.l_scale,
                None => 1.0,
            };
        }
        v
    }

    fn objective(&self, z: &[f64; 5], weight: f64) -> f64 {
        let p = self.decode(z);
        let v = self.violations(&p, SEARCH_MARGIN);
        let cost = p.gain[0] * p.gain[0] + p.gain[1] * p.gain[1];
        cost + weight * (v.bounds_and_stability() + v.style) + weight.min(self.opt.consistency_weight) * v.consistency
    }

    /// Snap `u*` and `x*` onto the equality constraints (they do not enter the
    /// cost or the stability constraint).
    fn project(&self, p: &FootstepPolicy) -> FootstepPolicy {
        let mut out = *p;
        out.u_star = self.u_target;
        if self.opt.enforce_consistency {
            out.x_star = self.x_target;
        }
        out
    }

    fn is_feasible(&self, p: &FootstepPolicy) -> bool {
        let v = self.violations(p, EIGEN_MARGIN);
        v.bounds_and_stability() == 0.0 && v.style <= EQUALITY_TOLERANCE && v.consistency <= EQUALITY_TOLERANCE
    }

    /// Gain with both multipliers at zero: `u` cancels the whole pre-impact
    /// deviation of `x_SC` and its predicted growth.
    fn deadbeat_gain(&self) -> [f64; 2] {
        let w = self.cfg.omega();
        let wt = w * self.cfg.period;
        [1.0, wt.cosh() / (wt.sinh() * self.l_scale)]
    }
}

/// Result of [`optimize_gait_traced`]: the solution and the best feasible cost
/// after each outer penalty round.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub solution: GaitSolution,
    pub best_cost_history: Vec<f64>,
}

pub fn optimize_gait(cfg: &GaitConfig, opt: &OptimizerConfig, seed: u64) -> Result<GaitSolution> {
    optimize_gait_traced(cfg, opt, seed).map(|r| r.solution)
}

pub fn optimize_gait_traced(cfg: &GaitConfig, opt: &OptimizerConfig, seed: u64) -> Result<OptimizeReport> {
    cfg.validate()?;
    opt.validate()?;
    if !cfg.surface.repeats_every(cfg.period) {
        return Err(Error::InvalidConfig(format!(
            "step period {} must be a multiple of the surface period {}",
            cfg.period, cfg.surface.period
        )));
    }
    let problem = Problem::new(cfg, opt)?;

    let first = opt.initial_guess.unwrap_or(FootstepPolicy {
        gain: problem.deadbeat_gain(),
        u_star: problem.u_target,
        x_star: problem.x_target,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![problem.encode(&first)];
    for _ in 1..opt.starts {
        let mut z = problem.encode(&first);
        z[0] = rng.gen_range(0.0..2.0);
        z[1] = rng.gen_range(-1.0..3.0);
        starts.push(z);
    }

    let mut best: Option<(f64, FootstepPolicy)> = None;
    let mut least_violation = f64::INFINITY;
    let mut consider = |p: FootstepPolicy, best: &mut Option<(f64, FootstepPolicy)>| {
        let v = problem.violations(&p, EIGEN_MARGIN);
        least_violation = least_violation.min(v.bounds_and_stability() + v.style + v.consistency);
        if problem.is_feasible(&p) {
            let cost = p.gain[0] * p.gain[0] + p.gain[1] * p.gain[1];
            if best.is_none_or(|(c, _)| cost < c) {
                *best = Some((cost, p));
            }
        }
    };
    consider(first, &mut best);

    let nm = NelderMeadOptions { max_iters: opt.max_iters, tolerance: opt.tolerance };
    let steps = [0.1, 0.1, 0.01, 0.01, 0.01];
    let mut current = starts;
    let mut history = Vec::with_capacity(PENALTY_SCHEDULE.len());
    for &weight in &PENALTY_SCHEDULE {
        for z in current.iter_mut() {
            let r = nelder_mead::minimize(|x| problem.objective(x, weight), *z, steps, nm);
            *z = r.point;
            let raw = problem.decode(&r.point);
            consider(problem.project(&raw), &mut best);
            consider(raw, &mut best);
        }
        history.push(best.map_or(f64::INFINITY, |(c, _)| c));
    }

    let (cost, policy) = best.ok_or(Error::Infeasible { violation: least_violation })?;
    let mono = alip::monodromy(&policy, cfg);
    let solution = GaitSolution {
        config: *cfg,
        style: opt.gait_style,
        policy,
        eigenvalues: alip::eigenvalues_2x2(&mono),
        cost,
        periodic_orbit: alip::periodic_solution(&policy, cfg, ORBIT_SAMPLES)?,
    };
    Ok(OptimizeReport { solution, best_cost_history: history })
}

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizontal sway of the walking surface, `x_S(t) = a sin(2 pi t / P + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceMotion {
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SurfaceMotion {
    pub fn stationary() -> Self {
        Self { amplitude: 0.0, period: 1.0, phase: 0.0 }
    }

    pub fn sway(amplitude: f64, period: f64) -> Self {
        Self { amplitude, period, phase: 0.0 }
    }

    pub fn is_stationary(&self) -> bool {
        self.amplitude == 0.0
    }

    fn rate(&self) -> f64 {
        TAU / self.period
    }

    fn arg(&self, t: f64) -> f64 {
        self.rate() * t + self.phase
    }

    pub fn position(&self, t: f64) -> f64 {
        self.amplitude * self.arg(t).sin()
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.amplitude * self.rate() * self.arg(t).cos()
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        let w = self.rate();
        -self.amplitude * w * w * self.arg(t).sin()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) || !self.amplitude.is_finite() || !self.phase.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid surface motion {self:?}")));
        }
        Ok(())
    }

    /// Whether `duration` is an integer number of surface periods, so that the
    /// forcing repeats every `duration`.
    pub fn repeats_every(&self, duration: f64) -> bool {
        if self.is_stationary() {
            return true;
        }
        let cycles = duration / self.period;
        cycles >= 0.5 && (cycles - cycles.round()).abs() < 1e-9
    }
}

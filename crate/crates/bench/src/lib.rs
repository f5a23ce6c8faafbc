//! Shared fixtures for the benchmarks.

use drswalk::config::{Preset, RunConfig};
use drswalk::optimizer::{optimize_gait, GaitSolution};

/// Reference configuration and its solved gait.
pub fn solved(preset: Preset) -> (RunConfig, GaitSolution) {
    let cfg = RunConfig::preset(preset).expect("embedded preset");
    let gait = optimize_gait(&cfg.gait, &cfg.optimizer, cfg.seed).expect("reference gait is feasible");
    (cfg, gait)
}

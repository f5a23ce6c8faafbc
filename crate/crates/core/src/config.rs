//! Run configuration: one TOML file with a section per stage, plus the two
//! embedded reference presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alip::GaitConfig;
use crate::error::{Error, Result};
use crate::model::RobotModel;
use crate::optimizer::{GaitSolution, OptimizerConfig};
use crate::sim::{Scenario, ScenarioParams};

const CASE_A: &str = include_str!("../presets/case_a.toml");
const CASE_B: &str = include_str!("../presets/case_b.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "caseA")]
    CaseA,
    #[serde(rename = "caseB")]
    CaseB,
    #[default]
    #[serde(rename = "custom")]
    Custom,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caseA" => Ok(Self::CaseA),
            "caseB" => Ok(Self::CaseB),
            "custom" => Ok(Self::Custom),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?} (expected caseA or caseB)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CaseA => "caseA",
            Self::CaseB => "caseB",
            Self::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Replaces the reference robot when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotModel>,
    pub gait: GaitConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub scenario: ScenarioParams,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Result<Self> {
        match preset {
            Preset::CaseA => Self::from_toml_str(CASE_A),
            Preset::CaseB => Self::from_toml_str(CASE_B),
            Preset::Custom => Err(Error::InvalidConfig("the custom preset needs a config file".into())),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = &self.robot {
            r.validate()?;
        }
        self.gait.validate()?;
        self.optimizer.validate()?;
        self.scenario.validate()
    }

    pub fn robot(&self) -> RobotModel {
        self.robot.clone().unwrap_or_default()
    }

    /// Simulation of `gait` with this configuration's robot and scenario settings.
    pub fn scenario(&self, gait: GaitSolution) -> Result<Scenario> {
        if gait.config != self.gait {
            return Err(Error::InvalidConfig("gait solution was solved for different gait parameters".into()));
        }
        Ok(Scenario { robot: self.robot(), gait, params: self.scenario.clone() })
    }
}

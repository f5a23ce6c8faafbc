use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown body point `{0}`")]
    UnknownPoint(String),

    #[error("no stable periodic solution (spectral radius {spectral_radius:.6})")]
    NoStablePeriodicSolution { spectral_radius: f64 },

    #[error("state diverged at t = {time:.4} s (norm {norm:.3e})")]
    Diverged { time: f64, norm: f64 },

    #[error("no feasible gait found (best violation {violation:.3e})")]
    Infeasible { violation: f64 },

    #[error("singular contact configuration (condition number {condition:.3e})")]
    SingularConfiguration { condition: f64 },

    #[error("decoupling matrix is singular; output `{output}` is not independently controllable")]
    DecouplingSingular { output: &'static str },

    #[error("inverse kinematics failed: residual {residual:.3e} m at nearest configuration {nearest:?}")]
    InverseKinematics { residual: f64, nearest: [f64; 7] },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse configuration: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

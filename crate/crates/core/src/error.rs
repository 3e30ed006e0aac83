use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("invalid frequencies: {0}")]
    InvalidFrequencies(String),

    #[error("residuals are not mean reverting (lag-one coefficient {coefficient})")]
    NonMeanRevertingResiduals { coefficient: f64 },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("state of charge {soc} MWh outside [{min}, {max}] (tolerance {tolerance})")]
    SocOutOfRange {
        soc: f64,
        min: f64,
        max: f64,
        tolerance: f64,
    },

    #[error("inadmissible action: {0}")]
    InadmissibleAction(String),

    #[error("infeasible step: clamped by {clamp} MWh, tolerance {tolerance} MWh")]
    InfeasibleStep { clamp: f64, tolerance: f64 },

    #[error("policy violation at t={t} h, s={soc} MWh: {reason}")]
    PolicyViolation { t: f64, soc: f64, reason: String },

    #[error("unstable grid: non-finite value at time slice {slice}")]
    UnstableGrid { slice: usize },

    #[error("bad stencil: zero pivot in row {row} of the banded system")]
    BadStencil { row: usize },

    #[error("extrapolation refused: {0}")]
    ExtrapolationRefused(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

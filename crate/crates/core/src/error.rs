use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("equilibrium solver did not converge after {iterations} iterations (max residual {residual:e})")]
    EquilibriumNotConverged { iterations: usize, residual: f64 },

    #[error("ion positions must be strictly ascending (violated at index {0})")]
    CoincidentPositions(usize),

    #[error("gate ion {0} is not part of the moving set")]
    GateIonNotMoving(usize),

    #[error("phase-null schedule: conditional phase is zero")]
    PhaseNull,

    #[error("singular closure constraints (offending mode {mode})")]
    SingularConstraints { mode: usize },

    #[error("every amplitude candidate is phase-null")]
    AllCandidatesPhaseNull,

    #[error("no center-of-mass mode in the mode set")]
    NoComMode,

    #[error("cutoff or tolerance insufficient: norm drift {drift:e}")]
    NormDrift { drift: f64 },

    #[error("Fock cutoff did not converge (last change {change:e} at n_max = {n_max})")]
    CutoffNotConverged { n_max: usize, change: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

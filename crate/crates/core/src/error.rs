use thiserror::Error;

/// Errors raised by model construction, simulation and the oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sites {0} and {1} coincide; power-law coupling is undefined at zero distance")]
    CoincidentSites(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("trajectory {trajectory} became non-finite at t = {time} (step size too large?)")]
    NonFinite { trajectory: u64, time: f64 },

    #[error("oracle dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("photon cutoff too small: top Fock populations {population:e} exceed {tolerance:e} at t = {time}")]
    PhotonCutoff { population: f64, tolerance: f64, time: f64 },

    #[error("density matrix drifted at t = {time}: {what} error {value:e} (reduce the step)")]
    OracleDrift { time: f64, what: &'static str, value: f64 },

    #[error("not supported by the oracle: {0}")]
    Unsupported(String),

    #[error("malformed table: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

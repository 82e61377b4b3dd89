use thiserror::Error;

#[derive(Debug, Error)]
pub enum NfsError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("no {target} candidate for switch {stage} in window [{start_ns:.3}, {end_ns:.3}] ns")]
    NoCandidate { stage: usize, target: String, start_ns: f64, end_ns: f64 },

    #[error("no photon energy in either detection window")]
    EmptyWindows,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NfsError>;

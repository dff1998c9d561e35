use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("degenerate support: {0}")]
    DegenerateSupport(String),
    #[error("settling did not converge after {steps} steps (kinetic energy {kinetic_energy:.3e} J)")]
    NonConvergence { steps: usize, kinetic_energy: f64 },
    #[error("simulation diverged at t = {time:.4} s: non-finite state in {body}")]
    Divergence { body: String, time: f64 },
    #[error("robot slipped while settling: {0:.2} cm of sliding")]
    Slipped(f64),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("no cable moves the projected CoM toward the requested direction")]
    NoStepAvailable,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

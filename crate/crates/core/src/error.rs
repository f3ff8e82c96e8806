use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid structure spec: {}", format_violations(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("inclination {value} of strut {strut} is outside [0, pi]")]
    InclinationOutOfRange { strut: usize, value: f64 },

    #[error("orientation is not a unit vector (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("cable {cable} has zero length with positive rest length; gradient undefined")]
    SingularConfiguration { cable: usize },

    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),

    #[error("all {restarts} restarts produced degenerate estimates ({reason})")]
    AllDegenerate { restarts: usize, reason: String },

    #[error("equilibrium oracle did not converge: gradient norm {grad_norm:.3e} after {iterations} iterations")]
    OracleFailed { grad_norm: f64, iterations: usize },

    #[error("equilibrium oracle reached a degenerate state ({reason})")]
    OracleDegenerate { reason: String },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("stiffness scale is unidentifiable from shape observations")]
    ScaleUnidentifiable,

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("spec file: {0}")]
    SpecFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

use std::path::PathBuf;

use thiserror::Error;

/// Kind of resonance a pole belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoleKind {
    /// Clamped longitudinal vibration of the soft segment.
    Longitudinal,
    /// Clamped transverse (Timoshenko) vibration of the soft segment.
    Transverse,
    /// Eigenvalue of a discretized clamped soft problem.
    Discrete,
}

impl std::fmt::Display for PoleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoleKind::Longitudinal => "longitudinal",
            PoleKind::Transverse => "transverse",
            PoleKind::Discrete => "discrete",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid lattice: {0}")]
    Validation(String),

    #[error("segment does not fit inside the cell: {0}")]
    GeometryOverflow(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("inconsistent structure: {0}")]
    Structure(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("near resonance at lambda = {lambda}: nearest eigenvalue {nearest} (condition estimate {condition:.3e})")]
    NearResonance { lambda: f64, nearest: f64, condition: f64 },

    #[error("pole of the {kind} response at lambda = {lambda}")]
    Pole { lambda: f64, kind: PoleKind },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("homogenized tensor asymmetry {residual:.3e} exceeds tolerance")]
    Asymmetry { residual: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations; trace: {trace:?}")]
    NoConvergence { iterations: usize, trace: Vec<f64> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

use crate::geometry::ModeIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: a1={a1}, a2={a2}, a={a} (all must be positive and finite)")]
    InvalidGeometry { a1: f64, a2: f64, a: f64 },

    #[error("the zero mode (0,0,0) is not part of the basis")]
    ZeroMode,

    #[error("mode {0} lies outside truncation {1}")]
    OutsideTruncation(ModeIndex, u32),

    #[error("vertical coordinate z={z} outside [0, {a}]")]
    OutOfSlab { z: f64, a: f64 },

    #[error("truncation mismatch: expected N={expected}, got N={found}")]
    TruncationMismatch { expected: u32, found: u32 },

    #[error("geometry mismatch between operands")]
    GeometryMismatch,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hypothesis H2 violated: mode {mode} picks up a forcing line at distance {distance:.3e} from the inertial frequency")]
    H2Violation { mode: ModeIndex, distance: f64 },

    #[error("non-zero horizontal mean in the argument of the inverse horizontal Laplacian")]
    NonzeroHorizontalMean,

    #[error("resonant torus: {0} violating pairs at the working cutoff")]
    ResonantTorus(usize),

    #[error("energy blow-up at t={time}: energy {energy:.3e} exceeds bound {bound:.3e}")]
    BlowUp { time: f64, energy: f64, bound: f64 },

    #[error("singular linear system in the vertical solver")]
    Singular,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Spectral toolkit for fast-rotating fluids in a slab driven by a random
//! stationary wind stress.

pub mod banded;
pub mod direct;
pub mod envelope;
pub mod error;
pub mod field;
pub mod forcing;
pub mod layers;
pub mod geometry;
pub mod quad;
pub mod resonance;
pub mod sources;

pub use error::{Error, Result};
pub use field::{semigroup_apply, Basis, ModeSet, OrthonormalityReport, SpectralField};
pub use geometry::{eigenvalue, eigenvector, evaluate_mode, wavevector, EigenMode, ModeIndex, TorusGeometry};
pub use forcing::{FrequencyAtom, ForcingMode, PhasePoint, SpectralLine, WindStress};

//! Numerical machinery for twisted shift-invariant spaces of functions on
//! the plane: twisted translations and their phase algebra, the Weyl
//! integral kernel, the Weyl-Zak transform and fiberization, bracket maps,
//! frame analysis with fiber Gram and dual Gram matrices, and twisted
//! shift-preserving operators represented by fiber range operators.
//!
//! Everything is discretized on a truncation box `[-L, L)^2` with `N`
//! samples per unit length; see [`grids::GridSpec`]. Transforms are exact
//! index arithmetic (no interpolation) and every operation is pure, so the
//! whole crate is safe for concurrent use.

pub mod error;
pub mod frames;
pub mod grids;
pub mod io;
pub mod probes;
pub mod rangeops;
pub mod twist;
pub mod weyl;
pub mod zak;

pub use error::{Error, Result};
pub use grids::{GridSpec, SampledFunction};
pub use twist::LatticePoint;

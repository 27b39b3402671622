//! Penalized smoothing of discretely sampled curves with decorrelated
//! difference penalties.
//!
//! The building blocks, bottom up:
//!
//! - [`stencils`]: difference stencils, including the family whose outputs are
//!   unit-variance and mutually uncorrelated under white noise.
//! - [`penalty`]: banded `D^T D` penalties, convex blends and aggregates.
//! - [`smoother`]: `(I + alpha P)^{-1}` and the sequential / simultaneous schemes.
//! - [`selection`]: GCV, oracle tuning and a blend-weight heuristic.
//! - [`datagen`], [`baselines`], [`experiments`]: the simulation studies.

pub mod banded;
pub mod baselines;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod penalty;
pub mod report;
pub mod rng;
pub mod selection;
pub mod smoother;
pub mod stats;
pub mod stencils;

pub use error::{Error, Result};
pub use penalty::{Mode, PenaltyMatrix, PenaltySpec};
pub use report::ExperimentReport;
pub use smoother::Smoother;
pub use stencils::{Stencil, StencilFamily};

//! Simulator for randomized last-level-cache set-mapping defenses and the
//! conflict-based attacks against them.
//!
//! Every scheme implements [`schemes::CacheModel`]; attacks drive a scheme
//! only through [`attacks::AttackerOracle`], which reveals hit or miss and
//! nothing else. [`analysis`] holds the closed-form models the simulations
//! are checked against, and [`harness`] runs seeded experiments to CSV.

pub mod analysis;
pub mod attacks;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod permutation;
pub mod rng;
pub mod schemes;
pub mod set_array;
pub mod tldr;

pub use error::{Error, Result};
pub use geometry::{Address, CacheGeometry};
pub use rng::RngStream;
pub use schemes::{CacheModel, SchemeConfig, SchemeKind};
pub use set_array::{AccessOutcome, Owner};

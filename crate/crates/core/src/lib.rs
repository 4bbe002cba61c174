//! Rough-path numerics and a Lagrangian solver for the 2D Euler equations
//! with rough transport noise on the torus.

pub mod driver;
pub mod error;
pub mod euler;
pub mod fbm;
pub mod flow;
pub mod rough_path;
pub mod sewing;
pub mod torus;
pub mod variation;

pub use error::{Error, Result};
pub use rough_path::{RoughPath, SampledPath};
pub use torus::{VelocityGrid, VorticityGrid};
pub use variation::{Control, ControlKind, Localization, Variation};

/// Crate version, recorded in experiment metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

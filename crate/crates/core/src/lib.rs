//! Stochastic Sabra shell model: shell space, the quadratic nonlinearity,
//! Gaussian invariant measures, stochastic and inviscid dynamics, and the
//! statistics used to check invariance numerically.

pub mod dynamics;
pub mod error;
pub mod measure;
pub mod rng;
pub mod sabra;
pub mod space;
pub mod stats;

pub use dynamics::{simulate, Initial, Scheme, SimConfig, Trajectory};
pub use error::{Error, Result};
pub use measure::MeasureParams;
pub use sabra::SabraCoefficients;
pub use space::{ShellState, SobolevIndex, SpectralParams};

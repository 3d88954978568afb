//! Structure-preserving integrators for linear Itô SDEs on matrix Lie groups.
pub mod error;
pub mod experiments;
pub mod integrators;
pub mod lie;
pub mod matops;
pub mod model;
pub mod noise;

pub use error::{Error, Result};
pub use integrators::{Scheme, SchemeConfig, Trajectory};
pub use lie::{GroupDescriptor, Parametrization};
pub use matops::SquareMatrix;
pub use model::{CoefficientOptions, LieSdeModel, Side, TimeSampling};
pub use noise::{BrownianTable, NoiseIncrement};

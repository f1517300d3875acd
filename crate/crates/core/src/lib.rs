//! Branching Brownian particles with moderate interaction, their mollified
//! empirical density, and the FKPP equation they approximate.

pub mod density;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod particles;
pub mod pde;
pub mod rng;
pub mod stats;

pub use density::{DensityEstimator, DepositScheme};
pub use error::{Error, Result};
pub use grid::{GridField, GridSpec, Point, SobolevOrder, Spectrum};
pub use kernels::{BaseKernel, MollifierSpec, NormScalingRow};
pub use particles::{
    InitialProfile, Label, MartingaleAccumulator, Population, TestFunction, TimeProfile,
};

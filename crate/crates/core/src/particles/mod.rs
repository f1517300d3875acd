//! Branching Brownian particles with density-dependent proliferation.

mod initial;
mod label;
mod martingale;
mod population;

pub use initial::InitialProfile;
pub use label::Label;
pub use martingale::{MartingaleAccumulator, TestFunction, TimeProfile};
pub use population::{
    BranchEvent, BranchingScheme, DeadParticle, Increment, Particle, Population, Rates,
    SnapshotRow, StepOptions, StepReport, MAX_RATE_STEP,
};

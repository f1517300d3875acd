//! Fixtures shared by the benchmarks.

use prolif_core::experiments::RunConfig;
use prolif_core::{DensityEstimator, GridField, Population, Result};

/// Desk-preset grid with `n` particles drawn from the default initial profile.
pub fn population(n: usize) -> Result<(RunConfig, Population)> {
    let cfg = RunConfig::desk();
    let pop = Population::init(n, &cfg.profile()?, cfg.grid()?, cfg.seed)?;
    Ok((cfg, pop))
}

pub fn estimator(cfg: &RunConfig, n: usize) -> Result<DensityEstimator> {
    DensityEstimator::new(cfg.mollifier()?, n, &cfg.grid()?, cfg.deposit)
}

/// Initial datum of the desk preset on its particle grid.
pub fn initial_field(cfg: &RunConfig) -> Result<GridField> {
    cfg.profile()?.to_field(&cfg.grid()?)
}

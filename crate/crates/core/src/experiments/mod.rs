//! Studies that turn particle runs into tables and pass/fail contracts.
//!
//! Each study has a `run_*` function producing raw per-replica tables and an
//! `analyze_*` function deriving summary tables and contracts from those raw
//! tables alone, so an archive can be re-analyzed without re-simulating.

mod config;
mod convergence;
mod martingale;
mod mass;
mod runner;
mod stability;
mod table;
mod traces;
mod weak;

pub use config::RunConfig;
pub use convergence::{analyze_convergence, reference_solution, run_convergence, smooth_window};
pub use martingale::{analyze_martingale, run_martingale};
pub use mass::{analyze_mass, run_mass};
pub use runner::{fan_out, replica_seed, Interaction, Observer, Simulation};
pub use stability::{
    analyze_initial_bound, analyze_sobolev, analyze_time_regularity, initial_bound_closed_form,
    run_initial_bound, run_sobolev, run_time_regularity, time_regularity_statistic,
};
pub use table::{Contract, StudyOutput, Table};
pub use traces::{analyze_pde, analyze_simulate, run_pde, run_simulate, Snapshot};
pub use weak::{analyze_weak_residual, psi_functional, run_weak_residual};

use crate::error::{invalid, Result};

/// Study names accepted by [`run_study`] and [`analyze_study`].
pub const STUDIES: [&str; 9] = [
    "simulate",
    "pde",
    "convergence",
    "martingale",
    "mass",
    "sobolev",
    "initial_bound",
    "time_regularity",
    "weak_residual",
];

pub fn run_study(name: &str, cfg: &RunConfig) -> Result<Vec<Table>> {
    match name {
        "simulate" => Ok(run_simulate(cfg)?.0),
        "pde" => Ok(run_pde(cfg)?.0),
        "convergence" => run_convergence(cfg),
        "martingale" => run_martingale(cfg),
        "mass" => run_mass(cfg),
        "sobolev" => run_sobolev(cfg),
        "initial_bound" => run_initial_bound(cfg),
        "time_regularity" => run_time_regularity(cfg),
        "weak_residual" => run_weak_residual(cfg),
        other => Err(invalid(format!("unknown study `{other}`"))),
    }
}

pub fn analyze_study(name: &str, cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    match name {
        "simulate" => analyze_simulate(cfg, raw),
        "pde" => analyze_pde(cfg, raw),
        "convergence" => analyze_convergence(cfg, raw),
        "martingale" => analyze_martingale(cfg, raw),
        "mass" => analyze_mass(cfg, raw),
        "sobolev" => analyze_sobolev(cfg, raw),
        "initial_bound" => analyze_initial_bound(cfg, raw),
        "time_regularity" => analyze_time_regularity(cfg, raw),
        "weak_residual" => analyze_weak_residual(cfg, raw),
        other => Err(invalid(format!("unknown study `{other}`"))),
    }
}

/// Runs a study and analyzes its output.
pub fn run_and_analyze(name: &str, cfg: &RunConfig) -> Result<StudyOutput> {
    let raw = run_study(name, cfg)?;
    analyze_study(name, cfg, &raw)
}

/// Checks that consecutive values strictly decrease.
pub(crate) fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

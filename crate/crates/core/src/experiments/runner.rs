use rayon::prelude::*;

use super::config::RunConfig;
use crate::density::{rate_field, DensityEstimator};
use crate::error::Result;
use crate::grid::{GridField, GridSpec};
use crate::particles::{InitialProfile, Population, Rates, StepOptions, StepReport};
use crate::rng::derive;

/// How the proliferation rate is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interaction {
    /// `(1 - h)^+` with `h` the current mollified density.
    Full,
    /// Every rate equals 1 (pure Yule branching).
    Off,
    /// Density frozen at `c`, so every rate equals `(1 - c)^+`.
    Frozen(f64),
}

/// Hooks called while a replica runs.
pub trait Observer {
    /// Whether `at_step` needs the density at step `k`. It is always
    /// supplied under full interaction.
    fn needs_density(&self, _k: usize) -> bool {
        false
    }

    /// Called with the state at time `k dt`, for `k = 0..=steps`.
    fn at_step(
        &mut self,
        _k: usize,
        _t: f64,
        _pop: &Population,
        _h: Option<&GridField>,
    ) -> Result<()> {
        Ok(())
    }

    fn after_step(&mut self, _report: &StepReport) -> Result<()> {
        Ok(())
    }

    fn wants_increments(&self) -> bool {
        false
    }
}

/// A replica recipe for one particle count.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub n: usize,
    pub profile: InitialProfile,
    pub dt: f64,
    pub steps: usize,
    pub interaction: Interaction,
    pub diffusion: bool,
    pub estimator: DensityEstimator,
}

impl Simulation {
    pub fn new(cfg: &RunConfig, n: usize) -> Result<Self> {
        let grid = cfg.grid()?;
        Ok(Self {
            n,
            profile: cfg.profile()?,
            dt: cfg.dt,
            steps: cfg.steps(),
            interaction: cfg.interaction()?,
            diffusion: cfg.diffusion,
            estimator: DensityEstimator::new(cfg.mollifier()?, n, &grid, cfg.deposit)?,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.estimator.grid()
    }

    pub fn run(&self, seed: u64, obs: &mut dyn Observer) -> Result<Population> {
        let mut pop = Population::init(self.n, &self.profile, *self.grid(), seed)?.discard_dead();
        let opts = StepOptions {
            diffusion: self.diffusion,
            record_increments: obs.wants_increments(),
            ..Default::default()
        };
        for k in 0..=self.steps {
            let full = self.interaction == Interaction::Full;
            let h = if full || obs.needs_density(k) {
                Some(self.estimator.density(&pop)?)
            } else {
                None
            };
            obs.at_step(k, k as f64 * self.dt, &pop, h.as_ref())?;
            if k == self.steps {
                break;
            }
            let report = match self.interaction {
                Interaction::Full => {
                    let rates = rate_field(h.as_ref().expect("density computed"));
                    pop.step_with(Rates::Field(&rates), self.dt, opts)?
                }
                Interaction::Off => pop.step_with(Rates::Uniform(1.0), self.dt, opts)?,
                Interaction::Frozen(c) => {
                    pop.step_with(Rates::Uniform((1.0 - c).max(0.0)), self.dt, opts)?
                }
            };
            obs.after_step(&report)?;
        }
        Ok(pop)
    }
}

/// Seed of replica `r` at count `n` for the study tagged `tag`.
pub fn replica_seed(base: u64, tag: u64, n: usize, r: usize) -> u64 {
    derive(base, &[tag, n as u64, r as u64])
}

/// Runs `f(n, r)` for every count and replica, in parallel, and returns the
/// results in `(n, r)` order.
pub fn fan_out<T: Send>(
    n_list: &[usize],
    replicas: usize,
    f: impl Fn(usize, usize) -> Result<T> + Sync,
) -> Result<Vec<(usize, usize, T)>> {
    let jobs: Vec<(usize, usize)> = n_list
        .iter()
        .flat_map(|&n| (0..replicas).map(move |r| (n, r)))
        .collect();
    jobs.into_par_iter()
        .with_max_len(1)
        .map(|(n, r)| Ok((n, r, f(n, r)?)))
        .collect()
}

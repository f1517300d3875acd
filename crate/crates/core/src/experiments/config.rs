use serde::{Deserialize, Serialize};

use crate::density::DepositScheme;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{BaseKernel, MollifierSpec};
use crate::particles::{InitialProfile, TestFunction, TimeProfile};
use crate::pde::MAX_DT;

use super::runner::Interaction;

/// Everything a study needs. Parsed from a flat TOML document; every key is
/// optional and falls back to the desk preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub n_list: Vec<usize>,
    pub beta: f64,
    pub kernel: BaseKernel,
    pub alpha0: f64,
    pub alpha: f64,
    pub rho0: f64,
    pub gamma: f64,
    /// Enforce `beta < 1/2` and the matching `alpha0` range.
    pub strict: bool,

    pub u0: String,
    pub u0_mass: f64,
    pub u0_sigma: f64,
    pub u0_radius: f64,
    pub u0_half_width: f64,
    pub u0_value: f64,
    pub u0_center: Vec<f64>,

    pub horizon: f64,
    pub dt: f64,
    pub half_length: f64,
    pub points: usize,
    pub reference_points: usize,
    /// Empty means every `horizon / 20`.
    pub snapshot_times: Vec<f64>,
    /// Observation window `[-w, w]^d`.
    pub window: f64,
    pub replicas: usize,
    pub seed: u64,
    pub deposit: DepositScheme,

    /// `full`, `off` (every rate 1) or `frozen` (density fixed at `frozen_density`).
    pub interaction: String,
    pub frozen_density: f64,
    pub diffusion: bool,

    pub test_center: Vec<f64>,
    pub test_radius: f64,
    pub exp_moment: f64,
    pub bootstrap_resamples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    pub fn desk() -> Self {
        Self {
            dim: 1,
            n_list: vec![1_000, 4_000, 16_000, 64_000],
            beta: 0.25,
            kernel: BaseKernel::Gaussian,
            alpha0: 1.5,
            alpha: 0.75,
            rho0: 1.0,
            gamma: 0.25,
            strict: true,
            u0: "gaussian".into(),
            u0_mass: 0.8,
            u0_sigma: 1.0,
            u0_radius: 2.0,
            u0_half_width: 1.0,
            u0_value: 0.1,
            u0_center: Vec::new(),
            horizon: 1.0,
            dt: 5e-3,
            half_length: 20.0,
            points: 4096,
            reference_points: 8192,
            snapshot_times: Vec::new(),
            window: 5.0,
            replicas: 10,
            seed: 0x5EED_2024,
            deposit: DepositScheme::Linear,
            interaction: "full".into(),
            frozen_density: 0.0,
            diffusion: true,
            test_center: Vec::new(),
            test_radius: 3.0,
            exp_moment: 0.1,
            bootstrap_resamples: 1000,
        }
    }

    /// Larger counts and a finer grid; hours rather than minutes.
    pub fn full() -> Self {
        Self {
            n_list: vec![1_000, 4_000, 16_000, 64_000, 256_000],
            points: 8192,
            reference_points: 16384,
            replicas: 40,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}`; use desk or full"
            ))),
        }
    }

    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the keys of a TOML document on top of `base`, without
    /// validating the result.
    pub fn overlay(base: &RunConfig, text: &str) -> Result<Self> {
        let cfg_err = |e: toml::de::Error| Error::Config(e.to_string());
        let mut merged: toml::Table = toml::from_str(&base.to_toml()).map_err(cfg_err)?;
        let extra: toml::Table = toml::from_str(text).map_err(cfg_err)?;
        merged.extend(extra);
        toml::Value::Table(merged).try_into().map_err(cfg_err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn point(&self, v: &[f64]) -> [f64; 2] {
        [
            v.first().copied().unwrap_or(0.0),
            v.get(1).copied().unwrap_or(0.0),
        ]
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.half_length, self.points)
    }

    pub fn reference_grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.half_length, self.reference_points)
    }

    pub fn mollifier(&self) -> Result<MollifierSpec> {
        MollifierSpec::new(self.kernel, self.beta, self.dim, self.alpha0, self.strict)
    }

    pub fn profile(&self) -> Result<InitialProfile> {
        let center = self.point(&self.u0_center);
        let p = match self.u0.as_str() {
            "zero" => InitialProfile::Zero,
            "constant" => InitialProfile::Constant {
                value: self.u0_value,
            },
            "gaussian" => InitialProfile::Gaussian {
                mass: self.u0_mass,
                sigma: self.u0_sigma,
                center,
            },
            "uniform" => InitialProfile::Uniform {
                mass: self.u0_mass,
                half_width: self.u0_half_width,
                center,
            },
            "bump" => InitialProfile::SmoothBump {
                mass: self.u0_mass,
                radius: self.u0_radius,
                center,
            },
            "point" => InitialProfile::PointMass {
                mass: self.u0_mass,
                center,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown u0 `{other}`; use zero, constant, gaussian, uniform, bump or point"
                )))
            }
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn interaction(&self) -> Result<Interaction> {
        match self.interaction.as_str() {
            "full" => Ok(Interaction::Full),
            "off" => Ok(Interaction::Off),
            "frozen" => Ok(Interaction::Frozen(self.frozen_density)),
            other => Err(Error::Config(format!(
                "unknown interaction `{other}`; use full, off or frozen"
            ))),
        }
    }

    pub fn test_function(&self) -> TestFunction {
        TestFunction::bump(
            self.point(&self.test_center),
            self.test_radius,
            TimeProfile::QuadraticDecay {
                horizon: self.horizon,
            },
        )
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Snapshot times as step indices, ascending and unique.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut steps: Vec<usize> = if self.snapshot_times.is_empty() {
            (0..=20)
                .map(|i| ((i * n) as f64 / 20.0).round() as usize)
                .collect()
        } else {
            self.snapshot_times
                .iter()
                .map(|t| (t / self.dt).round() as usize)
                .collect()
        };
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    pub fn snapshot_time_values(&self) -> Vec<f64> {
        self.snapshot_steps()
            .iter()
            .map(|&k| k as f64 * self.dt)
            .collect()
    }

    /// Smallest half-length that keeps wrap-around negligible up to `horizon`.
    pub fn required_half_length(&self) -> Result<Option<f64>> {
        let t = self.horizon;
        Ok(self
            .profile()?
            .support_radius(self.dim)
            .map(|r| r + 2.0 * t + 6.0 * (2.0 * t).sqrt()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if self.dim != 1 && self.dim != 2 {
            return cfg_err(format!("dim must be 1 or 2, got {}", self.dim));
        }
        let d = self.dim as f64;
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return cfg_err("n_list must hold positive particle counts".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return cfg_err(format!("beta = {} out of (0, 1)", self.beta));
        }
        if self.strict && self.beta >= 0.5 {
            return cfg_err(format!(
                "beta = {} out of (0, 1/2): pass --allow-supercritical to probe the threshold",
                self.beta
            ));
        }
        self.mollifier().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.alpha > d / 2.0 && self.alpha < self.alpha0) {
            return cfg_err(format!(
                "alpha = {} must lie in (d/2, alpha0) = ({}, {}) for convergence in W^{{alpha,2}}",
                self.alpha,
                d / 2.0,
                self.alpha0
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return cfg_err(format!("gamma = {} must lie in (0, 1/2)", self.gamma));
        }
        if self.rho0 < self.alpha0 - 1.0 {
            return cfg_err(format!(
                "rho0 = {} must be at least alpha0 - 1 = {}",
                self.rho0,
                self.alpha0 - 1.0
            ));
        }
        if !(self.horizon > 0.0) {
            return cfg_err(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return cfg_err(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt));
        }
        if ((self.steps() as f64) * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return cfg_err(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            ));
        }
        for &t in &self.snapshot_times {
            if t < 0.0
                || t > self.horizon + 1e-12
                || ((t / self.dt).round() * self.dt - t).abs() > 1e-9
            {
                return cfg_err(format!(
                    "snapshot time {t} is not a step time in [0, horizon]"
                ));
            }
        }
        let grid = self.grid().map_err(|e| Error::Config(e.to_string()))?;
        let reference = self
            .reference_grid()
            .map_err(|e| Error::Config(e.to_string()))?;
        if reference.points() < 2 * grid.points() {
            return cfg_err("reference_points must be at least twice points".into());
        }
        let n_max = *self.n_list.iter().max().expect("nonempty");
        self.mollifier()?
            .check_resolution(n_max, &grid)
            .map_err(|e| Error::Config(format!("N = {n_max}: {e}")))?;
        if !(self.window > 0.0 && self.window + 1.0 < self.half_length) {
            return cfg_err(format!(
                "window {} must be positive and leave a unit margin inside the box",
                self.window
            ));
        }
        self.profile()?;
        if let Some(need) = self.required_half_length()? {
            if self.half_length < need {
                return cfg_err(format!(
                    "half_length {} is below the wrap-around bound {need:.3} for this u0 and horizon",
                    self.half_length
                ));
            }
        }
        self.interaction()?;
        let phi = self.test_function();
        phi.check_support(&grid)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.replicas == 0 {
            return cfg_err("replicas must be at least 1".into());
        }
        Ok(())
    }
}

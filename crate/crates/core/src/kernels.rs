//! Mollifier family `theta_N(x) = eps_N^{-d} theta(x / eps_N)` with
//! `eps_N = N^{-beta/d}`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::{sobolev_norm, GridField, GridSpec, Point, SobolevOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKernel {
    /// Standard normal density.
    Gaussian,
    /// Tensor product of `(15/16)(1 - x^2)^2` on `[-1, 1]`.
    Quartic,
}

const QUARTIC_NORM: f64 = 15.0 / 16.0;

impl BaseKernel {
    pub fn name(self) -> &'static str {
        match self {
            BaseKernel::Gaussian => "gaussian",
            BaseKernel::Quartic => "quartic",
        }
    }

    pub fn eval(self, x: Point, dim: usize) -> f64 {
        match self {
            BaseKernel::Gaussian => {
                let r2: f64 = x.iter().take(dim).map(|v| v * v).sum();
                (-0.5 * r2).exp() / (2.0 * PI).powf(dim as f64 / 2.0)
            }
            BaseKernel::Quartic => x
                .iter()
                .take(dim)
                .map(|&v| {
                    if v.abs() <= 1.0 {
                        let q = 1.0 - v * v;
                        QUARTIC_NORM * q * q
                    } else {
                        0.0
                    }
                })
                .product(),
        }
    }

    /// Fourier transform `integral e^{i eta x} theta(x) dx`.
    pub fn fourier(self, eta: Point, dim: usize) -> f64 {
        match self {
            BaseKernel::Gaussian => {
                let r2: f64 = eta.iter().take(dim).map(|v| v * v).sum();
                (-0.5 * r2).exp()
            }
            BaseKernel::Quartic => eta
                .iter()
                .take(dim)
                .map(|&e| quartic_fourier_1d(e))
                .product(),
        }
    }

    /// Squared L2 norm of the base kernel.
    pub fn l2_norm_squared(self, dim: usize) -> f64 {
        let one_d = match self {
            BaseKernel::Gaussian => 1.0 / (2.0 * PI.sqrt()),
            BaseKernel::Quartic => 5.0 / 7.0,
        };
        one_d.powi(dim as i32)
    }

    /// Sup norm of one partial derivative.
    pub fn derivative_sup(self, dim: usize) -> f64 {
        match self {
            // |x| phi(x) peaks at |x| = 1
            BaseKernel::Gaussian => {
                let phi0 = 1.0 / (2.0 * PI).sqrt();
                phi0 * (-0.5f64).exp() * phi0.powi(dim as i32 - 1)
            }
            // 4 x (1 - x^2) peaks at x = 1/sqrt(3)
            BaseKernel::Quartic => {
                QUARTIC_NORM * 8.0 / (3.0 * 3f64.sqrt()) * QUARTIC_NORM.powi(dim as i32 - 1)
            }
        }
    }

    /// Exclusive upper bound on Sobolev orders `alpha` with `theta` in `W^{alpha,2}`.
    pub fn smoothness_limit(self) -> f64 {
        match self {
            BaseKernel::Gaussian => f64::INFINITY,
            BaseKernel::Quartic => 2.5,
        }
    }

    /// Per-axis support half-width, if compact.
    pub fn support_radius(self) -> Option<f64> {
        match self {
            BaseKernel::Gaussian => None,
            BaseKernel::Quartic => Some(1.0),
        }
    }
}

fn quartic_fourier_1d(eta: f64) -> f64 {
    let e = eta.abs();
    if e < 0.5 {
        // (15/16) sum_n (-1)^n eta^{2n}/(2n)! * integral x^{2n} (1 - x^2)^2 dx
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 0..10 {
            if n > 0 {
                term *= -e * e / ((2 * n - 1) * (2 * n)) as f64;
            }
            let k = (2 * n) as f64;
            let moment = 2.0 * (1.0 / (k + 1.0) - 2.0 / (k + 3.0) + 1.0 / (k + 5.0));
            sum += term * moment;
        }
        QUARTIC_NORM * sum
    } else {
        let (s, c) = e.sin_cos();
        15.0 * (3.0 * s - 3.0 * e * c - e * e * s) / e.powi(5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    kernel: BaseKernel,
    beta: f64,
    dim: usize,
    alpha0: f64,
    strict: bool,
}

impl MollifierSpec {
    /// In strict mode `beta < 1/2` and `alpha0` must lie in
    /// `(d/2, d(1 - beta)/(2 beta)]`; otherwise only `beta` in `(0, 1)` is required.
    pub fn new(
        kernel: BaseKernel,
        beta: f64,
        dim: usize,
        alpha0: f64,
        strict: bool,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
        }
        let d = dim as f64;
        if strict {
            if beta >= 0.5 {
                return Err(invalid(format!(
                    "beta = {beta} outside (0, 1/2); pass --allow-supercritical to probe the threshold"
                )));
            }
            let upper = d * (1.0 - beta) / (2.0 * beta);
            if !(alpha0 > d / 2.0 && alpha0 <= upper + 1e-12) {
                return Err(invalid(format!(
                    "alpha0 = {alpha0} outside (d/2, d(1-beta)/(2 beta)] = ({}, {upper}]",
                    d / 2.0
                )));
            }
        }
        if alpha0 >= kernel.smoothness_limit() {
            return Err(invalid(format!(
                "{} kernel is not in W^{{{alpha0},2}}",
                kernel.name()
            )));
        }
        Ok(Self {
            kernel,
            beta,
            dim,
            alpha0,
            strict,
        })
    }

    pub fn kernel(&self) -> BaseKernel {
        self.kernel
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn strict(&self) -> bool {
        self.strict
    }

    /// `eps_N = N^{-beta/d}`.
    pub fn epsilon(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(invalid("particle count must be at least 1"));
        }
        Ok((n as f64).powf(-self.beta / self.dim as f64))
    }

    /// Pointwise `theta_N(x)`.
    pub fn eval(&self, n: usize, x: Point) -> Result<f64> {
        let eps = self.epsilon(n)?;
        Ok(self.eval_scaled(eps, x))
    }

    pub(crate) fn eval_scaled(&self, eps: f64, x: Point) -> f64 {
        let scaled = [x[0] / eps, x[1] / eps];
        self.kernel.eval(scaled, self.dim) / eps.powi(self.dim as i32)
    }

    /// Rejects grids coarser than `eps_N / 4`.
    pub fn check_resolution(&self, n: usize, grid: &GridSpec) -> Result<f64> {
        if grid.dim() != self.dim {
            return Err(invalid("grid and kernel dimensions differ"));
        }
        let eps = self.epsilon(n)?;
        let limit = eps / 4.0;
        if grid.spacing() > limit {
            let needed = (8.0 * grid.half_length() / eps).ceil() as usize;
            return Err(Error::UnderResolved {
                spacing: grid.spacing(),
                limit,
                required_points: needed.next_power_of_two().max(8),
            });
        }
        Ok(eps)
    }

    /// Samples of `theta_N` centred on the origin (node `G/2`), evaluated at
    /// the minimal periodic image and rescaled to unit rectangle-rule mass.
    pub fn sample_on_grid(&self, n: usize, grid: &GridSpec) -> Result<GridField> {
        let eps = self.check_resolution(n, grid)?;
        let raw = GridField::from_fn(*grid, |p| {
            let q = [grid.minimal_image(p[0]), grid.minimal_image(p[1])];
            self.eval_scaled(eps, q)
        });
        let mass = raw.integral();
        if !(mass > 0.0) {
            return Err(invalid("kernel has no mass on this grid"));
        }
        Ok(raw.map(|v| v / mass))
    }

    /// `(N, ||theta_N||_{W^{alpha,2}}, ||theta_N|| eps^{alpha + d/2})` for each N.
    pub fn norm_scaling_report(
        &self,
        alpha: SobolevOrder,
        counts: &[usize],
        grid: &GridSpec,
    ) -> Result<Vec<NormScalingRow>> {
        let a = alpha.value();
        if a < 0.0 {
            return Err(invalid("norm scaling needs alpha >= 0"));
        }
        if a >= self.kernel.smoothness_limit() {
            return Err(invalid(format!(
                "{} kernel is not in W^{{{a},2}}; need alpha < {}",
                self.kernel.name(),
                self.kernel.smoothness_limit()
            )));
        }
        counts
            .iter()
            .map(|&n| {
                let eps = self.epsilon(n)?;
                let theta = self.sample_on_grid(n, grid)?;
                let norm = sobolev_norm(&theta, alpha);
                let ratio = norm * eps.powf(a + self.dim as f64 / 2.0);
                Ok(NormScalingRow { n, norm, ratio })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormScalingRow {
    pub n: usize,
    pub norm: f64,
    pub ratio: f64,
}

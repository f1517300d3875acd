use super::population::StepReport;
use crate::error::{invalid, Error, Result};
use crate::grid::{convolve, GridField, GridSpec, Point};

/// Time factor `eta(t)` of a separable test function `eta(t) psi(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Constant,
    /// `(1 - t/T)^2` on `[0, T]`, zero afterwards.
    QuadraticDecay {
        horizon: f64,
    },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::QuadraticDecay { horizon } => {
                let u = (1.0 - t / horizon).max(0.0);
                u * u
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 0.0,
            TimeProfile::QuadraticDecay { horizon } => {
                let u = (1.0 - t / horizon).max(0.0);
                -2.0 * u / horizon
            }
        }
    }
}

/// `phi(t, x) = eta(t) * a * psi(x)` with `psi` the radial bump
/// `exp(1 - 1/(1 - rho^2))`, `rho = |x - c| / r`. Derivatives are analytic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
    pub profile: TimeProfile,
}

impl TestFunction {
    pub fn bump(center: Point, radius: f64, profile: TimeProfile) -> Self {
        Self {
            center,
            radius,
            amplitude: 1.0,
            profile,
        }
    }

    pub fn zero() -> Self {
        Self {
            center: [0.0; 2],
            radius: 1.0,
            amplitude: 0.0,
            profile: TimeProfile::Constant,
        }
    }

    /// Rejects supports that reach within two cells of the box edge.
    pub fn check_support(&self, grid: &GridSpec) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(invalid("test function radius must be positive"));
        }
        let limit = grid.half_length() - 2.0 * grid.spacing();
        for k in 0..grid.dim() {
            if self.center[k].abs() + self.radius >= limit {
                return Err(invalid("test function support touches the box boundary"));
            }
        }
        Ok(())
    }

    fn rho_q(&self, x: Point, dim: usize) -> (f64, f64) {
        let r2: f64 = (0..dim).map(|k| (x[k] - self.center[k]).powi(2)).sum();
        let rho2 = r2 / (self.radius * self.radius);
        (rho2, 1.0 - rho2)
    }

    pub fn psi(&self, x: Point, dim: usize) -> f64 {
        let (_, q) = self.rho_q(x, dim);
        if q <= 0.0 {
            return 0.0;
        }
        self.amplitude * (1.0 - 1.0 / q).exp()
    }

    pub fn grad_psi(&self, x: Point, dim: usize) -> Point {
        let (_, q) = self.rho_q(x, dim);
        let mut g = [0.0; 2];
        if q <= 0.0 {
            return g;
        }
        let psi = self.amplitude * (1.0 - 1.0 / q).exp();
        let r2 = self.radius * self.radius;
        for k in 0..dim {
            g[k] = psi * (-2.0 / (q * q)) * (x[k] - self.center[k]) / r2;
        }
        g
    }

    pub fn laplacian_psi(&self, x: Point, dim: usize) -> f64 {
        let (rho2, q) = self.rho_q(x, dim);
        if q <= 0.0 {
            return 0.0;
        }
        let psi = self.amplitude * (1.0 - 1.0 / q).exp();
        let rho = rho2.sqrt();
        let f1 = -2.0 * rho / (q * q);
        let f2 = -2.0 / (q * q) - 8.0 * rho2 / (q * q * q);
        let radial = f2 + f1 * f1;
        let angular = (dim as f64 - 1.0) * (-2.0 / (q * q));
        psi * (radial + angular) / (self.radius * self.radius)
    }

    pub fn psi_field(&self, grid: &GridSpec) -> GridField {
        GridField::from_fn(*grid, |x| self.psi(x, grid.dim()))
    }

    pub fn grad_psi_fields(&self, grid: &GridSpec) -> Vec<GridField> {
        (0..grid.dim())
            .map(|k| GridField::from_fn(*grid, |x| self.grad_psi(x, grid.dim())[k]))
            .collect()
    }

    pub fn laplacian_field(&self, grid: &GridSpec) -> GridField {
        GridField::from_fn(*grid, |x| self.laplacian_psi(x, grid.dim()))
    }
}

/// Running values of the two test-function martingales: the Brownian part
/// `m1` and the compensated branching part `m2`.
#[derive(Debug, Clone)]
pub struct MartingaleAccumulator {
    n0: usize,
    profile: TimeProfile,
    /// `grad psi * theta_N`, one field per axis.
    g: Vec<GridField>,
    /// `-(psi * theta_N)`.
    g_tilde: GridField,
    m1: f64,
    m2: f64,
}

impl MartingaleAccumulator {
    /// `theta` is `theta_N` sampled on the grid, centred at node `G/2`.
    pub fn new(phi: &TestFunction, theta: &GridField, n0: usize) -> Result<Self> {
        let grid = *theta.spec();
        if phi.amplitude != 0.0 {
            phi.check_support(&grid)?;
        }
        let g = phi
            .grad_psi_fields(&grid)
            .iter()
            .map(|f| convolve(f, theta))
            .collect::<Result<Vec<_>>>()?;
        let g_tilde = convolve(&phi.psi_field(&grid), theta)?.map(|v| -v);
        Ok(Self {
            n0,
            profile: phi.profile,
            g,
            g_tilde,
            m1: 0.0,
            m2: 0.0,
        })
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Adds one step. The report must carry the increments actually used.
    pub fn accumulate(&mut self, report: &StepReport) -> Result<()> {
        let incs = report
            .increments
            .as_ref()
            .ok_or_else(|| Error::Precondition("step increments were not recorded".into()))?;
        if incs.len() != report.alive_before {
            return Err(Error::Precondition(format!(
                "{} increments for {} particles",
                incs.len(),
                report.alive_before
            )));
        }
        let eta = self.profile.value(report.t_start);
        if eta == 0.0 {
            return Ok(());
        }
        let n = self.n0 as f64;
        let dt = report.dt;
        let mut brownian = 0.0;
        let mut compensator = 0.0;
        for inc in incs {
            for (k, g) in self.g.iter().enumerate() {
                brownian += g.interpolate(inc.start) * inc.xi[k];
            }
            if inc.rate != 0.0 {
                compensator += self.g_tilde.interpolate(inc.start) * inc.rate;
            }
        }
        let jumps: f64 = report
            .branches
            .iter()
            .map(|b| self.g_tilde.interpolate(b.position))
            .sum();
        self.m1 += eta * std::f64::consts::SQRT_2 / n * brownian * dt.sqrt();
        self.m2 += eta / n * (jumps - dt * compensator);
        if !(self.m1.is_finite() && self.m2.is_finite()) {
            return Err(Error::Unstable {
                time: report.t_start + dt,
            });
        }
        Ok(())
    }
}

use std::f64::consts::PI;
use std::sync::LazyLock;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::grid::{GridField, GridSpec, Point};
use crate::rng::CounterStream;

/// Initial datum `u0`, written as a mass times a probability density where
/// that makes sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    Zero,
    /// `u0 = c` everywhere. Not normalizable, usable only as PDE data.
    Constant {
        value: f64,
    },
    /// Normal density with covariance `sigma^2 I`.
    Gaussian {
        mass: f64,
        sigma: f64,
        center: Point,
    },
    /// Uniform density on the cube of half-width `half_width`.
    Uniform {
        mass: f64,
        half_width: f64,
        center: Point,
    },
    /// Radial `exp(1 - 1/(1 - |x|^2/r^2))`, normalized.
    SmoothBump {
        mass: f64,
        radius: f64,
        center: Point,
    },
    /// All mass at one point. Violates every smoothness hypothesis.
    PointMass {
        mass: f64,
        center: Point,
    },
}

fn bump_shape(rho2: f64) -> f64 {
    if rho2 < 1.0 {
        (1.0 - 1.0 / (1.0 - rho2)).exp()
    } else {
        0.0
    }
}

const BUMP_TABLE: usize = 8192;

/// Integrals of the unit bump in one and two dimensions, and the 1D CDF table.
struct BumpTables {
    mass: [f64; 2],
    cdf: Vec<f64>,
}

static BUMP: LazyLock<BumpTables> = LazyLock::new(|| {
    // the integrand is flat to all orders at the endpoints, so the trapezoid
    // rule converges faster than any power
    let n = BUMP_TABLE;
    let h = 2.0 / n as f64;
    let mut cdf = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    let mut prev = bump_shape(1.0);
    for i in 1..=n {
        let x = -1.0 + i as f64 * h;
        let cur = bump_shape(x * x);
        acc += 0.5 * h * (prev + cur);
        cdf.push(acc);
        prev = cur;
    }
    let m1 = acc;
    let radial = 200_000;
    let hr = 1.0 / radial as f64;
    let m2 = 2.0
        * PI
        * (1..radial)
            .map(|i| {
                let r = i as f64 * hr;
                bump_shape(r * r) * r
            })
            .sum::<f64>()
        * hr;
    for c in cdf.iter_mut() {
        *c /= m1;
    }
    BumpTables {
        mass: [m1, m2],
        cdf,
    }
});

static STANDARD_NORMAL: LazyLock<Normal> = LazyLock::new(Normal::standard);

impl InitialProfile {
    pub fn name(&self) -> &'static str {
        match self {
            InitialProfile::Zero => "zero",
            InitialProfile::Constant { .. } => "constant",
            InitialProfile::Gaussian { .. } => "gaussian",
            InitialProfile::Uniform { .. } => "uniform",
            InitialProfile::SmoothBump { .. } => "bump",
            InitialProfile::PointMass { .. } => "point",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!(
                    "u0 {name} must be positive and finite, got {v}"
                )))
            }
        };
        let mass_ok = |m: f64| {
            if m >= 0.0 && m.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!(
                    "u0 mass must be nonnegative and finite, got {m}"
                )))
            }
        };
        match *self {
            InitialProfile::Zero => Ok(()),
            InitialProfile::Constant { value } => mass_ok(value),
            InitialProfile::Gaussian { mass, sigma, .. } => {
                mass_ok(mass).and(positive("sigma", sigma))
            }
            InitialProfile::Uniform {
                mass, half_width, ..
            } => mass_ok(mass).and(positive("half_width", half_width)),
            InitialProfile::SmoothBump { mass, radius, .. } => {
                mass_ok(mass).and(positive("radius", radius))
            }
            InitialProfile::PointMass { mass, .. } => mass_ok(mass),
        }
    }

    /// Total mass, or `None` for the constant profile.
    pub fn mass(&self) -> Option<f64> {
        match *self {
            InitialProfile::Zero => Some(0.0),
            InitialProfile::Constant { value } => (value == 0.0).then_some(0.0),
            InitialProfile::Gaussian { mass, .. }
            | InitialProfile::Uniform { mass, .. }
            | InitialProfile::SmoothBump { mass, .. }
            | InitialProfile::PointMass { mass, .. } => Some(mass),
        }
    }

    /// True when `u0` is a bounded function rather than a measure.
    pub fn is_function(&self) -> bool {
        !matches!(self, InitialProfile::PointMass { mass, .. } if *mass > 0.0)
    }

    /// Radius of a ball around the origin outside which `u0` is negligible
    /// (below `1e-12` of its peak for the Gaussian). `None` if unbounded.
    pub fn support_radius(&self, dim: usize) -> Option<f64> {
        let norm = |c: Point| c.iter().take(dim).map(|v| v * v).sum::<f64>().sqrt();
        match *self {
            InitialProfile::Zero => Some(0.0),
            InitialProfile::Constant { value } => (value == 0.0).then_some(0.0),
            InitialProfile::Gaussian { sigma, center, .. } => Some(norm(center) + 7.44 * sigma),
            InitialProfile::Uniform {
                half_width, center, ..
            } => Some(norm(center) + half_width * (dim as f64).sqrt()),
            InitialProfile::SmoothBump { radius, center, .. } => Some(norm(center) + radius),
            InitialProfile::PointMass { center, .. } => Some(norm(center)),
        }
    }

    /// Pointwise value of `u0`.
    pub fn density(&self, x: Point, dim: usize) -> Result<f64> {
        let d = dim as f64;
        let r2 = |c: Point| (0..dim).map(|k| (x[k] - c[k]).powi(2)).sum::<f64>();
        Ok(match *self {
            InitialProfile::Zero => 0.0,
            InitialProfile::Constant { value } => value,
            InitialProfile::Gaussian {
                mass,
                sigma,
                center,
            } => {
                mass * (-r2(center) / (2.0 * sigma * sigma)).exp()
                    / (2.0 * PI * sigma * sigma).powf(d / 2.0)
            }
            InitialProfile::Uniform {
                mass,
                half_width,
                center,
            } => {
                if (0..dim).all(|k| (x[k] - center[k]).abs() <= half_width) {
                    mass / (2.0 * half_width).powi(dim as i32)
                } else {
                    0.0
                }
            }
            InitialProfile::SmoothBump {
                mass,
                radius,
                center,
            } => {
                mass * bump_shape(r2(center) / (radius * radius))
                    / (BUMP.mass[dim - 1] * radius.powi(dim as i32))
            }
            InitialProfile::PointMass { mass, .. } => {
                if mass == 0.0 {
                    0.0
                } else {
                    return Err(invalid("a point mass has no density"));
                }
            }
        })
    }

    /// Samples `u0` at every grid node.
    pub fn to_field(&self, grid: &GridSpec) -> Result<GridField> {
        self.validate()?;
        if !self.is_function() {
            return Err(invalid("a point mass has no density"));
        }
        let dim = grid.dim();
        GridField::from_values(
            *grid,
            (0..grid.len())
                .map(|i| self.density(grid.node(i), dim))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// One draw from `u0 / m` using counters `0..` of `stream`. Inverse CDF in
    /// one dimension, rejection from the bounding box in two.
    pub(crate) fn sample(&self, stream: &CounterStream, dim: usize) -> Result<Point> {
        match *self {
            InitialProfile::Zero | InitialProfile::Constant { .. } => {
                Err(invalid("u0 is not a finite nonzero measure"))
            }
            InitialProfile::PointMass { center, .. } => Ok(center),
            _ if dim == 1 => Ok(self.sample_1d(stream.uniform(0))),
            _ => self.sample_rejection(stream),
        }
    }

    fn sample_1d(&self, u: f64) -> Point {
        match *self {
            InitialProfile::Gaussian { sigma, center, .. } => {
                [center[0] + sigma * STANDARD_NORMAL.inverse_cdf(u), 0.0]
            }
            InitialProfile::Uniform {
                half_width, center, ..
            } => [center[0] + half_width * (2.0 * u - 1.0), 0.0],
            InitialProfile::SmoothBump { radius, center, .. } => {
                let cdf = &BUMP.cdf;
                let i = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
                let (c0, c1) = (cdf[i - 1], cdf[i]);
                let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                let h = 2.0 / BUMP_TABLE as f64;
                let x = -1.0 + (i as f64 - 1.0 + w) * h;
                [center[0] + radius * x, 0.0]
            }
            _ => unreachable!("handled by the caller"),
        }
    }

    fn sample_rejection(&self, stream: &CounterStream) -> Result<Point> {
        let (center, half, peak) = match *self {
            InitialProfile::Gaussian { sigma, center, .. } => (center, 8.0 * sigma, 1.0),
            InitialProfile::Uniform {
                half_width, center, ..
            } => (center, half_width, 1.0),
            InitialProfile::SmoothBump { radius, center, .. } => (center, radius, 1.0),
            _ => unreachable!("handled by the caller"),
        };
        for attempt in 0..1_000_000u64 {
            let c = 3 * attempt;
            let x = [
                center[0] + half * (2.0 * stream.uniform(c) - 1.0),
                center[1] + half * (2.0 * stream.uniform(c + 1) - 1.0),
            ];
            let shape = match *self {
                InitialProfile::Gaussian { sigma, .. } => {
                    let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                    (-r2 / (2.0 * sigma * sigma)).exp()
                }
                InitialProfile::Uniform { .. } => 1.0,
                InitialProfile::SmoothBump { radius, .. } => {
                    let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                    bump_shape(r2 / (radius * radius))
                }
                _ => unreachable!(),
            };
            if stream.uniform(c + 2) * peak < shape {
                return Ok(x);
            }
        }
        Err(invalid("rejection sampler failed to accept"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_integrate_to_their_mass() {
        for dim in [1, 2] {
            let g = GridSpec::new(dim, 6.0, if dim == 1 { 4096 } else { 512 }).unwrap();
            for p in [
                InitialProfile::Gaussian {
                    mass: 0.8,
                    sigma: 1.0,
                    center: [0.3, -0.2],
                },
                InitialProfile::SmoothBump {
                    mass: 1.3,
                    radius: 2.0,
                    center: [0.0, 0.5],
                },
            ] {
                let f = p.to_field(&g).unwrap();
                assert!(
                    (f.integral() - p.mass().unwrap()).abs() < 1e-8,
                    "{p:?} d={dim}: {}",
                    f.integral()
                );
            }
        }
    }

    #[test]
    fn point_mass_has_no_field() {
        let g = GridSpec::new(1, 6.0, 64).unwrap();
        assert!(InitialProfile::PointMass {
            mass: 1.0,
            center: [0.0; 2]
        }
        .to_field(&g)
        .is_err());
        assert!(!InitialProfile::PointMass {
            mass: 1.0,
            center: [0.0; 2]
        }
        .is_function());
    }

    #[test]
    fn bump_inverse_cdf_matches_density() {
        let p = InitialProfile::SmoothBump {
            mass: 1.0,
            radius: 1.0,
            center: [0.0; 2],
        };
        let n = 20_000u64;
        let s = CounterStream::new(3);
        let mut hits = 0;
        for i in 0..n {
            let x = p
                .sample(&CounterStream::new(crate::rng::derive(s.key(), &[i])), 1)
                .unwrap();
            assert!(x[0].abs() <= 1.0);
            if x[0].abs() < 0.3 {
                hits += 1;
            }
        }
        // P(|X| < 0.3) by quadrature
        let m = 20_000;
        let h = 0.6 / m as f64;
        let prob = (0..m)
            .map(|i| p.density([-0.3 + (i as f64 + 0.5) * h, 0.0], 1).unwrap())
            .sum::<f64>()
            * h;
        let freq = hits as f64 / n as f64;
        assert!(
            (freq - prob).abs() < 4.0 * (prob * (1.0 - prob) / n as f64).sqrt(),
            "{freq} vs {prob}"
        );
    }

    #[test]
    fn negative_parameters_rejected() {
        assert!(InitialProfile::Gaussian {
            mass: 1.0,
            sigma: -1.0,
            center: [0.0; 2]
        }
        .validate()
        .is_err());
        assert!(InitialProfile::Uniform {
            mass: -1.0,
            half_width: 1.0,
            center: [0.0; 2]
        }
        .validate()
        .is_err());
    }
}

//! Uniform periodic grids in one or two dimensions and the Fourier-side
//! calculus built on them.
//!
//! A [`GridSpec`] describes the box `[-L, L)^d` sampled at `G` points per
//! axis; node `i` sits at `-L + i * dx`. A [`GridField`] stores one real value
//! per node in row-major order with the x index running fastest.

mod diagnostics;
mod spectral;

pub use diagnostics::{analytic_bound_check, positivity_check, positivity_violation, BoundRow};
pub(crate) use spectral::centered_to_origin;
pub use spectral::{
    convolve, fractional_power, gradient, heat_semigroup, laplacian, sobolev_norm,
    sobolev_norm_squared, Spectrum,
};

use crate::error::{invalid, Error, Result};

/// A point in the box. Only the first `dim` coordinates are meaningful.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    half_length: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_length: f64, points: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::Grid(format!(
                "half-length must be positive, got {half_length}"
            )));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::Grid(format!(
                "points per axis must be a power of two >= 8, got {points}"
            )));
        }
        Ok(Self {
            dim,
            half_length,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of nodes, `G^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.spacing()
    }

    /// Physical position of the node with flat index `idx`.
    pub fn node(&self, idx: usize) -> Point {
        let g = self.points;
        match self.dim {
            1 => [self.coordinate(idx), 0.0],
            _ => [self.coordinate(idx % g), self.coordinate(idx / g)],
        }
    }

    pub fn wrap_index(&self, i: isize) -> usize {
        i.rem_euclid(self.points as isize) as usize
    }

    /// Maps a coordinate into `[-L, L)`.
    pub fn wrap_coordinate(&self, x: f64) -> f64 {
        let period = 2.0 * self.half_length;
        let y = (x + self.half_length).rem_euclid(period) - self.half_length;
        // rem_euclid can round up to exactly `period`
        if y >= self.half_length {
            -self.half_length
        } else {
            y
        }
    }

    pub fn wrap_point(&self, p: Point) -> Point {
        let mut q = p;
        for c in q.iter_mut().take(self.dim) {
            *c = self.wrap_coordinate(*c);
        }
        q
    }

    /// Shortest periodic displacement equivalent to `x`.
    pub fn minimal_image(&self, x: f64) -> f64 {
        self.wrap_coordinate(x)
    }

    /// Angular wavenumber `pi k / L` of FFT bin `k` (standard FFT ordering).
    pub fn wavenumber(&self, bin: usize) -> f64 {
        let g = self.points as isize;
        let k = bin as isize;
        let signed = if k < g / 2 { k } else { k - g };
        std::f64::consts::PI * signed as f64 / self.half_length
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points).map(|b| self.wavenumber(b)).collect()
    }

    /// The same box with `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.dim, self.half_length, self.points * factor)
    }

    /// Axis indices of a flat index.
    pub fn axis_indices(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx % self.points, idx / self.points],
        }
    }
}

/// Real-valued function sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self {
            spec,
            values: vec![c; spec.len()],
        }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(spec.node(i))).collect();
        Self { spec, values }
    }

    /// Wraps raw values, rejecting wrong lengths and non-finite entries.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(invalid(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        let field = Self { spec, values };
        field.check_finite()?;
        Ok(field)
    }

    pub(crate) fn from_values_unchecked(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Rectangle-rule integral over the box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    /// Rectangle-rule L2 norm.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.spec.cell_volume()).sqrt()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.spec != other.spec {
            return Err(invalid("fields live on different grids"));
        }
        Ok(())
    }

    /// Multilinear periodic interpolation at an arbitrary point.
    pub fn interpolate(&self, p: Point) -> f64 {
        let s = &self.spec;
        let g = s.points;
        let dx = s.spacing();
        let locate = |x: f64| {
            let u = (x + s.half_length) / dx;
            let i0 = u.floor();
            let w = u - i0;
            let i = s.wrap_index(i0 as isize);
            (i, (i + 1) % g, w)
        };
        match s.dim {
            1 => {
                let (i, j, w) = locate(p[0]);
                (1.0 - w) * self.values[i] + w * self.values[j]
            }
            _ => {
                let (i0, i1, wx) = locate(p[0]);
                let (j0, j1, wy) = locate(p[1]);
                let v = &self.values;
                (1.0 - wy) * ((1.0 - wx) * v[i0 + g * j0] + wx * v[i1 + g * j0])
                    + wy * ((1.0 - wx) * v[i0 + g * j1] + wx * v[i1 + g * j1])
            }
        }
    }

    /// Restriction of a field on a finer nested grid onto `coarse`.
    pub fn restrict_to(&self, coarse: &GridSpec) -> Result<Self> {
        let fine = &self.spec;
        if fine.dim != coarse.dim
            || (fine.half_length - coarse.half_length).abs() > 1e-12 * fine.half_length
            || !fine.points.is_multiple_of(coarse.points)
        {
            return Err(invalid("restriction needs a nested grid on the same box"));
        }
        let m = fine.points / coarse.points;
        let gc = coarse.points;
        let gf = fine.points;
        let values = (0..coarse.len())
            .map(|idx| {
                let [i, j] = coarse.axis_indices(idx);
                match coarse.dim {
                    1 => self.values[i * m],
                    _ => self.values[i * m + gf * (j * m)],
                }
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(values.len(), gc.pow(coarse.dim as u32));
        Ok(Self {
            spec: *coarse,
            values,
        })
    }
}

/// Sobolev order `s` for multipliers `(1 + |lambda|^2)^(s/2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SobolevOrder(f64);

impl SobolevOrder {
    pub const MAX_ABS: f64 = 6.0;

    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() || s.abs() > Self::MAX_ABS {
            return Err(invalid(format!(
                "Sobolev order must lie in [-6, 6], got {s}"
            )));
        }
        Ok(Self(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

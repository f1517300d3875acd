use std::sync::{Arc, LazyLock, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{GridField, GridSpec, SobolevOrder};
use crate::error::{Error, Result};

static PLANNER: LazyLock<Mutex<FftPlanner<f64>>> = LazyLock::new(|| Mutex::new(FftPlanner::new()));

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = PLANNER.lock().unwrap_or_else(|e| e.into_inner());
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in 0..n {
            dst[i * n + j] = src[j * n + i];
        }
    }
}

fn fft_in_place(spec: &GridSpec, data: &mut [Complex64], forward: bool) {
    let n = spec.points();
    let (fwd, inv) = plans(n);
    let plan = if forward { fwd } else { inv };
    plan.process(data);
    if spec.dim() == 2 {
        let mut scratch = vec![Complex64::default(); data.len()];
        transpose(data, &mut scratch, n);
        plan.process(&mut scratch);
        transpose(&scratch, data, n);
    }
}

/// Unnormalized discrete Fourier coefficients of a [`GridField`].
///
/// Bin `k` approximates `F(lambda_k) / dx^d` where `F` is the continuous
/// transform of the periodically extended field.
#[derive(Debug, Clone)]
pub struct Spectrum {
    spec: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn forward(field: &GridField) -> Self {
        let spec = *field.spec();
        let mut coeffs: Vec<Complex64> = field
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft_in_place(&spec, &mut coeffs, true);
        Self { spec, coeffs }
    }

    /// Real part of the inverse transform; multipliers used in this crate
    /// are even in the wavenumber, so the imaginary part is round-off.
    pub fn inverse(mut self) -> GridField {
        fft_in_place(&self.spec, &mut self.coeffs, false);
        let scale = 1.0 / self.spec.len() as f64;
        let values = self.coeffs.iter().map(|c| c.re * scale).collect();
        GridField::from_values_unchecked(self.spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Squared modulus of the wavevector for every bin.
    pub fn wavenumber_squared(spec: &GridSpec) -> Vec<f64> {
        let k = spec.wavenumbers();
        match spec.dim() {
            1 => k.iter().map(|v| v * v).collect(),
            _ => {
                let n = spec.points();
                (0..spec.len())
                    .map(|idx| {
                        let (i, j) = (idx % n, idx / n);
                        k[i] * k[i] + k[j] * k[j]
                    })
                    .collect()
            }
        }
    }

    /// Multiplies every bin by `m(|lambda|^2)`.
    pub fn apply_radial(&mut self, m: impl Fn(f64) -> f64) {
        let k2 = Self::wavenumber_squared(&self.spec);
        for (c, &q) in self.coeffs.iter_mut().zip(&k2) {
            *c *= m(q);
        }
    }

    /// Multiplies bin `i` by `weights[i]`.
    pub fn multiply_real(&mut self, weights: &[f64]) {
        assert_eq!(weights.len(), self.coeffs.len());
        for (c, &w) in self.coeffs.iter_mut().zip(weights) {
            *c *= w;
        }
    }

    pub fn multiply(&mut self, other: &Spectrum) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a *= *b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    /// `sum (1 + |lambda|^2)^s |F|^2` with the Parseval weight, i.e. the
    /// squared `W^{s,2}` norm of the field this spectrum came from.
    pub fn sobolev_norm_squared(&self, s: f64) -> f64 {
        let k2 = Self::wavenumber_squared(&self.spec);
        let weight = self.spec.cell_volume() / self.spec.len() as f64;
        let sum: f64 = if s == 0.0 {
            self.coeffs.iter().map(|c| c.norm_sqr()).sum()
        } else {
            self.coeffs
                .iter()
                .zip(&k2)
                .map(|(c, &q)| (1.0 + q).powf(s) * c.norm_sqr())
                .sum()
        };
        sum * weight
    }

    /// Squared `W^{s,2}` norm of the difference of two spectra on the same grid.
    pub fn sobolev_distance_squared(&self, other: &Spectrum, s: f64) -> f64 {
        let k2 = Self::wavenumber_squared(&self.spec);
        let weight = self.spec.cell_volume() / self.spec.len() as f64;
        let sum: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .zip(&k2)
            .map(|((a, b), &q)| (1.0 + q).powf(s) * (a - b).norm_sqr())
            .sum();
        sum * weight
    }
}

fn apply_radial(f: &GridField, m: impl Fn(f64) -> f64) -> GridField {
    let mut s = Spectrum::forward(f);
    s.apply_radial(m);
    s.inverse()
}

/// Heat flow `e^{tA} f` with `A` the Laplacian: multiplier `exp(-t |lambda|^2)`.
pub fn heat_semigroup(f: &GridField, t: f64) -> Result<GridField> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    f.check_finite()?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(apply_radial(f, |q| (-t * q).exp()))
}

/// Bessel potential `(I - A)^{s/2} f`.
pub fn fractional_power(f: &GridField, s: SobolevOrder) -> Result<GridField> {
    f.check_finite()?;
    let half = s.value() / 2.0;
    if half == 0.0 {
        return Ok(f.clone());
    }
    Ok(apply_radial(f, |q| (1.0 + q).powf(half)))
}

/// Spectral Laplacian.
pub fn laplacian(f: &GridField) -> GridField {
    apply_radial(f, |q| -q)
}

/// Spectral gradient, one field per axis. The Nyquist bin is dropped so the
/// result stays real.
pub fn gradient(f: &GridField) -> Vec<GridField> {
    let spec = *f.spec();
    let base = Spectrum::forward(f);
    let n = spec.points();
    let k = spec.wavenumbers();
    (0..spec.dim())
        .map(|axis| {
            let mut s = base.clone();
            for (idx, c) in s.coeffs.iter_mut().enumerate() {
                let [i, j] = spec.axis_indices(idx);
                let bin = if axis == 0 { i } else { j };
                let factor = if bin == n / 2 { 0.0 } else { k[bin] };
                *c *= Complex64::new(0.0, factor);
            }
            s.inverse()
        })
        .collect()
}

/// Fourier-multiplier Sobolev norm `||(I - A)^{s/2} f||_{L^2}`.
pub fn sobolev_norm(f: &GridField, s: SobolevOrder) -> f64 {
    sobolev_norm_squared(f, s).sqrt()
}

pub fn sobolev_norm_squared(f: &GridField, s: SobolevOrder) -> f64 {
    Spectrum::forward(f).sobolev_norm_squared(s.value())
}

/// Periodic convolution `(f * g)(x) = integral f(x - y) g(y) dy`, where `g`
/// is laid out with the origin at node `G/2` (physical coordinate 0).
pub fn convolve(f: &GridField, g: &GridField) -> Result<GridField> {
    f.check_same_grid(g)?;
    let spec = *f.spec();
    // node G/2 is x = 0; rotate it to index 0
    let shifted = centered_to_origin(g);
    let mut a = Spectrum::forward(f);
    let b = Spectrum::forward(&shifted);
    a.multiply(&b);
    a.scale(spec.cell_volume());
    Ok(a.inverse())
}

/// Reorders a field whose origin is at node `G/2` so the origin is at index 0.
pub(crate) fn centered_to_origin(g: &GridField) -> GridField {
    let spec = *g.spec();
    let n = spec.points();
    let h = n / 2;
    let v = g.values();
    let values = match spec.dim() {
        1 => (0..n).map(|i| v[(i + h) % n]).collect(),
        _ => (0..spec.len())
            .map(|idx| {
                let (i, j) = (idx % n, idx / n);
                v[(i + h) % n + n * ((j + h) % n)]
            })
            .collect(),
    };
    GridField::from_values_unchecked(spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(spec: GridSpec, var: f64) -> GridField {
        let d = spec.dim() as i32;
        GridField::from_fn(spec, |p| {
            let r2 = p[0] * p[0] + if spec.dim() == 2 { p[1] * p[1] } else { 0.0 };
            (-r2 / (2.0 * var)).exp() / (2.0 * PI * var).powf(d as f64 / 2.0)
        })
    }

    #[test]
    fn heat_at_zero_time_is_identity() {
        let g = GridSpec::new(1, 10.0, 256).unwrap();
        let f = gaussian(g, 1.0);
        assert_eq!(heat_semigroup(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn heat_rejects_negative_time_and_nan_input() {
        let g = GridSpec::new(1, 10.0, 64).unwrap();
        let f = GridField::zeros(g);
        assert!(matches!(
            heat_semigroup(&f, -0.1),
            Err(Error::NegativeTime(_))
        ));
        let mut bad = f.clone();
        bad.values_mut()[5] = f64::INFINITY;
        assert!(heat_semigroup(&bad, 0.1).is_err());
    }

    #[test]
    fn heat_spreads_gaussian_variance_by_two_t() {
        // closed form: N(0,1) * heat kernel at t = N(0, 1 + 2t)
        for dim in [1, 2] {
            let g = GridSpec::new(dim, 16.0, if dim == 1 { 1024 } else { 256 }).unwrap();
            let out = heat_semigroup(&gaussian(g, 1.0), 0.5).unwrap();
            let exact = gaussian(g, 2.0);
            let err = out.zip_map(&exact, |a, b| a - b).unwrap().sup_norm();
            assert!(err < 1e-8, "dim {dim}: {err}");
        }
        let g = GridSpec::new(1, 16.0, 1024).unwrap();
        let out = heat_semigroup(&gaussian(g, 1.0), 0.5).unwrap();
        assert!((out.max() - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn constants_are_fixed_by_heat_flow() {
        let g = GridSpec::new(2, 3.0, 32).unwrap();
        let f = GridField::constant(g, 0.7);
        let out = heat_semigroup(&f, 2.5).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn single_mode_fractional_power() {
        let g = GridSpec::new(1, PI, 64).unwrap();
        let f = GridField::from_fn(g, |p| p[0].cos());
        let out = fractional_power(&f, SobolevOrder::new(1.0).unwrap()).unwrap();
        let exact = f.map(|v| 2f64.sqrt() * v);
        assert!(out.zip_map(&exact, |a, b| a - b).unwrap().sup_norm() < 1e-12);
        let same = fractional_power(&f, SobolevOrder::new(0.0).unwrap()).unwrap();
        assert_eq!(same, f);
    }

    #[test]
    fn order_two_power_is_identity_minus_laplacian() {
        let g = GridSpec::new(1, 12.0, 512).unwrap();
        let f = gaussian(g, 1.0);
        let out = fractional_power(&f, SobolevOrder::new(2.0).unwrap()).unwrap();
        let lap = laplacian(&f);
        let direct = f.zip_map(&lap, |a, b| a - b).unwrap();
        assert!(out.zip_map(&direct, |a, b| a - b).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn fractional_power_round_trip() {
        let g = GridSpec::new(1, 12.0, 256).unwrap();
        let f = gaussian(g, 0.5);
        let s = SobolevOrder::new(1.7).unwrap();
        let back = fractional_power(
            &fractional_power(&f, s).unwrap(),
            SobolevOrder::new(-1.7).unwrap(),
        )
        .unwrap();
        let rel = back.zip_map(&f, |a, b| a - b).unwrap().l2_norm() / f.l2_norm();
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn sobolev_norms_of_standard_gaussian() {
        let g = GridSpec::new(1, 20.0, 1024).unwrap();
        let f = gaussian(g, 1.0);
        assert_eq!(
            sobolev_norm(&GridField::zeros(g), SobolevOrder::new(1.0).unwrap()),
            0.0
        );
        // integral of phi^2 = 1 / (2 sqrt(pi))
        let l2 = sobolev_norm(&f, SobolevOrder::new(0.0).unwrap());
        assert!((l2 - (1.0 / (2.0 * PI.sqrt())).sqrt()).abs() < 1e-6);
        assert!((l2 - f.l2_norm()).abs() < 1e-10 * l2);
        // quadrature oracle with the analytic derivative phi' = -x phi
        let dx = g.spacing();
        let h1_sq: f64 = (0..g.len())
            .map(|i| {
                let x = g.coordinate(i);
                let phi = (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
                phi * phi + x * x * phi * phi
            })
            .sum::<f64>()
            * dx;
        let h1 = sobolev_norm(&f, SobolevOrder::new(1.0).unwrap());
        assert!((h1 - h1_sq.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn gradient_of_sine() {
        let g = GridSpec::new(2, PI, 32).unwrap();
        let f = GridField::from_fn(g, |p| (2.0 * p[0]).sin() * p[1].cos());
        let grad = gradient(&f);
        let gx = GridField::from_fn(g, |p| 2.0 * (2.0 * p[0]).cos() * p[1].cos());
        let gy = GridField::from_fn(g, |p| -(2.0 * p[0]).sin() * p[1].sin());
        assert!(grad[0].zip_map(&gx, |a, b| a - b).unwrap().sup_norm() < 1e-12);
        assert!(grad[1].zip_map(&gy, |a, b| a - b).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn convolution_of_gaussians_adds_variances() {
        let g = GridSpec::new(1, 20.0, 1024).unwrap();
        let a = gaussian(g, 0.5);
        let b = gaussian(g, 0.25);
        let out = convolve(&a, &b).unwrap();
        let exact = gaussian(g, 0.75);
        assert!(out.zip_map(&exact, |x, y| x - y).unwrap().sup_norm() < 1e-12);
    }
}

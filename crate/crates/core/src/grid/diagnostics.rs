use super::spectral::{fractional_power, heat_semigroup, Spectrum};
use super::{GridField, GridSpec, SobolevOrder};
use crate::error::{invalid, Error, Result};
use crate::rng::CounterStream;

/// One row of the smoothing-bound table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub t: f64,
    /// `sup_lambda (1 + |lambda|^2)^s exp(-t |lambda|^2)` over the lattice.
    pub operator_norm: f64,
    /// `t^s * operator_norm`, the implied constant.
    pub c_estimate: f64,
}

/// Lattice estimate of `||(I - A)^s e^{tA}||` for every `t` in `times`.
/// The sup over the rows' `c_estimate` is the smoothing constant.
pub fn analytic_bound_check(
    grid: &GridSpec,
    s: SobolevOrder,
    times: &[f64],
) -> Result<Vec<BoundRow>> {
    let k2 = Spectrum::wavenumber_squared(grid);
    let s = s.value();
    times
        .iter()
        .map(|&t| {
            if !(t > 0.0) {
                return Err(invalid(format!("times must be positive, got {t}")));
            }
            let operator_norm = k2
                .iter()
                .map(|&q| (1.0 + q).powf(s) * (-t * q).exp())
                .fold(0.0, f64::max);
            Ok(BoundRow {
                t,
                operator_norm,
                c_estimate: t.powf(s) * operator_norm,
            })
        })
        .collect()
}

/// Most negative value of `(I - A)^{s/2} e^{tA} f`, relative to `||f||_inf`.
/// Returns 0 when the output is nonnegative or `f` vanishes.
pub fn positivity_violation(f: &GridField, s: SobolevOrder, t: f64) -> Result<f64> {
    let scale = f.sup_norm();
    let out = fractional_power(&heat_semigroup(f, t)?, s)?;
    if scale == 0.0 {
        return Ok(out.min().min(0.0));
    }
    Ok((out.min() / scale).min(0.0))
}

/// Draws `trials` random nonnegative mixtures of Gaussian bumps, applies
/// `(I - A)^{s/2} e^{tA}` and returns the worst relative negative value.
pub fn positivity_check(
    grid: &GridSpec,
    s: SobolevOrder,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("positivity check needs at least one trial"));
    }
    if !(0.0..=1.0).contains(&s.value()) || s.value() == 0.0 {
        return Err(invalid(format!(
            "order must lie in (0, 1], got {}",
            s.value()
        )));
    }
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let l = grid.half_length();
    let dx = grid.spacing();
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let stream = CounterStream::new(crate::rng::derive(seed, &[trial as u64]));
        let bumps = 1 + (stream.uniform(0) * 3.0) as usize;
        let mut params = Vec::with_capacity(bumps);
        for b in 0..bumps as u64 {
            let c = 1 + 8 * b;
            let center = [
                (stream.uniform(c) - 0.5) * l,
                (stream.uniform(c + 1) - 0.5) * l,
            ];
            // widths from two cells up to a tenth of the box
            let width = 2.0 * dx + stream.uniform(c + 2) * (0.1 * l);
            let amp = 0.1 + stream.uniform(c + 3);
            params.push((center, width, amp));
        }
        let f = GridField::from_fn(*grid, |p| {
            params
                .iter()
                .map(|(c, w, a)| {
                    let mut r2 = (p[0] - c[0]).powi(2);
                    if grid.dim() == 2 {
                        r2 += (p[1] - c[1]).powi(2);
                    }
                    a * (-r2 / (2.0 * w * w)).exp()
                })
                .sum()
        });
        worst = worst.min(positivity_violation(&f, s, t)?);
    }
    Ok(worst)
}

use super::step_count;
use crate::error::{invalid, Error, Result};
use crate::grid::GridField;

/// Method of lines with the second-order periodic Laplacian and classical
/// RK4 in time, logistic reaction. Independent of the spectral machinery;
/// used as a cross-check at coarse resolution.
pub fn solve_finite_difference(u0: &GridField, horizon: f64, dt: f64) -> Result<GridField> {
    let spec = *u0.spec();
    let dim = spec.dim();
    let dx = spec.spacing();
    // RK4 is stable on the negative real axis up to about 2.78
    let limit = 2.78 * dx * dx / (4.0 * dim as f64);
    if !(dt > 0.0 && dt <= limit) {
        return Err(invalid(format!(
            "finite-difference step must lie in (0, {limit:.3e}], got {dt}"
        )));
    }
    let n = step_count(horizon, dt)?;
    let g = spec.points();
    let inv = 1.0 / (dx * dx);
    let rhs = |u: &[f64], out: &mut [f64]| {
        for idx in 0..u.len() {
            let [i, j] = spec.axis_indices(idx);
            let v = u[idx];
            let mut lap = u[(i + 1) % g + g * j] + u[(i + g - 1) % g + g * j] - 2.0 * v;
            if dim == 2 {
                lap += u[i + g * ((j + 1) % g)] + u[i + g * ((j + g - 1) % g)] - 2.0 * v;
            }
            out[idx] = lap * inv + v * (1.0 - v);
        }
    };
    let len = spec.len();
    let mut u = u0.values().to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    );
    for s in 0..n {
        rhs(&u, &mut k1);
        for i in 0..len {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..len {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..len {
            tmp[i] = u[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..len {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unstable {
                time: (s + 1) as f64 * dt,
            });
        }
    }
    GridField::from_values(spec, u)
}

use rustfft::num_complex::Complex64;

use super::{step_count, PdeSolution, Reaction, ReactionKind, Stepper};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, Spectrum};
use crate::kernels::MollifierSpec;

fn check_unit_interval(u0: &GridField) -> Result<()> {
    u0.check_finite()?;
    if u0.min() < 0.0 || u0.max() > 1.0 {
        return Err(Error::Precondition(format!(
            "initial data must lie in [0, 1], got [{}, {}]",
            u0.min(),
            u0.max()
        )));
    }
    Ok(())
}

fn sup_diff(a: &GridField, b: &GridField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs two solvers in lockstep and returns the largest pointwise gap.
fn lockstep(
    u0: &GridField,
    a: &ReactionKind,
    b: &ReactionKind,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let n = step_count(horizon, dt)?;
    let mut sa = Stepper::new(u0, a, dt)?;
    let mut sb = Stepper::new(u0, b, dt)?;
    let mut worst = 0.0f64;
    for _ in 0..n {
        sa.step()?;
        sb.step()?;
        worst = worst.max(sup_diff(sa.field(), sb.field()));
    }
    Ok(worst)
}

/// Largest gap between the clipped and logistic solutions over every step.
pub fn compare_clipped_vs_logistic(u0: &GridField, horizon: f64, dt: f64) -> Result<f64> {
    check_unit_interval(u0)?;
    lockstep(
        u0,
        &ReactionKind::Clipped,
        &ReactionKind::Logistic,
        horizon,
        dt,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    pub n0: usize,
    pub epsilon: f64,
    pub sup_diff: f64,
}

/// Gap between the nonlocal solution for each `N0` and the local one.
pub fn nonlocal_to_local_refinement(
    u0: &GridField,
    mollifier: &MollifierSpec,
    n0_list: &[usize],
    horizon: f64,
    dt: f64,
) -> Result<Vec<RefinementRow>> {
    check_unit_interval(u0)?;
    n0_list
        .iter()
        .map(|&n0| {
            let kind = ReactionKind::Nonlocal {
                mollifier: *mollifier,
                n0,
            };
            Ok(RefinementRow {
                n0,
                epsilon: mollifier.epsilon(n0)?,
                sup_diff: lockstep(u0, &kind, &ReactionKind::Logistic, horizon, dt)?,
            })
        })
        .collect()
}

/// `(t, ||u_t - e^{tA} u_0 - integral_0^t e^{(t-s)A} g(u_s) ds||_{L^2})` at
/// every snapshot after the first, with the time integral done by the
/// trapezoid rule over the snapshot times.
pub fn mild_residual_profile(sol: &PdeSolution) -> Result<Vec<(f64, f64)>> {
    if sol.times.len() < 3 {
        return Err(invalid("mild residual needs at least three snapshots"));
    }
    if sol.times[0] != 0.0 {
        return Err(invalid("mild residual needs the snapshot at t = 0"));
    }
    if sol.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("snapshot times must increase"));
    }
    let u0 = &sol.fields[0];
    let spec = *u0.spec();
    let reaction = Reaction::bind(&sol.kind, u0)?;
    let k2 = Spectrum::wavenumber_squared(&spec);
    let u0_hat = Spectrum::forward(u0);
    let weight = spec.cell_volume() / spec.len() as f64;

    let mut integral = vec![Complex64::default(); spec.len()];
    let mut g_prev = Spectrum::forward(&reaction.eval(u0)?);
    let mut out = Vec::with_capacity(sol.times.len() - 1);
    for i in 1..sol.times.len() {
        let t = sol.times[i];
        let step = t - sol.times[i - 1];
        let g_cur = Spectrum::forward(&reaction.eval(&sol.fields[i])?);
        let u_hat = Spectrum::forward(&sol.fields[i]);
        let mut sq = 0.0;
        for (b, &q) in k2.iter().enumerate() {
            let e = (-step * q).exp();
            integral[b] =
                e * integral[b] + 0.5 * step * (e * g_prev.coeffs()[b] + g_cur.coeffs()[b]);
            let mild = (-t * q).exp() * u0_hat.coeffs()[b] + integral[b];
            sq += (u_hat.coeffs()[b] - mild).norm_sqr();
        }
        out.push((t, (sq * weight).sqrt()));
        g_prev = g_cur;
    }
    Ok(out)
}

/// Largest mild-form residual over the snapshots.
pub fn mild_residual(sol: &PdeSolution) -> Result<f64> {
    Ok(mild_residual_profile(sol)?
        .iter()
        .fold(0.0, |m, &(_, r)| m.max(r)))
}

/// Position of the rightmost crossing of `level` at every snapshot.
pub fn front_positions(sol: &PdeSolution, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("level must lie in (0, 1), got {level}")));
    }
    let spec = match sol.fields.first() {
        Some(f) => *f.spec(),
        None => return Err(invalid("solution has no snapshots")),
    };
    if spec.dim() != 1 {
        return Err(invalid("front tracking is one-dimensional"));
    }
    let g = spec.points();
    sol.times
        .iter()
        .zip(&sol.fields)
        .map(|(&t, f)| {
            let v = f.values();
            let i = (0..g)
                .rev()
                .find(|&i| v[i] >= level)
                .ok_or_else(|| invalid(format!("level {level} is never reached at t = {t}")))?;
            let x = if i + 1 < g {
                spec.coordinate(i) + spec.spacing() * (v[i] - level) / (v[i] - v[i + 1])
            } else {
                spec.coordinate(i)
            };
            Ok((t, x))
        })
        .collect()
}

/// Least-squares slope of the front position over the second half of the
/// horizon.
pub fn front_speed(sol: &PdeSolution, level: f64) -> Result<f64> {
    let horizon = sol.times.last().copied().unwrap_or(0.0);
    let late: Vec<(f64, f64)> = front_positions(sol, level)?
        .into_iter()
        .filter(|&(t, _)| t >= 0.5 * horizon)
        .collect();
    if late.len() < 2 || horizon <= 0.0 {
        return Err(invalid(
            "front speed needs at least two snapshots in the second half",
        ));
    }
    Ok(crate::stats::ls_slope(&late))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::kernels::BaseKernel;
    use crate::particles::InitialProfile;
    use crate::pde::solve;

    fn grid() -> GridSpec {
        GridSpec::new(1, 20.0, 1024).unwrap()
    }

    fn bump(g: &GridSpec) -> GridField {
        InitialProfile::Gaussian {
            mass: 0.8 * (2.0 * std::f64::consts::PI).sqrt(),
            sigma: 1.0,
            center: [0.0; 2],
        }
        .to_field(g)
        .unwrap()
    }

    #[test]
    fn clipped_and_logistic_agree_on_unit_interval_data() {
        let d = compare_clipped_vs_logistic(&bump(&grid()), 1.0, 1e-2).unwrap();
        assert!(d < 1e-7, "{d}");
        for c in [0.0, 1.0] {
            let u0 = GridField::constant(grid(), c);
            assert_eq!(compare_clipped_vs_logistic(&u0, 1.0, 1e-2).unwrap(), 0.0);
        }
        assert!(compare_clipped_vs_logistic(&GridField::constant(grid(), 1.5), 1.0, 1e-2).is_err());
    }

    #[test]
    fn refinement_decreases() {
        let m = MollifierSpec::new(BaseKernel::Gaussian, 0.25, 1, 1.0, false).unwrap();
        let g = GridSpec::new(1, 20.0, 2048).unwrap();
        let rows = nonlocal_to_local_refinement(&bump(&g), &m, &[1, 100, 1000, 10_000], 1.0, 1e-2)
            .unwrap();
        for w in rows.windows(2) {
            assert!(w[1].sup_diff < w[0].sup_diff, "{rows:?}");
        }
        let flat =
            nonlocal_to_local_refinement(&GridField::constant(g, 0.4), &m, &[100, 1000], 1.0, 1e-2)
                .unwrap();
        assert!(flat.iter().all(|r| r.sup_diff < 1e-10));
    }

    #[test]
    fn refinement_rejects_under_resolved_grid() {
        let m = MollifierSpec::new(BaseKernel::Gaussian, 0.25, 1, 1.0, false).unwrap();
        let g = GridSpec::new(1, 20.0, 64).unwrap();
        assert!(nonlocal_to_local_refinement(&bump(&g), &m, &[10_000], 1.0, 1e-2).is_err());
    }

    #[test]
    fn mild_residual_of_zero_is_zero() {
        let sol = solve(
            &GridField::zeros(grid()),
            &ReactionKind::Logistic,
            0.1,
            0.01,
            &[],
        )
        .unwrap();
        assert_eq!(mild_residual(&sol).unwrap(), 0.0);
    }

    #[test]
    fn mild_residual_on_constant_data_matches_scalar_quadrature() {
        let g = GridSpec::new(1, 20.0, 64).unwrap();
        let sol = solve(
            &GridField::constant(g, 0.1),
            &ReactionKind::Logistic,
            1.0,
            1e-3,
            &[],
        )
        .unwrap();
        let r = mild_residual_profile(&sol).unwrap();
        // scalar oracle: u(t) - u0 - trapezoid integral of u(1-u), times sqrt(|box|)
        let u = |t: f64| 0.1 * t.exp() / (0.9 + 0.1 * t.exp());
        let mut integral = 0.0;
        let h = 1e-3;
        for (i, &(t, res)) in r.iter().enumerate() {
            let (a, b) = (u(t - h), u(t));
            integral += 0.5 * h * (a * (1.0 - a) + b * (1.0 - b));
            let scalar = (u(t) - 0.1 - integral).abs() * 40f64.sqrt();
            assert!((res - scalar).abs() < 1e-12, "step {i}: {res} vs {scalar}");
        }
        assert!(mild_residual(&sol).unwrap() < 1e-5);
    }

    #[test]
    fn mild_residual_is_second_order() {
        let g = grid();
        let res = |dt: f64| {
            mild_residual(&solve(&bump(&g), &ReactionKind::Logistic, 1.0, dt, &[]).unwrap())
                .unwrap()
        };
        let ratio = res(2e-2) / res(1e-2);
        assert!(ratio >= 3.5, "{ratio}");
    }

    #[test]
    fn mild_residual_needs_snapshots() {
        let sol = solve(
            &bump(&grid()),
            &ReactionKind::Logistic,
            1.0,
            0.1,
            &[0.0, 1.0],
        )
        .unwrap();
        assert!(mild_residual(&sol).is_err());
        let sol = solve(
            &bump(&grid()),
            &ReactionKind::Logistic,
            1.0,
            0.1,
            &[0.5, 0.7, 1.0],
        )
        .unwrap();
        assert!(mild_residual(&sol).is_err());
    }

    #[test]
    fn front_needs_a_crossing() {
        let sol = solve(
            &GridField::zeros(grid()),
            &ReactionKind::Logistic,
            1.0,
            0.1,
            &[],
        )
        .unwrap();
        assert!(front_speed(&sol, 0.5).is_err());
    }

    #[test]
    fn front_interpolates_between_nodes() {
        let g = GridSpec::new(1, 8.0, 64).unwrap();
        let u0 = GridField::from_fn(g, |x| (1.0 - x[0].abs() / 4.0).max(0.0));
        let sol = solve(&u0, &ReactionKind::Logistic, 0.0, 0.1, &[0.0]).unwrap();
        let (_, x) = front_positions(&sol, 0.5).unwrap()[0];
        assert!((x - 2.0).abs() < 1e-12);
    }
}

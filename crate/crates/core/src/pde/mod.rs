//! Reaction-diffusion solvers for `du/dt = Laplacian u + g(u)`.
//!
//! Time stepping is Strang splitting: half a step of exact spectral heat
//! flow, a full reaction step, another half step of heat flow.

mod analysis;
mod fd;

pub use analysis::{
    compare_clipped_vs_logistic, front_speed, mild_residual, nonlocal_to_local_refinement,
    RefinementRow,
};
pub use fd::solve_finite_difference;

use crate::density::{DensityEstimator, DepositScheme};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, Spectrum};
use crate::kernels::MollifierSpec;

/// Largest admissible time step.
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReactionKind {
    /// `u (1 - u)`.
    Logistic,
    /// `u (1 - u)^+`.
    Clipped,
    /// `u (1 - theta_{N0} * u)^+`.
    Nonlocal { mollifier: MollifierSpec, n0: usize },
}

impl ReactionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReactionKind::Logistic => "logistic",
            ReactionKind::Clipped => "clipped",
            ReactionKind::Nonlocal { .. } => "nonlocal",
        }
    }
}

/// The reaction term `g(u)` bound to a grid.
#[derive(Debug, Clone)]
pub(crate) enum Reaction {
    Logistic,
    Clipped,
    Nonlocal(Box<DensityEstimator>),
}

impl Reaction {
    pub(crate) fn bind(kind: &ReactionKind, u0: &GridField) -> Result<Self> {
        Ok(match kind {
            ReactionKind::Logistic => Reaction::Logistic,
            ReactionKind::Clipped => Reaction::Clipped,
            ReactionKind::Nonlocal { mollifier, n0 } => Reaction::Nonlocal(Box::new(
                DensityEstimator::new(*mollifier, *n0, u0.spec(), DepositScheme::Linear)?,
            )),
        })
    }

    /// Pointwise `g(u)` as a field.
    pub(crate) fn eval(&self, u: &GridField) -> Result<GridField> {
        Ok(match self {
            Reaction::Logistic => u.map(|v| v * (1.0 - v)),
            Reaction::Clipped => u.map(|v| v * (1.0 - v).max(0.0)),
            Reaction::Nonlocal(est) => {
                let s = est.smooth(u)?;
                u.zip_map(&s, |v, w| v * (1.0 - w).max(0.0))?
            }
        })
    }

    /// Advances `du/dt = g(u)` by `dt`: exactly for the logistic term, by
    /// classical RK4 otherwise.
    fn advance(&self, u: &mut GridField, dt: f64) -> Result<()> {
        match self {
            Reaction::Logistic => {
                let e = dt.exp();
                for v in u.values_mut() {
                    *v = *v * e / (1.0 - *v + *v * e);
                }
            }
            _ => {
                let k1 = self.eval(u)?;
                let stage = |k: &GridField, h: f64| u.zip_map(k, |a, b| a + h * b);
                let k2 = self.eval(&stage(&k1, 0.5 * dt)?)?;
                let k3 = self.eval(&stage(&k2, 0.5 * dt)?)?;
                let k4 = self.eval(&stage(&k3, dt)?)?;
                let (a, b, c, d) = (k1.values(), k2.values(), k3.values(), k4.values());
                for (i, v) in u.values_mut().iter_mut().enumerate() {
                    *v += dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
                }
            }
        }
        Ok(())
    }
}

/// One Strang-split solver advancing a single field.
#[derive(Debug, Clone)]
pub struct Stepper {
    u: GridField,
    reaction: Reaction,
    dt: f64,
    time: f64,
    half_heat: Vec<f64>,
}

impl Stepper {
    pub fn new(u0: &GridField, kind: &ReactionKind, dt: f64) -> Result<Self> {
        check_initial(u0)?;
        check_dt(dt)?;
        let reaction = Reaction::bind(kind, u0)?;
        let half_heat = Spectrum::wavenumber_squared(u0.spec())
            .iter()
            .map(|q| (-0.5 * dt * q).exp())
            .collect();
        Ok(Self {
            u: u0.clone(),
            reaction,
            dt,
            time: 0.0,
            half_heat,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn field(&self) -> &GridField {
        &self.u
    }

    fn heat_half(&mut self) {
        let mut s = Spectrum::forward(&self.u);
        s.multiply_real(&self.half_heat);
        self.u = s.inverse();
    }

    pub fn step(&mut self) -> Result<()> {
        self.heat_half();
        self.reaction.advance(&mut self.u, self.dt)?;
        self.heat_half();
        self.time += self.dt;
        if let Err(Error::NonFinite { .. }) = self.u.check_finite() {
            return Err(Error::Unstable { time: self.time });
        }
        Ok(())
    }
}

fn check_initial(u0: &GridField) -> Result<()> {
    u0.check_finite()?;
    let min = u0.min();
    if min < 0.0 {
        return Err(invalid(format!(
            "initial data must be nonnegative, min = {min}"
        )));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(invalid(format!(
            "time step must lie in (0, {MAX_DT}], got {dt}"
        )));
    }
    Ok(())
}

/// Number of steps of size close to `dt` that exactly cover `[0, horizon]`.
pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::NegativeTime(horizon));
    }
    let n = (horizon / dt).round() as usize;
    if (n as f64 * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(invalid(format!(
            "horizon {horizon} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n)
}

/// Snapshot fields of one solve.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub kind: ReactionKind,
    pub dt: f64,
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
}

impl PdeSolution {
    pub fn method(&self) -> &'static str {
        "strang-spectral"
    }

    pub fn at(&self, t: f64) -> Option<&GridField> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|i| &self.fields[i])
    }
}

/// Solves to `horizon` and keeps the fields at `snapshot_times`, each of
/// which must be a multiple of `dt`. An empty list keeps every step,
/// including `t = 0`.
pub fn solve(
    u0: &GridField,
    kind: &ReactionKind,
    horizon: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<PdeSolution> {
    let mut stepper = Stepper::new(u0, kind, dt)?;
    let n = step_count(horizon, dt)?;
    let keep: Vec<usize> = if snapshot_times.is_empty() {
        (0..=n).collect()
    } else {
        let mut idx = snapshot_times
            .iter()
            .map(|&t| {
                if t < 0.0 || t > horizon + 1e-12 {
                    return Err(invalid(format!("snapshot time {t} outside [0, {horizon}]")));
                }
                step_count(t, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        idx
    };
    let mut times = Vec::with_capacity(keep.len());
    let mut fields = Vec::with_capacity(keep.len());
    let mut next = keep.iter().peekable();
    for k in 0..=n {
        if k > 0 {
            stepper.step()?;
        }
        if next.peek() == Some(&&k) {
            next.next();
            times.push(k as f64 * dt);
            fields.push(stepper.field().clone());
        }
    }
    Ok(PdeSolution {
        kind: *kind,
        dt,
        times,
        fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::kernels::BaseKernel;
    use crate::particles::InitialProfile;

    fn grid() -> GridSpec {
        GridSpec::new(1, 20.0, 512).unwrap()
    }

    fn logistic_closed_form(u0: f64, t: f64) -> f64 {
        u0 * t.exp() / (1.0 - u0 + u0 * t.exp())
    }

    #[test]
    fn fixed_points() {
        for c in [0.0, 1.0] {
            let u0 = GridField::constant(grid(), c);
            for kind in [ReactionKind::Logistic, ReactionKind::Clipped] {
                let sol = solve(&u0, &kind, 1.0, 0.01, &[1.0]).unwrap();
                assert!(
                    sol.fields[0]
                        .values()
                        .iter()
                        .all(|&v| (v - c).abs() < 1e-14),
                    "{kind:?} {c}"
                );
            }
        }
    }

    #[test]
    fn constant_data_follows_logistic_curve() {
        let u0 = GridField::constant(grid(), 0.1);
        let sol = solve(&u0, &ReactionKind::Logistic, 1.0, 1e-3, &[0.5, 1.0]).unwrap();
        let u1 = sol.at(1.0).unwrap();
        assert!((u1.values()[17] - 0.23197).abs() < 1e-5);
        assert!(u1
            .values()
            .iter()
            .all(|&v| (v - logistic_closed_form(0.1, 1.0)).abs() < 1e-12));
        let clipped = solve(&u0, &ReactionKind::Clipped, 1.0, 1e-2, &[1.0]).unwrap();
        assert!((clipped.fields[0].values()[3] - logistic_closed_form(0.1, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let mut neg = GridField::constant(grid(), 0.1);
        neg.values_mut()[4] = -0.1;
        assert!(solve(&neg, &ReactionKind::Logistic, 1.0, 0.01, &[]).is_err());
        let u0 = GridField::constant(grid(), 0.1);
        assert!(solve(&u0, &ReactionKind::Logistic, 1.0, 0.2, &[]).is_err());
        assert!(solve(&u0, &ReactionKind::Logistic, 1.0, 0.01, &[2.0]).is_err());
        assert!(solve(&u0, &ReactionKind::Logistic, 1.0, 0.3, &[]).is_err());
    }

    #[test]
    fn empty_snapshot_list_keeps_every_step() {
        let u0 = GridField::constant(grid(), 0.1);
        let sol = solve(&u0, &ReactionKind::Logistic, 0.1, 0.01, &[]).unwrap();
        assert_eq!(sol.times.len(), 11);
        assert_eq!(sol.times[0], 0.0);
        assert_eq!(sol.fields[0], u0);
    }

    fn bump() -> GridField {
        InitialProfile::Gaussian {
            mass: 0.8 * (2.0 * std::f64::consts::PI).sqrt(),
            sigma: 1.0,
            center: [0.0; 2],
        }
        .to_field(&grid())
        .unwrap()
    }

    #[test]
    fn discrete_comparison_principle_all_kinds() {
        let m = MollifierSpec::new(BaseKernel::Gaussian, 0.25, 1, 1.0, false).unwrap();
        let g = GridSpec::new(1, 20.0, 1024).unwrap();
        let u0 = InitialProfile::Gaussian {
            mass: 2.0,
            sigma: 1.0,
            center: [0.0; 2],
        }
        .to_field(&g)
        .unwrap();
        let u0 = u0.map(|v| v.min(1.0));
        for kind in [
            ReactionKind::Logistic,
            ReactionKind::Clipped,
            ReactionKind::Nonlocal {
                mollifier: m,
                n0: 100,
            },
        ] {
            let sol = solve(&u0, &kind, 2.0, 0.01, &[]).unwrap();
            for f in &sol.fields {
                assert!(
                    f.min() >= -1e-8 && f.max() <= 1.0 + 1e-8,
                    "{kind:?}: [{}, {}]",
                    f.min(),
                    f.max()
                );
            }
        }
    }

    #[test]
    fn mass_growth_bound() {
        let u0 = bump();
        let m0 = u0.integral();
        let sol = solve(&u0, &ReactionKind::Logistic, 2.0, 0.01, &[]).unwrap();
        for (t, f) in sol.times.iter().zip(&sol.fields) {
            assert!(f.integral() <= t.exp() * m0 + 1e-10);
        }
    }

    #[test]
    fn second_order_in_time_on_bump_data() {
        let u0 = bump();
        let reference = solve(&u0, &ReactionKind::Logistic, 1.0, 1e-2 / 32.0, &[1.0]).unwrap();
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| {
                let s = solve(&u0, &ReactionKind::Logistic, 1.0, dt, &[1.0]).unwrap();
                s.fields[0]
                    .zip_map(&reference.fields[0], |a, b| a - b)
                    .unwrap()
                    .sup_norm()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 4.0 / 1.5 && ratio < 4.0 * 1.5, "{errs:?}");
        }
    }

    #[test]
    fn constant_data_error_is_round_off() {
        let u0 = GridField::constant(grid(), 0.1);
        for dt in [1e-2, 5e-3, 2.5e-3] {
            let s = solve(&u0, &ReactionKind::Logistic, 1.0, dt, &[1.0]).unwrap();
            let err = (s.fields[0].values()[0] - logistic_closed_form(0.1, 1.0)).abs();
            assert!(err < 1e-13, "dt = {dt}: {err}");
        }
    }

    #[test]
    fn nonlocal_equals_local_on_constants() {
        let m = MollifierSpec::new(BaseKernel::Gaussian, 0.25, 1, 1.0, false).unwrap();
        let u0 = GridField::constant(grid(), 0.3);
        let a = solve(
            &u0,
            &ReactionKind::Nonlocal {
                mollifier: m,
                n0: 16,
            },
            1.0,
            0.01,
            &[1.0],
        )
        .unwrap();
        let b = solve(&u0, &ReactionKind::Logistic, 1.0, 0.01, &[1.0]).unwrap();
        assert!(
            a.fields[0]
                .zip_map(&b.fields[0], |x, y| x - y)
                .unwrap()
                .sup_norm()
                < 1e-10
        );
    }

    #[test]
    fn two_dimensional_solve_keeps_radial_symmetry() {
        let g = GridSpec::new(2, 10.0, 64).unwrap();
        let u0 = InitialProfile::Gaussian {
            mass: 3.0,
            sigma: 1.0,
            center: [0.0; 2],
        }
        .to_field(&g)
        .unwrap();
        let sol = solve(&u0, &ReactionKind::Logistic, 0.5, 0.05, &[0.5]).unwrap();
        let f = &sol.fields[0];
        let n = g.points();
        let (i, j) = (n / 2 + 5, n / 2);
        assert!((f.values()[i + n * j] - f.values()[j + n * i]).abs() < 1e-12);
    }
}

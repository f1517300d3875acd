use super::config::RunConfig;
use super::runner::{fan_out, replica_seed, Observer, Simulation};
use super::table::{Contract, StudyOutput, Table};
use crate::error::Result;
use crate::grid::GridField;
use crate::particles::{Population, TestFunction};
use crate::pde::{solve, ReactionKind};
use crate::stats::{iqr, median};

const STUDY: &str = "weak_residual";
const TAG: u64 = 7;

/// Space integrand of the weak form at one time, for a fixed test function.
struct WeakForm {
    psi: GridField,
    laplacian: GridField,
    phi: TestFunction,
    cell: f64,
}

impl WeakForm {
    fn new(phi: &TestFunction, u0: &GridField) -> Self {
        let grid = *u0.spec();
        Self {
            psi: phi.psi_field(&grid),
            laplacian: phi.laplacian_field(&grid),
            phi: *phi,
            cell: grid.cell_volume(),
        }
    }

    /// `int (d_t phi + Lap phi + (1 - h)^+ phi) h dx`.
    fn integrand(&self, t: f64, h: &GridField) -> f64 {
        let eta = self.phi.profile.value(t);
        let deta = self.phi.profile.derivative(t);
        let sum: f64 = h
            .values()
            .iter()
            .zip(self.psi.values())
            .zip(self.laplacian.values())
            .map(|((&v, &p), &l)| (deta * p + eta * l + (1.0 - v).max(0.0) * eta * p) * v)
            .sum();
        sum * self.cell
    }

    /// `<u, phi_t>`.
    fn pairing(&self, t: f64, u: &GridField) -> f64 {
        let eta = self.phi.profile.value(t);
        u.values()
            .iter()
            .zip(self.psi.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * eta
            * self.cell
    }
}

/// `Psi(h) = int_0^T int (d_t phi + Lap phi + (1 - h)^+ phi) h dx dt + <u0, phi_0> - <h_T, phi_T>`,
/// time-trapezoid over the given fields and rectangle rule in space. The last
/// term vanishes when `phi_T = 0`.
pub fn psi_functional(
    fields: &[GridField],
    times: &[f64],
    phi: &TestFunction,
    u0: &GridField,
) -> Result<f64> {
    let form = WeakForm::new(phi, u0);
    let mut acc = Accumulate::new(form, u0);
    for (h, &t) in fields.iter().zip(times) {
        acc.add(t, h)?;
    }
    Ok(acc.finish())
}

struct Accumulate {
    form: WeakForm,
    total: f64,
    last: Option<(f64, f64, f64)>,
}

impl Accumulate {
    fn new(form: WeakForm, u0: &GridField) -> Self {
        let total = form.pairing(0.0, u0);
        Self {
            form,
            total,
            last: None,
        }
    }

    fn add(&mut self, t: f64, h: &GridField) -> Result<()> {
        h.check_same_grid(&self.form.psi)?;
        let v = self.form.integrand(t, h);
        if let Some((s, w, _)) = self.last {
            self.total += 0.5 * (t - s) * (v + w);
        }
        self.last = Some((t, v, self.form.pairing(t, h)));
        Ok(())
    }

    fn finish(&self) -> f64 {
        self.total - self.last.map_or(0.0, |l| l.2)
    }
}

impl Observer for Accumulate {
    fn needs_density(&self, _k: usize) -> bool {
        true
    }

    fn at_step(
        &mut self,
        _k: usize,
        t: f64,
        _pop: &Population,
        h: Option<&GridField>,
    ) -> Result<()> {
        self.add(t, h.expect("density requested"))
    }
}

/// `Psi` of `h^N` per replica, using the density at every step, plus `Psi`
/// of the PDE solution on the same grid and time step.
pub fn run_weak_residual(cfg: &RunConfig) -> Result<Vec<Table>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let phi = cfg.test_function();
    let u0 = cfg.profile()?.to_field(&grid)?;
    let sims = cfg
        .n_list
        .iter()
        .map(|&n| Simulation::new(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let out = fan_out(&cfg.n_list, cfg.replicas, |n, r| {
        let i = cfg.n_list.iter().position(|&m| m == n).expect("listed");
        let mut obs = Accumulate::new(WeakForm::new(&phi, &u0), &u0);
        sims[i].run(replica_seed(cfg.seed, TAG, n, r), &mut obs)?;
        Ok(obs.finish())
    })?;
    let mut t = Table::new(STUDY, "weak_residual_replicas", &["n", "replica", "psi"]);
    for (n, r, v) in out {
        t.push(vec![n as f64, r as f64, v]);
    }
    let kind = if u0.min() >= 0.0 && u0.max() <= 1.0 {
        ReactionKind::Logistic
    } else {
        ReactionKind::Clipped
    };
    let sol = solve(&u0, &kind, cfg.horizon, cfg.dt, &[])?;
    let psi_pde = psi_functional(&sol.fields, &sol.times, &phi, &u0)?;
    let mut p = Table::new(STUDY, "weak_residual_pde", &["dt", "psi"]);
    p.push(vec![cfg.dt, psi_pde]);
    Ok(vec![t, p])
}

/// Allowed `|Psi(u)|` for the PDE solution: second order in the time step,
/// scaled by the size of the test function pairing.
pub(crate) fn pde_tolerance(dt: f64, scale: f64) -> f64 {
    10.0 * dt * dt * scale.max(1e-12)
}

pub fn analyze_weak_residual(cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    let reps = Table::find(raw, "weak_residual_replicas")?;
    let ip = reps.column_index("psi")?;
    let mut summary = Table::new(
        STUDY,
        "weak_residual_summary",
        &["n", "median_abs_psi", "iqr_abs_psi"],
    );
    let mut medians = Vec::new();
    for n in reps.distinct("n")? {
        let v: Vec<f64> = reps
            .select(&[("n", n)])?
            .iter()
            .map(|r| r[ip].abs())
            .collect();
        summary.push(vec![n, median(&v), iqr(&v)]);
        medians.push(median(&v));
    }
    let mut contracts = vec![Contract::new(
        STUDY,
        "median_abs_psi_strictly_decreasing",
        super::strictly_decreasing(&medians),
        format!("medians {medians:?}"),
    )];
    let pde = Table::find(raw, "weak_residual_pde")?;
    let (dt, psi) = (pde.rows[0][0], pde.rows[0][1]);
    let grid = cfg.grid()?;
    let u0 = cfg.profile()?.to_field(&grid)?;
    let scale = WeakForm::new(&cfg.test_function(), &u0)
        .pairing(0.0, &u0)
        .abs();
    let tol = pde_tolerance(dt, scale);
    contracts.push(Contract::new(
        STUDY,
        "pde_residual_below_tolerance",
        psi.abs() <= tol,
        format!("|psi(u)| = {:.3e} vs {tol:.3e}", psi.abs()),
    ));
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: vec![summary],
        contracts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::particles::TimeProfile;

    #[test]
    fn constant_data_reduces_to_scalar_logistic() {
        let g = GridSpec::new(1, 8.0, 2048).unwrap();
        let phi = TestFunction::bump(
            [0.0, 0.0],
            2.0,
            TimeProfile::QuadraticDecay { horizon: 1.0 },
        );
        let u0 = 0.1;
        let logistic = |t: f64| u0 * t.exp() / (1.0 - u0 + u0 * t.exp());
        for (dt, tol) in [(0.01, 2e-5), (0.001, 2e-7)] {
            let n = (1.0 / dt) as usize;
            let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
            let fields: Vec<GridField> = times
                .iter()
                .map(|&t| GridField::constant(g, logistic(t)))
                .collect();
            let psi = psi_functional(&fields, &times, &phi, &GridField::constant(g, u0)).unwrap();
            assert!(psi.abs() < tol, "dt {dt}: {psi}");
        }
    }

    #[test]
    fn zero_test_function_gives_zero() {
        let g = GridSpec::new(1, 8.0, 128).unwrap();
        let times = [0.0, 0.5, 1.0];
        let fields: Vec<GridField> = times.iter().map(|&t| GridField::constant(g, t)).collect();
        let psi = psi_functional(&fields, &times, &TestFunction::zero(), &fields[0]).unwrap();
        assert_eq!(psi, 0.0);
    }

    #[test]
    fn pde_solution_has_small_residual() {
        let cfg = RunConfig {
            n_list: vec![100, 400],
            half_length: 12.0,
            points: 1024,
            reference_points: 2048,
            window: 3.0,
            horizon: 0.2,
            dt: 0.01,
            replicas: 3,
            test_radius: 2.0,
            ..RunConfig::desk()
        };
        let out = analyze_weak_residual(&cfg, &run_weak_residual(&cfg).unwrap()).unwrap();
        let c = out.contract("pde_residual_below_tolerance").unwrap();
        assert!(c.passed, "{}", c.detail);
        assert_eq!(out.table("weak_residual_replicas").unwrap().rows.len(), 6);
    }
}

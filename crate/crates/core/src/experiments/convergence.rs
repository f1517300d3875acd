use super::config::RunConfig;
use super::runner::{fan_out, replica_seed, Observer, Simulation};
use super::table::{Contract, StudyOutput, Table};
use crate::error::Result;
use crate::grid::{sobolev_norm_squared, GridField, GridSpec, SobolevOrder};
use crate::particles::Population;
use crate::pde::{solve, ReactionKind};
use crate::stats::{iqr, median};

const STUDY: &str = "convergence";
const TAG: u64 = 1;

/// Smooth cutoff equal to 1 on `[-w, w]^d` and 0 outside `[-w-1, w+1]^d`.
pub fn smooth_window(grid: &GridSpec, w: f64) -> GridField {
    fn step(s: f64) -> f64 {
        // C-infinity transition from 1 at s <= 0 to 0 at s >= 1.
        if s <= 0.0 {
            return 1.0;
        }
        if s >= 1.0 {
            return 0.0;
        }
        let a = (-1.0 / (1.0 - s)).exp();
        let b = (-1.0 / s).exp();
        a / (a + b)
    }
    let d = grid.dim();
    GridField::from_fn(*grid, |x| (0..d).map(|k| step(x[k].abs() - w)).product())
}

/// PDE reference at the snapshot times, solved on the reference grid and
/// restricted to the particle grid.
pub fn reference_solution(cfg: &RunConfig) -> Result<Vec<GridField>> {
    let fine = cfg.reference_grid()?;
    let u0 = cfg.profile()?.to_field(&fine)?;
    let kind = if u0.min() >= 0.0 && u0.max() <= 1.0 {
        ReactionKind::Logistic
    } else {
        ReactionKind::Clipped
    };
    let sol = solve(&u0, &kind, cfg.horizon, cfg.dt, &cfg.snapshot_time_values())?;
    let grid = cfg.grid()?;
    sol.fields.iter().map(|f| f.restrict_to(&grid)).collect()
}

struct Errors<'a> {
    snapshots: &'a [usize],
    reference: &'a [GridField],
    window_nodes: &'a [usize],
    chi: &'a GridField,
    alpha: SobolevOrder,
    sup: f64,
    sobolev_sq: Vec<f64>,
    h_l2: f64,
}

impl Observer for Errors<'_> {
    fn needs_density(&self, k: usize) -> bool {
        self.snapshots.contains(&k)
    }

    fn at_step(
        &mut self,
        k: usize,
        _t: f64,
        _pop: &Population,
        h: Option<&GridField>,
    ) -> Result<()> {
        let Some(i) = self.snapshots.iter().position(|&s| s == k) else {
            return Ok(());
        };
        let h = h.expect("density requested");
        let u = &self.reference[i];
        let (hv, uv) = (h.values(), u.values());
        for &j in self.window_nodes {
            self.sup = self.sup.max((hv[j] - uv[j]).abs());
        }
        let diff = h
            .zip_map(u, |a, b| a - b)?
            .zip_map(self.chi, |e, c| e * c)?;
        self.sobolev_sq
            .push(sobolev_norm_squared(&diff, self.alpha));
        self.h_l2 = self.h_l2.max(h.l2_norm());
        Ok(())
    }
}

/// Trapezoid rule on possibly uneven nodes.
pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// One row per `(N, replica)`: sup error on the window over the snapshots,
/// the time-L2 windowed `W^{alpha,2}` error, and `max_t ||h_t||_{L2}`.
pub fn run_convergence(cfg: &RunConfig) -> Result<Vec<Table>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let reference = reference_solution(cfg)?;
    let snapshots = cfg.snapshot_steps();
    let times = cfg.snapshot_time_values();
    let chi = smooth_window(&grid, cfg.window);
    let window_nodes: Vec<usize> = (0..grid.len())
        .filter(|&j| {
            let x = grid.node(j);
            (0..grid.dim()).all(|k| x[k].abs() <= cfg.window)
        })
        .collect();
    let alpha = SobolevOrder::new(cfg.alpha)?;
    let sims = cfg
        .n_list
        .iter()
        .map(|&n| Simulation::new(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let out = fan_out(&cfg.n_list, cfg.replicas, |n, r| {
        let sim = &sims[cfg.n_list.iter().position(|&m| m == n).expect("listed")];
        let mut obs = Errors {
            snapshots: &snapshots,
            reference: &reference,
            window_nodes: &window_nodes,
            chi: &chi,
            alpha,
            sup: 0.0,
            sobolev_sq: Vec::new(),
            h_l2: 0.0,
        };
        sim.run(replica_seed(cfg.seed, TAG, n, r), &mut obs)?;
        Ok([obs.sup, trapezoid(&times, &obs.sobolev_sq).sqrt(), obs.h_l2])
    })?;
    let mut t = Table::new(
        STUDY,
        "convergence_replicas",
        &["n", "replica", "sup_error", "sobolev_error", "h_l2_sup"],
    );
    for (n, r, v) in out {
        t.push(vec![n as f64, r as f64, v[0], v[1], v[2]]);
    }
    Ok(vec![t])
}

pub fn analyze_convergence(cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    let reps = Table::find(raw, "convergence_replicas")?;
    let mut summary = Table::new(
        STUDY,
        "convergence_summary",
        &[
            "n",
            "median_sup_error",
            "iqr_sup_error",
            "median_sobolev_error",
            "iqr_sobolev_error",
            "median_h_l2_sup",
            "iqr_h_l2_sup",
        ],
    );
    let (isup, isob, il2) = (
        reps.column_index("sup_error")?,
        reps.column_index("sobolev_error")?,
        reps.column_index("h_l2_sup")?,
    );
    let mut sup_medians = Vec::new();
    let mut sob_medians = Vec::new();
    for n in reps.distinct("n")? {
        let rows = reps.select(&[("n", n)])?;
        let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
        let (s, w, h) = (col(isup), col(isob), col(il2));
        sup_medians.push(median(&s));
        sob_medians.push(median(&w));
        summary.push(vec![
            n,
            median(&s),
            iqr(&s),
            median(&w),
            iqr(&w),
            median(&h),
            iqr(&h),
        ]);
    }
    let mut contracts = Vec::new();
    // The decrease is only claimed below the threshold.
    if cfg.beta < 0.5 && sup_medians.len() >= 2 {
        let ok = super::strictly_decreasing(&sup_medians);
        contracts.push(Contract::new(
            STUDY,
            "median_sup_error_strictly_decreasing",
            ok,
            format!("medians {sup_medians:?}"),
        ));
        let ok = sob_medians.windows(2).all(|w| w[1] <= 1.1 * w[0]);
        contracts.push(Contract::new(
            STUDY,
            "median_sobolev_error_non_increasing_within_10pct",
            ok,
            format!("medians {sob_medians:?}"),
        ));
    }
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: vec![summary],
        contracts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
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
        }
    }

    #[test]
    fn window_is_one_inside_and_zero_outside() {
        let g = GridSpec::new(1, 8.0, 512).unwrap();
        let chi = smooth_window(&g, 3.0);
        for j in 0..g.len() {
            let x = g.node(j)[0].abs();
            let c = chi.values()[j];
            if x <= 3.0 {
                assert_eq!(c, 1.0);
            } else if x >= 4.0 {
                assert_eq!(c, 0.0);
            } else {
                assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn zero_initial_data_gives_zero_errors() {
        let cfg = RunConfig {
            u0: "zero".into(),
            ..small()
        };
        let raw = run_convergence(&cfg).unwrap();
        let t = &raw[0];
        assert_eq!(t.rows.len(), 6);
        for r in &t.rows {
            assert_eq!(&r[2..], &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn rows_complete_and_nonnegative() {
        let cfg = small();
        let out = analyze_convergence(&cfg, &run_convergence(&cfg).unwrap()).unwrap();
        let reps = out.table("convergence_replicas").unwrap();
        assert_eq!(reps.rows.len(), 6);
        assert!(reps
            .rows
            .iter()
            .all(|r| r[2..].iter().all(|&v| v >= 0.0 && v.is_finite())));
        assert_eq!(out.table("convergence_summary").unwrap().rows.len(), 2);
        assert_eq!(out.contracts.len(), 2);
    }

    #[test]
    fn supercritical_run_records_without_contract() {
        let cfg = RunConfig {
            beta: 0.75,
            strict: false,
            n_list: vec![10, 40],
            points: 2048,
            reference_points: 4096,
            ..small()
        };
        let out = analyze_convergence(&cfg, &run_convergence(&cfg).unwrap()).unwrap();
        assert!(out.contracts.is_empty());
    }
}

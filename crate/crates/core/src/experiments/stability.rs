//! Moment bounds: Sobolev boundedness along the run, the bound on the
//! initial density, and the time-regularity double integral.

use super::config::RunConfig;
use super::runner::{fan_out, replica_seed, Observer, Simulation};
use super::table::{Contract, StudyOutput, Table};
use crate::density::{deposit, DensityEstimator};
use crate::error::{Error, Result};
use crate::grid::{sobolev_norm_squared, GridField, SobolevOrder, Spectrum};
use crate::particles::Population;
use crate::stats::{log_log_slope, mean, quantile, std_error};

const FLAT_SLOPE: f64 = 0.1;
const MIN_TIME_POINTS: usize = 20;
const NEGATIVE_ORDER: f64 = -2.0;

fn slope_contract(study: &str, name: &str, pts: &[(f64, f64)]) -> (f64, Contract) {
    if pts.iter().all(|p| p.1 == 0.0) {
        return (
            f64::NAN,
            Contract::new(study, name, true, "degenerate: every estimate is zero"),
        );
    }
    let slope = log_log_slope(pts).unwrap_or(f64::NAN);
    (
        slope,
        Contract::new(
            study,
            name,
            slope <= FLAT_SLOPE,
            format!("log-log slope {slope:.4} vs {FLAT_SLOPE}"),
        ),
    )
}

struct NormsAt<'a> {
    snapshots: &'a [usize],
    orders: [SobolevOrder; 2],
    rows: Vec<[f64; 2]>,
}

impl Observer for NormsAt<'_> {
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
        if self.snapshots.contains(&k) {
            let h = h.expect("density requested");
            self.rows
                .push(self.orders.map(|s| sobolev_norm_squared(h, s)));
        }
        Ok(())
    }
}

/// Squared `W^{alpha,2}` and `L2` norms of `h_t^N` per replica and snapshot.
/// `t = 0` is dropped when `rho0 < alpha`.
pub fn run_sobolev(cfg: &RunConfig) -> Result<Vec<Table>> {
    const STUDY: &str = "sobolev";
    cfg.validate()?;
    let mut snapshots = cfg.snapshot_steps();
    if cfg.rho0 < cfg.alpha {
        snapshots.retain(|&k| k > 0);
    }
    let orders = [SobolevOrder::new(cfg.alpha)?, SobolevOrder::new(0.0)?];
    let sims = cfg
        .n_list
        .iter()
        .map(|&n| Simulation::new(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let out = fan_out(&cfg.n_list, cfg.replicas, |n, r| {
        let i = cfg.n_list.iter().position(|&m| m == n).expect("listed");
        let mut obs = NormsAt {
            snapshots: &snapshots,
            orders,
            rows: Vec::new(),
        };
        sims[i].run(replica_seed(cfg.seed, 4, n, r), &mut obs)?;
        Ok(obs.rows)
    })?;
    let mut t = Table::new(
        STUDY,
        "sobolev_replicas",
        &["n", "replica", "t", "norm_alpha_sq", "norm_l2_sq"],
    );
    for (n, r, rows) in out {
        for (&k, v) in snapshots.iter().zip(rows) {
            t.push(vec![n as f64, r as f64, k as f64 * cfg.dt, v[0], v[1]]);
        }
    }
    Ok(vec![t])
}

pub fn analyze_sobolev(cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    const STUDY: &str = "sobolev";
    let reps = Table::find(raw, "sobolev_replicas")?;
    let (ia, il) = (
        reps.column_index("norm_alpha_sq")?,
        reps.column_index("norm_l2_sq")?,
    );
    let mut summary = Table::new(
        STUDY,
        "sobolev_summary",
        &[
            "n",
            "t",
            "alpha",
            "mean_alpha_sq",
            "se_alpha_sq",
            "mean_l2_sq",
            "se_l2_sq",
        ],
    );
    let mut slopes = Table::new(STUDY, "sobolev_slopes", &["t", "slope_alpha", "slope_l2"]);
    let mut worst = [(f64::NEG_INFINITY, true), (f64::NEG_INFINITY, true)];
    let ns = reps.distinct("n")?;
    for t in reps.distinct("t")? {
        let mut pts = [Vec::new(), Vec::new()];
        for &n in &ns {
            let rows = reps.select(&[("n", n), ("t", t)])?;
            let a: Vec<f64> = rows.iter().map(|r| r[ia]).collect();
            let l: Vec<f64> = rows.iter().map(|r| r[il]).collect();
            summary.push(vec![
                n,
                t,
                cfg.alpha,
                mean(&a),
                std_error(&a),
                mean(&l),
                std_error(&l),
            ]);
            pts[0].push((n, mean(&a)));
            pts[1].push((n, mean(&l)));
        }
        let mut row = vec![t];
        for (i, p) in pts.iter().enumerate() {
            let (s, c) = slope_contract(STUDY, "", p);
            row.push(s);
            worst[i].1 &= c.passed;
            if s > worst[i].0 {
                worst[i].0 = s;
            }
        }
        slopes.push(row);
    }
    let contracts = [("alpha", 0), ("l2", 1)]
        .iter()
        .map(|&(name, i)| {
            Contract::new(
                STUDY,
                &format!("{name}_norm_slope_flat"),
                worst[i].1,
                format!(
                    "largest log-log slope over t: {:.4} vs {FLAT_SLOPE}",
                    worst[i].0
                ),
            )
        })
        .collect();
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: vec![summary, slopes],
        contracts,
    })
}

/// Exact mean of `||h_0^N||^2_{W^{s,2}}` for the gridded estimator when the
/// `floor(m N)` atoms are i.i.d. with density `u0 / m`:
/// `w^2 [K E||T X||^2 + K (K - 1) ||E T X||^2]`, where `T X` is the estimate
/// for a single unit atom at `X`. Both expectations are evaluated by
/// sub-cell quadrature.
pub fn initial_bound_closed_form(cfg: &RunConfig, n: usize, s: f64) -> Result<f64> {
    let grid = cfg.grid()?;
    let profile = cfg.profile()?;
    let mass = profile
        .mass()
        .filter(|&m| m > 0.0)
        .ok_or_else(|| Error::Precondition("u0 has no finite positive mass".into()))?;
    let est = DensityEstimator::new(cfg.mollifier()?, n, &grid, cfg.deposit)?;
    let order = SobolevOrder::new(s)?;
    let d = grid.dim();
    let q: usize = if d == 1 { 16 } else { 4 };
    let dx = grid.spacing();
    let offsets: Vec<[f64; 2]> = (0..q.pow(d as u32))
        .map(|i| {
            let f = |j: usize| (j as f64 + 0.5) / q as f64 * dx;
            if d == 1 {
                [f(i), 0.0]
            } else {
                [f(i % q), f(i / q)]
            }
        })
        .collect();
    let origin = grid.node(0);
    let diag = offsets
        .iter()
        .map(|o| {
            let x = [origin[0] + o[0], origin[1] + o[1]];
            Ok(sobolev_norm_squared(
                &est.density_of_atoms(std::iter::once((x, 1.0)))?,
                order,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let diag = mean(&diag);
    let cell = grid.cell_volume() / offsets.len() as f64;
    let mut atoms = Vec::with_capacity(grid.len() * offsets.len());
    for j in 0..grid.len() {
        let node = grid.node(j);
        for o in &offsets {
            let x = [node[0] + o[0], node[1] + o[1]];
            let w = profile.density(x, d)? * cell / mass;
            if w != 0.0 {
                atoms.push((grid.wrap_point(x), w));
            }
        }
    }
    let expected = est.smooth(&deposit(&grid, cfg.deposit, atoms.into_iter()))?;
    let k = (mass * n as f64).floor();
    let w = 1.0 / n as f64;
    Ok(w * w * (k * diag + k * (k - 1.0) * sobolev_norm_squared(&expected, order)))
}

/// Squared `W^{rho0,2}` and `L2` norms of `h_0^N` over fresh initializations.
pub fn run_initial_bound(cfg: &RunConfig) -> Result<Vec<Table>> {
    const STUDY: &str = "initial_bound";
    cfg.validate()?;
    let profile = cfg.profile()?;
    if !profile.is_function() {
        return Err(Error::Precondition(format!(
            "u0 = {} has no density in W^{{rho0,2}}; the initial bound needs a smooth u0",
            profile.name()
        )));
    }
    let grid = cfg.grid()?;
    let orders = [SobolevOrder::new(cfg.rho0)?, SobolevOrder::new(0.0)?];
    let ests = cfg
        .n_list
        .iter()
        .map(|&n| DensityEstimator::new(cfg.mollifier()?, n, &grid, cfg.deposit))
        .collect::<Result<Vec<_>>>()?;
    let out = fan_out(&cfg.n_list, cfg.replicas, |n, r| {
        let i = cfg.n_list.iter().position(|&m| m == n).expect("listed");
        let pop =
            Population::init(n, &profile, grid, replica_seed(cfg.seed, 5, n, r))?.discard_dead();
        let h = ests[i].density(&pop)?;
        Ok(orders.map(|s| sobolev_norm_squared(&h, s)))
    })?;
    let mut t = Table::new(
        STUDY,
        "initial_bound_replicas",
        &["n", "replica", "norm_rho0_sq", "norm_l2_sq"],
    );
    for (n, r, v) in out {
        t.push(vec![n as f64, r as f64, v[0], v[1]]);
    }
    Ok(vec![t])
}

pub fn analyze_initial_bound(cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    const STUDY: &str = "initial_bound";
    let reps = Table::find(raw, "initial_bound_replicas")?;
    let (ir, il) = (
        reps.column_index("norm_rho0_sq")?,
        reps.column_index("norm_l2_sq")?,
    );
    let mut summary = Table::new(
        STUDY,
        "initial_bound_summary",
        &[
            "n",
            "rho0",
            "mean_rho0_sq",
            "se_rho0_sq",
            "exact_rho0_sq",
            "mean_l2_sq",
            "se_l2_sq",
            "exact_l2_sq",
        ],
    );
    let mut pts = Vec::new();
    let mut agree = true;
    let mut detail = Vec::new();
    for n in reps.distinct("n")? {
        let rows = reps.select(&[("n", n)])?;
        let a: Vec<f64> = rows.iter().map(|r| r[ir]).collect();
        let l: Vec<f64> = rows.iter().map(|r| r[il]).collect();
        let exact_r = initial_bound_closed_form(cfg, n as usize, cfg.rho0)?;
        let exact_l = initial_bound_closed_form(cfg, n as usize, 0.0)?;
        let (ml, sl) = (mean(&l), std_error(&l));
        summary.push(vec![
            n,
            cfg.rho0,
            mean(&a),
            std_error(&a),
            exact_r,
            ml,
            sl,
            exact_l,
        ]);
        pts.push((n, mean(&a)));
        agree &= (ml - exact_l).abs() <= 3.0 * sl;
        detail.push(format!("N={n}: {ml:.6} vs {exact_l:.6} (SE {sl:.2e})"));
    }
    let (_, slope) = slope_contract(STUDY, "rho0_norm_slope_flat", &pts);
    let contracts = vec![
        slope,
        Contract::new(
            STUDY,
            "l2_mean_matches_closed_form",
            agree,
            detail.join("; "),
        ),
    ];
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: vec![summary],
        contracts,
    })
}

/// Discrete double integral of `||h_t - h_s||^2_{W^{-2,2}} / |t - s|^{1 + 2 gamma}`
/// with trapezoid weights in both times; the diagonal is skipped.
pub fn time_regularity_statistic(fields: &[GridField], times: &[f64], gamma: f64) -> Result<f64> {
    if fields.len() != times.len() || times.len() < 2 {
        return Err(Error::Precondition(
            "need matching fields and times, at least two".into(),
        ));
    }
    let spectra: Vec<Spectrum> = fields.iter().map(Spectrum::forward).collect();
    let m = times.len();
    let w: Vec<f64> = (0..m)
        .map(|i| {
            let left = if i > 0 { times[i] - times[i - 1] } else { 0.0 };
            let right = if i + 1 < m {
                times[i + 1] - times[i]
            } else {
                0.0
            };
            0.5 * (left + right)
        })
        .collect();
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let dist = spectra[i].sobolev_distance_squared(&spectra[j], NEGATIVE_ORDER);
            total += 2.0 * w[i] * w[j] * dist / (times[j] - times[i]).abs().powf(1.0 + 2.0 * gamma);
        }
    }
    Ok(total)
}

struct Keep<'a> {
    snapshots: &'a [usize],
    fields: Vec<GridField>,
}

impl Observer for Keep<'_> {
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
        if self.snapshots.contains(&k) {
            self.fields.push(h.expect("density requested").clone());
        }
        Ok(())
    }
}

pub fn run_time_regularity(cfg: &RunConfig) -> Result<Vec<Table>> {
    const STUDY: &str = "time_regularity";
    cfg.validate()?;
    let snapshots = cfg.snapshot_steps();
    if snapshots.len() < MIN_TIME_POINTS {
        return Err(Error::Precondition(format!(
            "time regularity needs at least {MIN_TIME_POINTS} snapshot times, got {}",
            snapshots.len()
        )));
    }
    let times = cfg.snapshot_time_values();
    let sims = cfg
        .n_list
        .iter()
        .map(|&n| Simulation::new(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let out = fan_out(&cfg.n_list, cfg.replicas, |n, r| {
        let i = cfg.n_list.iter().position(|&m| m == n).expect("listed");
        let mut obs = Keep {
            snapshots: &snapshots,
            fields: Vec::new(),
        };
        sims[i].run(replica_seed(cfg.seed, 6, n, r), &mut obs)?;
        time_regularity_statistic(&obs.fields, &times, cfg.gamma)
    })?;
    let mut t = Table::new(
        STUDY,
        "time_regularity_replicas",
        &["n", "replica", "gamma", "statistic"],
    );
    for (n, r, v) in out {
        t.push(vec![n as f64, r as f64, cfg.gamma, v]);
    }
    Ok(vec![t])
}

pub fn analyze_time_regularity(_cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    const STUDY: &str = "time_regularity";
    let reps = Table::find(raw, "time_regularity_replicas")?;
    let is = reps.column_index("statistic")?;
    let mut summary = Table::new(STUDY, "time_regularity_summary", &["n", "p95", "median"]);
    let mut p95 = Vec::new();
    for n in reps.distinct("n")? {
        let v: Vec<f64> = reps.select(&[("n", n)])?.iter().map(|r| r[is]).collect();
        summary.push(vec![n, quantile(&v, 0.95), quantile(&v, 0.5)]);
        p95.push(quantile(&v, 0.95));
    }
    let flat = p95.windows(2).all(|w| {
        if w[0] == 0.0 && w[1] == 0.0 {
            return true;
        }
        let ratio = w[1] / w[0];
        (0.5..=2.0).contains(&ratio)
    });
    let contracts = vec![Contract::new(
        STUDY,
        "p95_flat_within_factor_2",
        flat,
        format!("p95 by N {p95:?}"),
    )];
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: vec![summary],
        contracts,
    })
}

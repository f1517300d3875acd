//! Single runs: one particle replica per N, and one PDE solve.

use super::config::RunConfig;
use super::runner::{replica_seed, Observer, Simulation};
use super::table::{Contract, StudyOutput, Table};
use crate::error::Result;
use crate::grid::GridField;
use crate::particles::{InitialProfile, Population};
use crate::pde::{solve, ReactionKind};

const TAG: u64 = 8;
const MASS_IDENTITY_TOL: f64 = 1e-8;
const LOGISTIC_TOL: f64 = 1e-6;

/// A named field at a time, for the archive.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub name: String,
    pub time: f64,
    pub field: GridField,
}

struct Trace<'a> {
    n: usize,
    snapshots: &'a [usize],
    rows: Vec<Vec<f64>>,
    fields: Vec<Snapshot>,
}

impl Observer for Trace<'_> {
    fn needs_density(&self, k: usize) -> bool {
        self.snapshots.contains(&k)
    }

    fn at_step(&mut self, k: usize, t: f64, pop: &Population, h: Option<&GridField>) -> Result<()> {
        if !self.snapshots.contains(&k) {
            return Ok(());
        }
        let h = h.expect("density requested");
        self.rows.push(vec![
            self.n as f64,
            t,
            pop.alive().len() as f64,
            pop.mass(),
            h.integral(),
            h.max(),
        ]);
        self.fields.push(Snapshot {
            name: format!("h_n{}_k{k:06}", self.n),
            time: t,
            field: h.clone(),
        });
        Ok(())
    }
}

/// Replica 0 for every N: mass, `int h` and `max h` at each snapshot, plus
/// the density fields.
pub fn run_simulate(cfg: &RunConfig) -> Result<(Vec<Table>, Vec<Snapshot>)> {
    cfg.validate()?;
    let snapshots = cfg.snapshot_steps();
    let mut t = Table::new(
        "simulate",
        "simulate_trace",
        &["n", "t", "alive", "mass", "h_integral", "h_max"],
    );
    let mut fields = Vec::new();
    for &n in &cfg.n_list {
        let sim = Simulation::new(cfg, n)?;
        let mut obs = Trace {
            n,
            snapshots: &snapshots,
            rows: Vec::new(),
            fields: Vec::new(),
        };
        sim.run(replica_seed(cfg.seed, TAG, n, 0), &mut obs)?;
        for r in obs.rows {
            t.push(r);
        }
        fields.extend(obs.fields);
    }
    Ok((vec![t], fields))
}

pub fn analyze_simulate(_cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    let trace = Table::find(raw, "simulate_trace")?;
    let (im, ih) = (
        trace.column_index("mass")?,
        trace.column_index("h_integral")?,
    );
    let gap = trace
        .rows
        .iter()
        .map(|r| (r[im] - r[ih]).abs())
        .fold(0.0, f64::max);
    let mut monotone = true;
    for n in trace.distinct("n")? {
        let m: Vec<f64> = trace.select(&[("n", n)])?.iter().map(|r| r[im]).collect();
        monotone &= m.windows(2).all(|w| w[1] >= w[0]);
    }
    let contracts = vec![
        Contract::new(
            "simulate",
            "mass_identity",
            gap <= MASS_IDENTITY_TOL,
            format!("max |int h - [S]| = {gap:.3e} vs {MASS_IDENTITY_TOL:.0e}"),
        ),
        Contract::new(
            "simulate",
            "mass_non_decreasing",
            monotone,
            "particles branch but never die",
        ),
    ];
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: Vec::new(),
        contracts,
    })
}

fn logistic(u0: f64, t: f64) -> f64 {
    u0 * t.exp() / (1.0 - u0 + u0 * t.exp())
}

/// PDE solve on the particle grid; one row per snapshot. For constant data
/// the logistic closed form is recorded alongside.
pub fn run_pde(cfg: &RunConfig) -> Result<(Vec<Table>, Vec<Snapshot>)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let profile = cfg.profile()?;
    let u0 = profile.to_field(&grid)?;
    let kind = if u0.min() >= 0.0 && u0.max() <= 1.0 {
        ReactionKind::Logistic
    } else {
        ReactionKind::Clipped
    };
    let sol = solve(&u0, &kind, cfg.horizon, cfg.dt, &cfg.snapshot_time_values())?;
    let constant = match profile {
        InitialProfile::Constant { value } => Some(value),
        _ => None,
    };
    let mut t = Table::new(
        "pde",
        "pde_trace",
        &["t", "min", "max", "integral", "closed_form"],
    );
    let mut snaps = Vec::new();
    for (k, (&s, f)) in sol.times.iter().zip(&sol.fields).enumerate() {
        let closed = constant.map_or(f64::NAN, |c| logistic(c, s));
        t.push(vec![s, f.min(), f.max(), f.integral(), closed]);
        snaps.push(Snapshot {
            name: format!("u_{k:04}"),
            time: s,
            field: f.clone(),
        });
    }
    Ok((vec![t], snaps))
}

pub fn analyze_pde(cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    let trace = Table::find(raw, "pde_trace")?;
    let (imin, imax, ic) = (
        trace.column_index("min")?,
        trace.column_index("max")?,
        trace.column_index("closed_form")?,
    );
    let mut contracts = Vec::new();
    if matches!(cfg.profile()?, InitialProfile::Constant { .. }) {
        let err = trace
            .rows
            .iter()
            .map(|r| (r[imin] - r[ic]).abs().max((r[imax] - r[ic]).abs()))
            .fold(0.0, f64::max);
        contracts.push(Contract::new(
            "pde",
            "logistic_closed_form",
            err < LOGISTIC_TOL,
            format!("max error {err:.3e} vs {LOGISTIC_TOL:.0e}"),
        ));
    }
    let first = &trace.rows[0];
    if first[imin] >= 0.0 && first[imax] <= 1.0 {
        let ok = trace
            .rows
            .iter()
            .all(|r| r[imin] >= -1e-9 && r[imax] <= 1.0 + 1e-9);
        contracts.push(Contract::new(
            "pde",
            "stays_in_unit_interval",
            ok,
            "comparison with the constants 0 and 1",
        ));
    }
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: Vec::new(),
        contracts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            n_list: vec![200],
            half_length: 12.0,
            points: 1024,
            reference_points: 2048,
            window: 3.0,
            horizon: 0.2,
            dt: 0.01,
            test_radius: 2.0,
            ..RunConfig::desk()
        }
    }

    #[test]
    fn constant_pde_matches_logistic() {
        let cfg = RunConfig {
            u0: "constant".into(),
            u0_value: 0.1,
            ..small()
        };
        let (raw, snaps) = run_pde(&cfg).unwrap();
        assert_eq!(snaps.len(), 21);
        let out = analyze_pde(&cfg, &raw).unwrap();
        assert!(out.passed(), "{:?}", out.contracts);
        assert_eq!(out.contracts.len(), 2);
    }

    #[test]
    fn frozen_simulation_has_constant_mass() {
        let cfg = RunConfig {
            interaction: "frozen".into(),
            frozen_density: 1.0,
            ..small()
        };
        let (raw, snaps) = run_simulate(&cfg).unwrap();
        assert_eq!(snaps.len(), 21);
        let m = raw[0].column("mass").unwrap();
        assert!(m.iter().all(|&x| x == m[0]));
        assert!(analyze_simulate(&cfg, &raw).unwrap().passed());
    }
}

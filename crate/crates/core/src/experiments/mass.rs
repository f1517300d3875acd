use super::config::RunConfig;
use super::runner::{fan_out, replica_seed, Interaction, Observer, Simulation};
use super::table::{Contract, StudyOutput, Table};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::particles::Population;
use crate::rng::derive;
use crate::stats::{bootstrap_mean_ci, mean, std_error};

const STUDY: &str = "mass";
const TAG: u64 = 3;
const MIN_REPLICAS: usize = 200;
const CI_LEVEL: f64 = 0.95;
/// Allowed growth of the exp-moment interval width from one N to the next.
const WIDTH_GROWTH: f64 = 1.1;

struct Masses<'a> {
    snapshots: &'a [usize],
    values: Vec<f64>,
}

impl Observer for Masses<'_> {
    fn at_step(
        &mut self,
        k: usize,
        _t: f64,
        pop: &Population,
        _h: Option<&GridField>,
    ) -> Result<()> {
        if self.snapshots.contains(&k) {
            self.values.push(pop.mass());
        }
        Ok(())
    }
}

/// Total mass `[S_t^N]` of every replica at every snapshot.
pub fn run_mass(cfg: &RunConfig) -> Result<Vec<Table>> {
    cfg.validate()?;
    if cfg.replicas < MIN_REPLICAS {
        return Err(Error::Precondition(format!(
            "mass statistics need at least {MIN_REPLICAS} replicas, got {}",
            cfg.replicas
        )));
    }
    let snapshots = cfg.snapshot_steps();
    let times = cfg.snapshot_time_values();
    let sims = cfg
        .n_list
        .iter()
        .map(|&n| Simulation::new(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let out = fan_out(&cfg.n_list, cfg.replicas, |n, r| {
        let i = cfg.n_list.iter().position(|&m| m == n).expect("listed");
        let mut obs = Masses {
            snapshots: &snapshots,
            values: Vec::new(),
        };
        sims[i].run(replica_seed(cfg.seed, TAG, n, r), &mut obs)?;
        Ok(obs.values)
    })?;
    let mut t = Table::new(STUDY, "mass_replicas", &["n", "replica", "t", "mass"]);
    for (n, r, values) in out {
        for (&s, m) in times.iter().zip(values) {
            t.push(vec![n as f64, r as f64, s, m]);
        }
    }
    Ok(vec![t])
}

pub fn analyze_mass(cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    let reps = Table::find(raw, "mass_replicas")?;
    let im = reps.column_index("mass")?;
    let times = reps.distinct("t")?;
    let (t0, tn) = (times[0], *times.last().expect("nonempty"));
    let growth = (tn - t0).exp();
    let mut summary = Table::new(
        STUDY,
        "mass_summary",
        &["n", "t", "mean", "se", "ci_lo", "ci_hi"],
    );
    let mut expm = Table::new(
        STUDY,
        "mass_exp_moment",
        &["n", "gamma", "mean", "ci_lo", "ci_hi", "ci_width"],
    );
    let mut yule = Table::new(
        STUDY,
        "mass_yule",
        &["n", "initial_mean", "final_mean", "final_se", "yule_mean"],
    );
    let mut monotone = true;
    let mut dominated = Vec::new();
    let mut calibrated = Vec::new();
    let mut widths = Vec::new();
    for n in reps.distinct("n")? {
        let mut means = Vec::new();
        let at = |t: f64| -> Result<Vec<f64>> {
            Ok(reps
                .select(&[("n", n), ("t", t)])?
                .iter()
                .map(|r| r[im])
                .collect())
        };
        for &t in &times {
            let m = at(t)?;
            let seed = derive(cfg.seed, &[TAG, n as u64, t.to_bits()]);
            let (lo, hi) = bootstrap_mean_ci(&m, cfg.bootstrap_resamples, CI_LEVEL, seed);
            summary.push(vec![n, t, mean(&m), std_error(&m), lo, hi]);
            means.push(mean(&m));
        }
        monotone &= means.windows(2).all(|w| w[1] >= w[0]);
        let initial = means[0];
        let last = at(tn)?;
        let (fm, se) = (mean(&last), std_error(&last));
        let target = growth * initial;
        yule.push(vec![n, initial, fm, se, target]);
        dominated.push((n, fm <= target + 3.0 * se, fm, target, se));
        calibrated.push((n, (fm - target).abs() <= 3.0 * se, fm, target, se));

        let e: Vec<f64> = last.iter().map(|m| (cfg.exp_moment * m).exp()).collect();
        let seed = derive(cfg.seed, &[TAG, n as u64, u64::MAX]);
        let (lo, hi) = bootstrap_mean_ci(&e, cfg.bootstrap_resamples, CI_LEVEL, seed);
        expm.push(vec![n, cfg.exp_moment, mean(&e), lo, hi, hi - lo]);
        widths.push(hi - lo);
    }
    let describe = |v: &[(f64, bool, f64, f64, f64)]| {
        v.iter()
            .map(|(n, _, m, y, se)| format!("N={n}: {m:.5} vs {y:.5} (SE {se:.5})"))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let mut contracts = vec![
        Contract::new(
            STUDY,
            "mean_mass_non_decreasing",
            monotone,
            "mean mass over snapshot times, per N",
        ),
        Contract::new(
            STUDY,
            "yule_domination",
            dominated.iter().all(|x| x.1),
            describe(&dominated),
        ),
        Contract::new(
            STUDY,
            "exp_moment_ci_width_stable",
            widths.windows(2).all(|w| w[1] <= WIDTH_GROWTH * w[0]),
            format!("widths {widths:?}"),
        ),
    ];
    if cfg.interaction()? == Interaction::Off {
        contracts.push(Contract::new(
            STUDY,
            "yule_calibration",
            calibrated.iter().all(|x| x.1),
            describe(&calibrated),
        ));
    }
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: vec![summary, expm, yule],
        contracts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            n_list: vec![50, 100],
            half_length: 12.0,
            points: 1024,
            reference_points: 2048,
            window: 3.0,
            horizon: 0.2,
            dt: 0.01,
            replicas: 200,
            test_radius: 2.0,
            bootstrap_resamples: 200,
            ..RunConfig::desk()
        }
    }

    #[test]
    fn needs_replicas() {
        let cfg = RunConfig {
            replicas: 10,
            ..small()
        };
        assert!(matches!(run_mass(&cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn no_branching_keeps_mass_and_exp_moment_exact() {
        let cfg = RunConfig {
            interaction: "frozen".into(),
            frozen_density: 1.0,
            ..small()
        };
        let out = analyze_mass(&cfg, &run_mass(&cfg).unwrap()).unwrap();
        let m0 = (0.8f64 * 50.0).floor() / 50.0;
        let e = out.table("mass_exp_moment").unwrap();
        assert!((e.rows[0][2] - (0.1 * m0).exp()).abs() < 1e-14);
        assert!(out
            .table("mass_summary")
            .unwrap()
            .rows
            .iter()
            .all(|r| r[3] < 1e-14));
        assert!(out.passed());
    }

    #[test]
    fn interaction_off_tracks_yule_mean() {
        let cfg = RunConfig {
            interaction: "off".into(),
            dt: 0.002,
            ..small()
        };
        let out = analyze_mass(&cfg, &run_mass(&cfg).unwrap()).unwrap();
        let c = out.contract("yule_calibration").unwrap();
        assert!(c.passed, "{}", c.detail);
        assert!(out.contract("mean_mass_non_decreasing").unwrap().passed);
    }
}

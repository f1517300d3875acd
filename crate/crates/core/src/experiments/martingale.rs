use super::config::RunConfig;
use super::runner::{fan_out, replica_seed, Observer, Simulation};
use super::table::{Contract, StudyOutput, Table};
use crate::error::{Error, Result};
use crate::particles::{MartingaleAccumulator, StepReport, TestFunction};
use crate::stats::{log_log_slope, variance};

const STUDY: &str = "martingale";
const TAG: u64 = 2;
const MIN_REPLICAS: usize = 100;
const SLOPE_TOLERANCE: f64 = 0.15;

struct Track(MartingaleAccumulator);

impl Observer for Track {
    fn wants_increments(&self) -> bool {
        true
    }

    fn after_step(&mut self, report: &StepReport) -> Result<()> {
        self.0.accumulate(report)
    }
}

fn check_design(cfg: &RunConfig) -> Result<()> {
    if cfg.replicas < MIN_REPLICAS {
        return Err(Error::Precondition(format!(
            "martingale scaling needs at least {MIN_REPLICAS} replicas per N, got {}",
            cfg.replicas
        )));
    }
    let mut ns = cfg.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let span = *ns.last().expect("validated") as f64 / ns[0] as f64;
    if ns.len() < 4 || span < 100.0 {
        return Err(Error::Precondition(format!(
            "martingale scaling needs at least 4 values of N spanning two decades, got {ns:?}"
        )));
    }
    Ok(())
}

/// Terminal values of both martingales for the configured test function.
pub fn run_martingale(cfg: &RunConfig) -> Result<Vec<Table>> {
    run_with(cfg, &cfg.test_function())
}

pub(crate) fn run_with(cfg: &RunConfig, phi: &TestFunction) -> Result<Vec<Table>> {
    cfg.validate()?;
    check_design(cfg)?;
    let sims = cfg
        .n_list
        .iter()
        .map(|&n| Simulation::new(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let accs = sims
        .iter()
        .map(|s| MartingaleAccumulator::new(phi, s.estimator.theta(), s.n))
        .collect::<Result<Vec<_>>>()?;
    let out = fan_out(&cfg.n_list, cfg.replicas, |n, r| {
        let i = cfg.n_list.iter().position(|&m| m == n).expect("listed");
        let mut obs = Track(accs[i].clone());
        sims[i].run(replica_seed(cfg.seed, TAG, n, r), &mut obs)?;
        Ok((obs.0.m1(), obs.0.m2()))
    })?;
    let mut t = Table::new(STUDY, "martingale_replicas", &["n", "replica", "m1", "m2"]);
    for (n, r, (m1, m2)) in out {
        t.push(vec![n as f64, r as f64, m1, m2]);
    }
    Ok(vec![t])
}

pub fn analyze_martingale(cfg: &RunConfig, raw: &[Table]) -> Result<StudyOutput> {
    let reps = Table::find(raw, "martingale_replicas")?;
    let (i1, i2) = (reps.column_index("m1")?, reps.column_index("m2")?);
    let mut var_table = Table::new(STUDY, "martingale_variance", &["n", "var_m1", "var_m2"]);
    let mut pts = [Vec::new(), Vec::new()];
    for n in reps.distinct("n")? {
        let rows = reps.select(&[("n", n)])?;
        let v1 = variance(&rows.iter().map(|r| r[i1]).collect::<Vec<_>>());
        let v2 = variance(&rows.iter().map(|r| r[i2]).collect::<Vec<_>>());
        var_table.push(vec![n, v1, v2]);
        pts[0].push((n, v1));
        pts[1].push((n, v2));
    }
    let bound = cfg.beta - 1.0 + SLOPE_TOLERANCE;
    let mut slopes = Table::new(
        STUDY,
        "martingale_slopes",
        &["statistic", "slope", "bound", "degenerate"],
    );
    let mut contracts = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let name = format!("m{}_variance_slope", i + 1);
        if p.iter().all(|&(_, v)| v == 0.0) {
            slopes.push(vec![(i + 1) as f64, f64::NAN, bound, 1.0]);
            contracts.push(Contract::new(
                STUDY,
                &name,
                true,
                "degenerate: every variance is zero",
            ));
            continue;
        }
        let slope = log_log_slope(p).unwrap_or(f64::NAN);
        slopes.push(vec![(i + 1) as f64, slope, bound, 0.0]);
        contracts.push(Contract::new(
            STUDY,
            &name,
            slope <= bound,
            format!("slope {slope:.4} vs bound {bound:.4}"),
        ));
    }
    Ok(StudyOutput {
        raw: raw.to_vec(),
        derived: vec![var_table, slopes],
        contracts,
    })
}

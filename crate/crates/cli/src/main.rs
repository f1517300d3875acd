use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use prolif_core::experiments::{
    analyze_study, run_and_analyze, run_pde, run_simulate, RunConfig, Snapshot, StudyOutput,
};
use prolif_core::io::{Archive, ArchiveWriter, Summary};

#[derive(Parser)]
#[command(
    name = "prolif",
    version,
    about = "Branching Brownian particles with moderate interaction and the FKPP equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file whose keys override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Archive directory. Defaults to runs/<subcommand>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Accept beta >= 1/2.
    #[arg(long, global = true)]
    allow_supercritical: bool,

    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// One particle replica per N: mass trace and density snapshots.
    Simulate,
    /// Spectral FKPP solve with snapshots.
    SolvePde,
    /// Particle density against the PDE reference.
    Converge,
    /// Variance scaling of the two test-function martingales.
    Scaling,
    /// Total-mass statistics and the Yule comparison.
    Mass,
    /// Sobolev boundedness, initial bound, time regularity, weak residual.
    Diagnose,
    /// Re-run the analysis of an existing archive.
    Analyze {
        #[arg(long)]
        archive: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SolvePde => "solve-pde",
            Command::Converge => "converge",
            Command::Scaling => "scaling",
            Command::Mass => "mass",
            Command::Diagnose => "diagnose",
            Command::Analyze { .. } => "analyze",
        }
    }

    fn studies(&self) -> &'static [&'static str] {
        match self {
            Command::Simulate => &["simulate"],
            Command::SolvePde => &["pde"],
            Command::Converge => &["convergence"],
            Command::Scaling => &["martingale"],
            Command::Mass => &["mass"],
            Command::Diagnose => &[
                "sobolev",
                "initial_bound",
                "time_regularity",
                "weak_residual",
            ],
            Command::Analyze { .. } => &[],
        }
    }
}

type Failure = Box<dyn std::error::Error>;

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let base = match cli.preset {
        Preset::Desk => RunConfig::desk(),
        Preset::Full => RunConfig::full(),
    };
    let mut cfg = match &cli.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::overlay(&base, &text)?
        }
        None => base,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.allow_supercritical {
        cfg.strict = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_snapshots(w: &mut ArchiveWriter, snaps: &[Snapshot]) -> Result<(), Failure> {
    for s in snaps {
        w.write_snapshot(&s.name, &s.field, s.time)?;
    }
    Ok(())
}

fn run(cli: &Cli, threads: usize) -> Result<Summary, Failure> {
    if let Command::Analyze { archive } = &cli.command {
        let a = Archive::open(archive)?;
        let mut w = ArchiveWriter::reopen(&a, "analyze");
        for study in &a.manifest.studies {
            let out = analyze_study(study, &a.config, &a.raw_tables(study)?)?;
            w.add_study(study, &out)?;
        }
        return Ok(w.finish(&a.config, threads)?);
    }
    let cfg = load_config(cli)?;
    let name = cli.command.name();
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(name));
    let mut w = ArchiveWriter::create(&out_dir, name)?;
    w.write_config(&cfg)?;
    for &study in cli.command.studies() {
        let out: StudyOutput = match study {
            "simulate" => {
                let (raw, snaps) = run_simulate(&cfg)?;
                write_snapshots(&mut w, &snaps)?;
                analyze_study(study, &cfg, &raw)?
            }
            "pde" => {
                let (raw, snaps) = run_pde(&cfg)?;
                write_snapshots(&mut w, &snaps)?;
                analyze_study(study, &cfg, &raw)?
            }
            _ => run_and_analyze(study, &cfg)?,
        };
        w.add_study(study, &out)?;
    }
    Ok(w.finish(&cfg, threads)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let threads = rayon::current_num_threads();
    match run(&cli, threads) {
        Ok(summary) => {
            for c in &summary.contracts {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}/{}: {}", c.study, c.name, c.detail);
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

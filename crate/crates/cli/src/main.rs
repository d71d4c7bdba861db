use std::path::PathBuf;
use std::process::ExitCode;

use aedsip::config::RunConfig;
use aedsip::pipeline::{Pipeline, StageError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aedsip", version, about = "Attribution-guided AED placement pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Config override as dotted `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the hexagonal grid and write it as GeoJSON.
    Grid,
    /// Generate a synthetic city with its ground truth.
    Synth,
    /// Bin sites and incidents into the feature matrix.
    Ingest,
    /// Fit the risk model on the training cells.
    Train,
    /// Attribute predictions to features and sites.
    Explain,
    /// Sample candidate sites and score them.
    Score,
    /// Select AED sites for the configured N and D_min.
    Optimize,
    /// Evaluate plans on held-out incidents.
    Evaluate,
    /// Run the N x D_min x candidate-set sweep.
    Sweep,
    /// Run every stage from grid through evaluate.
    Pipeline,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("missing required option `--config`"))?;
    let mut cfg = RunConfig::load(path, &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(command: Command, p: &mut Pipeline) -> Result<(), StageError> {
    match command {
        Command::Grid => {
            let g = p.grid()?;
            println!("grid: {} cells", g.grid.len());
        }
        Command::Synth => {
            let (sites, incidents) = p.synth()?;
            println!("synth: wrote {} and {}", sites.display(), incidents.display());
        }
        Command::Ingest => {
            let s = p.ingest()?;
            println!("ingest: {} sites, {} incidents", s.sites.len(), s.incidents.len());
        }
        Command::Train => {
            let t = p.train()?;
            if let Some(r) = &t.report {
                let test = r.test_r2.map_or("n/a".to_string(), |v| format!("{v:.4}"));
                println!(
                    "train: R² {:.4} MAE {:.3} | test: R² {test} MAE {:.3}",
                    r.train_r2, r.train_mae, r.test_mae
                );
            } else {
                println!("train: loaded model");
            }
        }
        Command::Explain => {
            let e = p.explain()?;
            println!("explain: {} cells, {} site shares", e.attribution.cells.len(), e.shares.shares.len());
        }
        Command::Score => {
            let sets = p.score()?;
            println!("score: {} sets of {} candidates", sets.len(), sets.first().map_or(0, Vec::len));
        }
        Command::Optimize => {
            for plan in p.optimize()? {
                println!(
                    "optimize: {} selected {} sites, objective {:.6}",
                    plan.solver.name(),
                    plan.selected.len(),
                    plan.objective
                );
            }
        }
        Command::Evaluate | Command::Pipeline => {
            for r in p.run_all()? {
                println!(
                    "evaluate: {} N={} D_min={} m coverage {}/{} survival {:.4}",
                    r.solver, r.n, r.d_min_m, r.coverage_count, r.incidents, r.mean_survival
                );
            }
        }
        Command::Sweep => {
            let res = p.sweep()?;
            for row in res.rows.iter().filter(|r| r.pct_increase_vs_random.is_some()) {
                if row.solver == aedsip::optimizer::SolverKind::Random {
                    continue;
                }
                println!(
                    "sweep: {} N={} D_min={} m coverage {:.1} ± {:.1} ({:+.1}% vs random)",
                    row.solver.name(),
                    row.n,
                    row.d_min_m,
                    row.coverage_mean,
                    row.coverage_std,
                    row.pct_increase_vs_random.unwrap()
                );
            }
            let failed = res.cells.iter().filter(|c| c.error.is_some()).count();
            if failed > 0 {
                eprintln!("warning: [sweep] {failed} cells failed; see sweep_long.csv");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: [config] {e:#}");
            return ExitCode::from(2);
        }
    };
    let mut pipeline = Pipeline::new(cfg);
    match run(cli.command, &mut pipeline) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e.source);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

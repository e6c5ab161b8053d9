use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sadl_cli::checks::Suite;
use sadl_cli::config::{AlgoSpec, ExperimentConfig};
use sadl_cli::plot::{emit_plot, PlotKind};
use sadl_cli::runner::{build_trial, run_experiment, run_on_stream, write_outputs};
use sadl_cli::{RunError, Table};
use sadl_core::stream_csv::{export_stream, ingest_constraints};

/// Track a drifting Mahalanobis metric from pairwise constraints.
#[derive(Debug, Parser)]
#[command(name = "sadl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write the constraint stream of one trial as CSV.
    Simulate(Common),
    /// Run the configured algorithms over simulated trials or a stream file.
    Track {
        #[command(flatten)]
        common: Common,
        /// Constraint CSV to track instead of simulating.
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Recompute summary.csv from a results table.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Results CSV (default: OUT/results.csv).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Run the acceptance checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Draw SVG charts from a results table.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: Option<PathBuf>,
        /// drift_rate, knn, nmi_prob, regret, or all.
        #[arg(long, default_value = "all")]
        kind: String,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `sadl` or `comid:ETA`.
    #[arg(long)]
    algo: Option<String>,
    /// Single-threaded run.
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, RunError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(algo) = &self.algo {
            cfg.set_algorithm(algo.parse::<AlgoSpec>()?);
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn threads(&self) -> Option<usize> {
        if self.deterministic {
            Some(1)
        } else {
            self.threads
        }
    }
}

fn results_path(cfg: &ExperimentConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out_dir.join("results.csv"))
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))
}

fn run(cli: Cli) -> Result<bool, RunError> {
    match cli.command {
        Cmd::Simulate(common) => {
            let cfg = common.config()?;
            let trial = build_trial(&cfg, 0)?;
            create_dir(&cfg.out_dir)?;
            let path = cfg.out_dir.join("stream.csv");
            export_stream(&path, &trial.constraints)?;
            println!("wrote {} constraints to {}", trial.constraints.len(), path.display());
            Ok(true)
        }
        Cmd::Track { common, stream } => {
            let cfg = common.config()?;
            let result = match stream {
                Some(path) => run_on_stream(&cfg, ingest_constraints(&path)?)?,
                None => run_experiment(&cfg, common.threads())?,
            };
            write_outputs(&result, &cfg, &cfg.out_dir)?;
            for f in &result.failures {
                eprintln!("trial {} {} failed: {}", f.trial, f.algo, f.message);
            }
            println!("wrote {} rows to {}", result.table.rows.len(), cfg.out_dir.display());
            Ok(result.failures.is_empty())
        }
        Cmd::Evaluate { common, results } => {
            let cfg = common.config()?;
            let table = Table::load(&results_path(&cfg, &results))?;
            create_dir(&cfg.out_dir)?;
            let path = cfg.out_dir.join("summary.csv");
            table.summarize(cfg.nmi_threshold).emit_csv(&path)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Cmd::Verify { common, only } => {
            let bin = std::env::current_exe().map_err(|e| RunError::io(Path::new("sadl"), e))?;
            let scratch = tempfile::tempdir().map_err(|e| RunError::io(Path::new("tempdir"), e))?;
            let mut suite = Suite::builtin(bin, scratch.path())?;
            suite.threads = common.threads();
            let ids: Vec<u8> = if only.is_empty() { (1..=9).collect() } else { only };
            let checks = suite.run(&ids, |c| println!("{c}"));
            let passed = checks.iter().filter(|c| c.passed).count();
            println!("{passed}/{} criteria passed", checks.len());
            Ok(passed == checks.len())
        }
        Cmd::Plot { common, results, kind } => {
            let cfg = common.config()?;
            let table = Table::load(&results_path(&cfg, &results))?;
            let kinds = if kind == "all" {
                PlotKind::ALL.to_vec()
            } else {
                vec![kind.parse::<PlotKind>()?]
            };
            create_dir(&cfg.out_dir)?;
            for k in kinds {
                let path = cfg.out_dir.join(format!("{}.svg", k.name()));
                match emit_plot(&table, k, &path, cfg.nmi_threshold) {
                    Ok(()) => println!("wrote {}", path.display()),
                    // with `all`, skip charts whose columns are absent
                    Err(e) if kind == "all" => eprintln!("skipped {}: {e}", k.name()),
                    Err(e) => return Err(e),
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dripalm_bench::{parse_csv, run_experiment, table, to_csv, ExperimentConfig, RunOptions};
use dripalm_core::objectives::{gen_lasso, gen_logreg, save_instance, LassoParams, LogregParams};

#[derive(Parser)]
#[command(name = "bench", about = "Run decentralized-solver experiments and tabulate results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its CSV.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Override the config's seed_base.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Record wall time; the CSV is then no longer reproducible.
        #[arg(long)]
        wall_time: bool,
        /// Also write per-run outer-iteration histories into this directory.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Print a comparison table from a result CSV.
    Table { csv: PathBuf },
    /// Generate a synthetic instance and save it to a directory.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m_total: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Destination directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GenFamily {
    Logreg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
    },
    Lasso {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda_c: Option<f64>,
        #[arg(long)]
        feature_scale: Option<f64>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { config, out, seed, jobs, wall_time, history } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = RunOptions { jobs, seed_base: seed, wall_time, history_dir: history };
            let rows = run_experiment(&cfg, &opts)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(cfg.output_name());
            std::fs::write(&path, to_csv(&rows))?;
            print!("{}", table::format_table(&rows));
            println!("wrote {}", path.display());
        }
        Command::Table { csv } => {
            let text = std::fs::read_to_string(&csv)?;
            let rows = parse_csv(&text).map_err(|e| format!("{}: {e}", csv.display()))?;
            print!("{}", table::format_table(&rows));
        }
        Command::Gen { family } => {
            let (problem, out) = match family {
                GenFamily::Logreg { common, lambda } => {
                    let base = LogregParams::default();
                    let p = LogregParams {
                        n: common.n.unwrap_or(base.n),
                        d: common.d.unwrap_or(base.d),
                        m_total: common.m_total.unwrap_or(base.m_total),
                        lambda: lambda.unwrap_or(base.lambda),
                        ..base
                    };
                    (gen_logreg(p, common.seed)?, common.out)
                }
                GenFamily::Lasso { common, lambda_c, feature_scale } => {
                    let base = LassoParams::default();
                    let p = LassoParams {
                        n: common.n.unwrap_or(base.n),
                        d: common.d.unwrap_or(base.d),
                        m_total: common.m_total.unwrap_or(base.m_total),
                        lambda_c: lambda_c.unwrap_or(base.lambda_c),
                        feature_scale: feature_scale.unwrap_or(base.feature_scale),
                        ..base
                    };
                    (gen_lasso(p, common.seed)?, common.out)
                }
            };
            save_instance(&problem, &out)?;
            println!(
                "saved n={} d={} lambda={:e} max L_i={:e} to {}",
                problem.n,
                problem.d,
                problem.meta.lambda,
                problem.max_lipschitz().unwrap_or(f64::NAN),
                out.display()
            );
        }
    }
    Ok(())
}

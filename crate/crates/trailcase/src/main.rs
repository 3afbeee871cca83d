//! Command-line surface: daily runs, case explanation, configuration
//! checks, ranking views, and demo-corpus generation.

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use trailcase::config::EngineConfig;
use trailcase::error::{EngineError, Result};
use trailcase::store::Store;
use trailcase::{pipeline, report, simgen};

#[derive(Parser)]
#[command(
    name = "trailcase",
    version,
    about = "Detects slow, multi-stage data-theft campaigns in network logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the daily pipeline: ingest, model, score, rank, and link cases.
    Run {
        /// Engine configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Day to score (YYYY-MM-DD).
        #[arg(long)]
        day: NaiveDate,
        /// Override the configured window length, in days.
        #[arg(long)]
        window: Option<u32>,
    },
    /// Print a stored case with its full evidence trail.
    Explain {
        /// Engine configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Case id as reported by `run`, e.g. 20180525-srv-b.
        case: String,
    },
    /// Check a configuration file and report every problem found.
    Validate {
        /// Engine configuration file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a stored day's machine ranking.
    Rank {
        /// Engine configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Day to show (YYYY-MM-DD); defaults to the latest ranked day.
        #[arg(long)]
        day: Option<NaiveDate>,
        /// Show at most this many machines.
        #[arg(long, default_value_t = 25)]
        limit: usize,
    },
    /// Write the bundled demo corpus: logs, identity map, configuration,
    /// and the staged-campaign scenario.
    Simgen {
        /// Directory to create the workspace in.
        #[arg(long)]
        out: PathBuf,
        /// First seed to generate.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds; several seeds go into seed-N
        /// subdirectories.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Generate business-as-usual traffic only, without the campaign.
        #[arg(long)]
        baseline_only: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are configuration-class failures; help and
            // version output are successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Ok(workers) = std::env::var("TRAILCASE_WORKERS") {
        match workers.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: TRAILCASE_WORKERS must be a positive integer");
                std::process::exit(1);
            }
        }
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, day, window } => {
            let mut config = EngineConfig::load(&config)?;
            if let Some(window) = window {
                if window < 1 {
                    return Err(EngineError::Config(
                        "--window must be at least 1 day".into(),
                    ));
                }
                config.engine.window_days = window;
            }
            let outcome = pipeline::run_daily(&config, day)?;
            print!("{}", report::render_summary(&outcome.summary));
            for case in &outcome.cases {
                println!();
                print!("{}", report::render_case(case));
            }
            Ok(())
        }
        Command::Explain { config, case } => {
            let config = EngineConfig::load(&config)?;
            let store = Store::open(&config.engine.results)?;
            match store.find_case(&case)? {
                Some(found) => {
                    print!("{}", report::render_case(&found));
                    Ok(())
                }
                None => Err(EngineError::Data(format!(
                    "no stored case with id '{case}'"
                ))),
            }
        }
        Command::Validate { config } => {
            let mut diagnostics = Vec::new();
            EngineConfig::diagnose(&config, &mut diagnostics)?;
            if diagnostics.is_empty() {
                println!("configuration ok: {}", config.display());
                Ok(())
            } else {
                for d in &diagnostics {
                    eprintln!("config: {d}");
                }
                Err(EngineError::Config(format!(
                    "{} problem(s) in {}",
                    diagnostics.len(),
                    config.display()
                )))
            }
        }
        Command::Rank { config, day, limit } => {
            let config = EngineConfig::load(&config)?;
            let store = Store::open(&config.engine.results)?;
            let day = match day {
                Some(day) => day,
                None => store.latest_ranked_day()?.ok_or_else(|| {
                    EngineError::Data("no ranked days in the results store yet".into())
                })?,
            };
            let ranking = store.load_ranking(day)?.ok_or_else(|| {
                EngineError::Data(format!("no ranking stored for {day}"))
            })?;
            println!("ranking for {day}");
            print!("{}", report::render_ranking(&ranking, limit));
            Ok(())
        }
        Command::Simgen {
            out,
            seed,
            seeds,
            baseline_only,
        } => {
            if seeds < 1 {
                return Err(EngineError::Config("--seeds must be at least 1".into()));
            }
            for i in 0..seeds {
                let seed = seed + i;
                let dir = if seeds == 1 {
                    out.clone()
                } else {
                    out.join(format!("seed-{seed}"))
                };
                std::fs::create_dir_all(&dir)
                    .map_err(|e| EngineError::Io {
                        path: dir.clone(),
                        message: e.to_string(),
                    })?;
                let corpus = simgen::write_demo_workspace(&dir, seed, !baseline_only)?;
                let last = corpus.day(corpus.days);
                println!(
                    "wrote {} days of logs to {} (seed {seed}{})",
                    corpus.days,
                    dir.display(),
                    if baseline_only {
                        ", baseline only"
                    } else {
                        ", campaign included"
                    }
                );
                println!(
                    "  next: trailcase run --config {} --day {last}",
                    dir.join("config.toml").display()
                );
            }
            Ok(())
        }
    }
}

//! Command-line front end for the ballot-bubble robustness pipeline.
//!
//! Seven subcommands cover the full experiment: `pc-solve` and
//! `validate` for the election arithmetic, then `gen-data` → `train` →
//! `attack` → `channel` → `report` for the classifier pipeline. Every
//! stage is deterministic given its seed, writes its artifacts once,
//! and finishes with a `run_manifest.json` naming its inputs and
//! outputs by content hash.

pub mod adv_io;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod rows;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CmdResult, Ctx, Failure};
use config::{parse_config, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "bubblebench",
    version,
    about = "Election-flipping arithmetic and print-scan robustness of bubble classifiers",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    /// Experiment configuration document (JSON); each subcommand reads
    /// its own section.
    #[arg(short, long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    /// Seed override; takes precedence over every config seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Output directory for this command (default: the config's
    /// out_dir, or the working directory, plus a per-stage subdirectory).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads for parallel stages. Results never depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the minimum compromised-ballot fraction for one election
    /// or a grid (repeat flags to form grids).
    PcSolve {
        /// Probability a ballot votes for the leader.
        #[arg(long = "pb", value_name = "F64")]
        p_b: Vec<f64>,
        /// Expected margin (leader minus runner-up probability).
        #[arg(long, value_name = "F64")]
        delta: Vec<f64>,
        /// Ballots cast.
        #[arg(long, value_name = "U64")]
        n: Vec<u64>,
        /// Acceptable failure probability of the attack.
        #[arg(long, value_name = "F64")]
        alpha: Vec<f64>,
    },
    /// Monte Carlo check of the closed form: simulate elections at the
    /// solved fraction and gate on the success rate.
    Validate {
        #[arg(long = "pb", value_name = "F64")]
        p_b: Option<f64>,
        #[arg(long, value_name = "F64")]
        delta: Option<f64>,
        #[arg(long, value_name = "U64")]
        n: Option<u64>,
        #[arg(long, value_name = "F64")]
        alpha: Option<f64>,
        /// Elections to simulate.
        #[arg(long, value_name = "U64")]
        trials: Option<u64>,
        /// Force the simulated compromise fraction instead of p_c*.
        #[arg(long = "pc", value_name = "F64")]
        p_c: Option<f64>,
    },
    /// Generate a synthetic bubble dataset directory.
    GenData {
        /// Dataset preset: bubbles_small or combined_small.
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
    },
    /// Train a classifier on a generated dataset.
    Train {
        /// Dataset directory (default: <out_dir>/dataset).
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
    },
    /// Run a digital attack sweep against a trained model.
    Attack {
        /// Model file (default: <out_dir>/train/model.bblm).
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Dataset directory (default: <out_dir>/dataset).
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        /// Attack suite: imperceptible or grid.
        #[arg(long, value_name = "NAME")]
        suite: Option<String>,
    },
    /// Print-scan saved adversarial sets and measure what survives.
    Channel {
        /// Model file (default: <out_dir>/train/model.bblm).
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Dataset directory (default: recorded by the attack stage).
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        /// Attack output directory (default: <out_dir>/attack).
        #[arg(long, value_name = "DIR")]
        adv: Option<PathBuf>,
        /// Channel preset: identity, laser+scan, or harsh.
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
    },
    /// Merge sweep and channel tables into summary reports.
    Report {
        /// Attack output directory (default: <out_dir>/attack).
        #[arg(long, value_name = "DIR")]
        attack_dir: Option<PathBuf>,
        /// Channel output directory (default: <out_dir>/channel).
        #[arg(long, value_name = "DIR")]
        channel_dir: Option<PathBuf>,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = err.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("{failure}");
            failure.code()
        }
    }
}

/// Entry point over the process arguments.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn execute(cli: Cli) -> CmdResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        // The global pool can only be built once per process; later
        // attempts are no-ops, which is fine because no result depends
        // on the thread count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    let (config, config_sha256) = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::MissingInput(format!(
                    "config file not found at {}",
                    path.display()
                )));
            }
            let bytes = std::fs::read(path)
                .map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
            let parsed = parse_config(&bytes).map_err(commands::bad_args)?;
            (parsed, Some(manifest::sha256_hex(&bytes)))
        }
        None => (ExperimentConfig::default(), None),
    };

    let ctx = Ctx {
        config,
        config_sha256,
        seed_flag: cli.seed,
        out_flag: cli.out,
    };

    match &cli.command {
        Command::PcSolve { p_b, delta, n, alpha } => commands::election::pc_solve(
            &ctx,
            &commands::election::PcSolveArgs {
                p_b: p_b.clone(),
                delta: delta.clone(),
                n: n.clone(),
                alpha: alpha.clone(),
            },
        ),
        Command::Validate { p_b, delta, n, alpha, trials, p_c } => commands::election::validate(
            &ctx,
            &commands::election::ValidateArgs {
                p_b: *p_b,
                delta: *delta,
                n: *n,
                alpha: *alpha,
                trials: *trials,
                p_c: *p_c,
            },
        ),
        Command::GenData { preset } => commands::gen_data::gen_data(&ctx, preset.as_deref()),
        Command::Train { dataset } => commands::train::train_cmd(&ctx, dataset.as_deref()),
        Command::Attack { model, dataset, suite } => commands::attack::attack_cmd(
            &ctx,
            &commands::attack::AttackFlags {
                model: model.as_deref(),
                dataset: dataset.as_deref(),
                suite: suite.as_deref(),
            },
        ),
        Command::Channel { model, dataset, adv, preset } => commands::channel::channel_cmd(
            &ctx,
            &commands::channel::ChannelFlags {
                model: model.as_deref(),
                dataset: dataset.as_deref(),
                adv: adv.as_deref(),
                preset: preset.as_deref(),
            },
        ),
        Command::Report { attack_dir, channel_dir } => commands::report::report_cmd(
            &ctx,
            &commands::report::ReportFlags {
                attack_dir: attack_dir.as_deref(),
                channel_dir: channel_dir.as_deref(),
            },
        ),
    }
}

//! Command-line surface: `estimate`, `simulate`, and `diagnose`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numerical error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::blocked::analyze_blocked;
use crate::clustered::{analyze_blocked_clustered, analyze_clustered};
use crate::config::{Design, RunConfig};
use crate::error::{Error, Result};
use crate::estimator::{analyze, first_stage_f, AnalysisOptions, WEAK_INSTRUMENT_F};
use crate::ingest::load_dataset;
use crate::report::{simulation_report_csv, simulation_report_json, write_report, EstimateReport};
use crate::sim::{run_monte_carlo, SimulationConfig};

#[derive(Parser)]
#[command(
    name = "rct-late",
    version,
    about = "Design-based LATE estimation for randomized trials with noncompliance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the LATE from a CSV dataset.
    Estimate {
        /// Input CSV file.
        #[arg(long)]
        data: PathBuf,
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Report destination; `.csv` selects CSV, anything else JSON.
        /// Defaults to the config's `output`, else stdout as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the finite-population Monte Carlo harness.
    Simulate {
        /// JSON simulation configuration.
        #[arg(long)]
        config: PathBuf,
        /// Report destination; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bound on simulation worker threads (results do not depend on it).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print first-stage diagnostics for a CSV dataset.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parses arguments, runs the requested command, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Estimate { data, config, out } => run_estimate(&data, &config, out.as_deref()),
        Command::Simulate {
            config,
            out,
            threads,
        } => run_simulate(&config, out.as_deref(), threads),
        Command::Diagnose { data, config } => run_diagnose(&data, &config),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_report(text, path),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn wants_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn run_estimate(data_path: &Path, config_path: &Path, out: Option<&Path>) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let data = load_dataset(data_path, &config)?;
    let report = match config.design {
        Design::Simple => {
            let opts = AnalysisOptions {
                variance_methods: config.variance_methods.clone(),
                alpha: config.alpha,
                reference: config.inference,
            };
            let result = analyze(&data, &opts)?;
            EstimateReport::from_late_result(
                &result,
                config.design,
                data.n(),
                None,
                config.alpha,
                config.inference,
            )?
        }
        Design::Blocked => {
            let pooled = analyze_blocked(&data, config.block_policy, config.pooling_scheme)?;
            let f_stat = first_stage_f(data.receipt(), data.assignment());
            EstimateReport::from_pooled_result(
                &pooled,
                config.design,
                None,
                f_stat,
                config.alpha,
                config.inference,
            )?
        }
        Design::Clustered => {
            let clustered =
                analyze_clustered(&data, config.weight_scheme, config.alpha, config.inference)?;
            EstimateReport::from_late_result(
                &clustered.result,
                config.design,
                data.n(),
                Some(clustered.m),
                config.alpha,
                config.inference,
            )?
        }
        Design::BlockedClustered => {
            let pooled = analyze_blocked_clustered(
                &data,
                config.weight_scheme,
                config.block_policy,
                config.pooling_scheme,
            )?;
            let f_stat = first_stage_f(data.receipt(), data.assignment());
            let clusters = pooled.clusters;
            EstimateReport::from_pooled_result(
                &pooled,
                config.design,
                clusters,
                f_stat,
                config.alpha,
                config.inference,
            )?
        }
    };
    let destination = out.or(config.output.as_deref());
    let text = match destination {
        Some(path) if wants_csv(path) => report.to_csv(),
        _ => report.to_json(),
    };
    emit(&text, destination)
}

fn run_simulate(config_path: &Path, out: Option<&Path>, threads: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(config_path)?;
    let cfg: SimulationConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    let summary = match threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_monte_carlo(&cfg))?
        }
        None => run_monte_carlo(&cfg)?,
    };
    let text = match out {
        Some(path) if wants_csv(path) => simulation_report_csv(&cfg, &summary),
        _ => simulation_report_json(&cfg, &summary),
    };
    emit(&text, out)
}

fn run_diagnose(data_path: &Path, config_path: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let data = load_dataset(data_path, &config)?;
    let n = data.n();
    let n1 = data.n_treated();
    let n0 = data.n_control();
    let rate = |arm: u8| -> f64 {
        let (sum, count) = data
            .receipt()
            .iter()
            .zip(data.assignment())
            .filter(|(_, &t)| t == arm)
            .fold((0.0, 0usize), |(s, c), (&d, _)| (s + d as f64, c + 1));
        sum / count as f64
    };
    let rate1 = rate(1);
    let rate0 = rate(0);
    let f_stat = first_stage_f(data.receipt(), data.assignment());
    println!("n: {n} (treated {n1}, control {n0})");
    println!("receipt rate, treated arm: {rate1:.6}");
    println!("receipt rate, control arm: {rate0:.6}");
    println!(
        "compliance effect (difference in receipt rates): {:.6}",
        rate1 - rate0
    );
    if f_stat.is_infinite() {
        println!("first-stage F: Infinity");
    } else {
        println!("first-stage F: {f_stat:.6}");
    }
    let verdict = if f_stat < WEAK_INSTRUMENT_F {
        format!("weak (F < {WEAK_INSTRUMENT_F})")
    } else {
        format!("adequate (F >= {WEAK_INSTRUMENT_F})")
    };
    println!("instrument strength: {verdict}");
    Ok(())
}

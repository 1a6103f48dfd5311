use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use super::{
    run_analysis, run_checks, run_ensemble, run_separable_baseline, run_sweeps, write_report, ExperimentConfig,
    PipelineError, Workers, WORKERS_ENV,
};

#[derive(Debug, Parser)]
#[command(name = "qmetro", version, about = "Entanglement and metrological capacity of random two-qubit states")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ensemble size.
    #[arg(long = "n-states", global = true, value_name = "N")]
    n_states: Option<usize>,
    /// Worker threads, or "auto".
    #[arg(long, global = true, value_name = "N|auto", value_parser = parse_workers)]
    workers: Option<Workers>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Regenerate even if the output directory holds a different run.
    #[arg(long, global = true)]
    force: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the ensemble CSV and manifest.
    Generate,
    /// Build the analysis bundle from an ensemble CSV.
    Analyze {
        /// Ensemble CSV (defaults to <output>/ensemble.csv).
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
    /// Run the configured channel sweeps.
    Sweep,
    /// MQFI statistics of random separable states.
    Baseline {
        /// Number of states (defaults to the config value).
        #[arg(long, value_name = "N")]
        n: Option<usize>,
    },
    /// Summarize the output directory into report.md and report.json.
    Report,
    /// Run the analytic anchor checks.
    Verify,
}

fn parse_workers(s: &str) -> Result<Workers, String> {
    Workers::parse(s).ok_or_else(|| format!("expected a positive integer or \"auto\", found \"{s}\""))
}

enum Failure {
    Usage(String),
    Runtime(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Runtime(e)
    }
}

fn resolve_config(cli: &Cli) -> Result<(ExperimentConfig, usize), Failure> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.master_seed = s;
    }
    if let Some(n) = cli.n_states {
        config.n_states = n;
    }
    if let Some(o) = &cli.output {
        config.output_dir = o.clone();
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    } else if let Ok(v) = std::env::var(WORKERS_ENV) {
        config.workers = Workers::parse(&v).ok_or_else(|| {
            Failure::Usage(format!("{WORKERS_ENV}: expected a positive integer or \"auto\", found \"{v}\""))
        })?;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let workers = config.workers.resolve();
    Ok((config, workers))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Verify = cli.command {
        let seed = cli.seed.unwrap_or(ExperimentConfig::default().master_seed);
        let results = run_checks(seed);
        for r in &results {
            println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        }
        let failed = results.iter().filter(|r| !r.passed).count();
        if failed > 0 {
            return Err(Failure::Runtime(PipelineError::Stage {
                context: "verify".into(),
                message: format!("{failed} check(s) failed"),
            }));
        }
        return Ok(());
    }
    let (config, workers) = resolve_config(&cli)?;
    match cli.command {
        Command::Generate => {
            let run = run_ensemble(&config, workers, cli.force)?;
            let m = &run.manifest;
            println!(
                "{}: {} completed, {} skipped, {} failed, REE on {}{}",
                config.ensemble_path().display(),
                m.completed,
                m.skipped,
                m.failed,
                m.ree_completed,
                if run.reused { " (reused)" } else { "" }
            );
        }
        Command::Analyze { input } => {
            let input = input.unwrap_or_else(|| config.ensemble_path());
            let report = run_analysis(&input, &config, workers)?;
            let s = &report.summary;
            println!(
                "analyzed {} states: mean purity {:.4}, Pearson(C, MQFI) {:.4}",
                s.n_states, s.purity_mean, s.pearson_concurrence_mqfi
            );
        }
        Command::Sweep => {
            for (result, evo) in run_sweeps(&config, workers)? {
                println!(
                    "{} {}: {} of {} gammas fitted, {} evolution law(s)",
                    result.kind,
                    result.measure,
                    result.params.len(),
                    result.gammas.len(),
                    evo.selected.len()
                );
            }
        }
        Command::Baseline { n } => {
            let b = run_separable_baseline(&config, n.unwrap_or(config.separable_baseline_n), workers)?;
            println!("separable MQFI/4 over {}: mean {:.4}, median {:.4}, std {:.4}", b.n, b.mean, b.median, b.std);
        }
        Command::Report => {
            let path = write_report(&config.output_dir)?;
            println!("{}", path.display());
        }
        Command::Verify => unreachable!(),
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on usage errors, 2 on runtime failures.
pub fn cli_entry<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_entry(["qmetro", "generate", "--bogus"]), 1);
        assert_eq!(cli_entry(["qmetro", "generate", "--workers", "zero"]), 1);
        assert_eq!(cli_entry(["qmetro", "generate", "--n-states", "5"]), 1);
        assert_eq!(cli_entry(["qmetro", "--help"]), 0);
    }

    #[test]
    fn missing_analysis_input_is_a_runtime_failure() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(cli_entry(["qmetro", "analyze", "--output", out, "--input", "/nonexistent/e.csv"]), 2);
        assert_eq!(cli_entry(["qmetro", "analyze", "--config", "/nonexistent/c.toml"]), 2);
    }
}

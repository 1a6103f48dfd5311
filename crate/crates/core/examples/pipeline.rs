//! A small end-to-end run: ensemble, analysis, one sweep, separable
//! baseline and report, written under a temporary directory.

use qmetro::pipeline::{
    run_analysis, run_ensemble, run_separable_baseline, run_sweeps, write_report, ExperimentConfig,
};

const CONFIG: &str = r#"
master_seed = 7
n_states = 3000
ree_subsample = 60
bootstrap_n = 100
workers = "auto"

[mqfi]
n_restarts = 8

[[sweeps]]
kind = "depolarizing"
measure = "concurrence"
n_sample = 1000
gammas = [0.0, 0.1, 0.2, 0.3]
bootstrap_n = 30
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("qmetro-example");
    let mut config = ExperimentConfig::from_toml_str(CONFIG)?;
    config.output_dir = dir.clone();
    let workers = config.workers.resolve();

    let run = run_ensemble(&config, workers, true)?;
    println!("{} states, REE on {}", run.manifest.completed, run.manifest.ree_completed);
    let report = run_analysis(&config.ensemble_path(), &config, workers)?;
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    for (result, evo) in run_sweeps(&config, workers)? {
        println!("{} B(1) extrapolated {:?}", result.kind, evo.b_infinity_extrapolated);
    }
    let baseline = run_separable_baseline(&config, 200, workers)?;
    println!("separable MQFI/4 mean {:.4}", baseline.mean);
    println!("report at {}", write_report(&dir)?.display());
    Ok(())
}

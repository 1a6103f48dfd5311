//! End-to-end experiments: configuration, ensemble generation, analysis
//! bundles, channel sweeps, the separable baseline and the CLI.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! ensemble.csv
//! manifest.json
//! analysis/summary.json
//! analysis/<measure>/{scatter.csv, bins.csv, fits.json, bootstrap.json,
//!                     boundaries.csv, boundary_fits.json, table1.csv,
//!                     table1_raw.csv, bin_robustness.json, summary.json}
//! sweeps/<kind>_<measure>.json
//! sweeps/<kind>_<measure>_evolution.json
//! separable_baseline.json
//! report.md
//! ```

mod analysis;
mod cli;
mod ensemble;
mod sweeps;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::{ChannelError, ChannelKind};
use crate::entanglement::{EntanglementError, Measure, ReeConfig};
use crate::metrology::{MetrologyError, MqfiConfig};
use crate::states::StateError;
use crate::stats::StatsError;

pub use analysis::{run_analysis, AnalysisReport, BootstrapEntry, EnsembleSummary, MeasureAnalysis, RobustnessRow};
pub use cli::cli_entry;
pub use ensemble::{read_ensemble_csv, run_ensemble, EnsembleRun};
pub use sweeps::{run_separable_baseline, run_sweeps, write_report, EvolutionFit, SeparableBaseline, SweepEvolution};
pub use verify::{run_checks, CheckResult};

/// Environment variable consulted when `--workers` is not given.
pub const WORKERS_ENV: &str = "QMETRO_WORKERS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("refusing to overwrite: {0}")]
    Refused(String),
    #[error("{failed} of {total} states failed (more than 1%)")]
    TooManyFailures { failed: usize, total: usize },
    #[error("{context}: {message}")]
    Stage { context: String, message: String },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Entanglement(#[from] EntanglementError),
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn stage<E: std::fmt::Display>(context: impl Into<String>) -> impl FnOnce(E) -> PipelineError {
    let context = context.into();
    move |e| PipelineError::Stage { context, message: e.to_string() }
}

/// Writes `contents` via a temporary sibling and a rename.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, &s)
}

/// An integer, or the string "all".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CountOrWord", into = "CountOrWord")]
pub enum ReeSubsample {
    All,
    Count(usize),
}

/// An integer, or the string "auto".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CountOrWord", into = "CountOrWord")]
pub enum Workers {
    Auto,
    Count(usize),
}

/// An integer bin count, or the string "auto_fd" for Freedman-Diaconis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CountOrWord", into = "CountOrWord")]
pub enum Binning {
    AutoFd,
    Fixed(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CountOrWord {
    Count(usize),
    Word(String),
}

macro_rules! count_or_word {
    ($ty:ident, $word:literal, $unit:ident, $count:ident) => {
        impl TryFrom<CountOrWord> for $ty {
            type Error = String;
            fn try_from(v: CountOrWord) -> std::result::Result<Self, String> {
                match v {
                    CountOrWord::Count(n) => Ok($ty::$count(n)),
                    CountOrWord::Word(w) if w == $word => Ok($ty::$unit),
                    CountOrWord::Word(w) => Err(format!("expected an integer or \"{}\", found \"{w}\"", $word)),
                }
            }
        }

        impl From<$ty> for CountOrWord {
            fn from(v: $ty) -> Self {
                match v {
                    $ty::$unit => CountOrWord::Word($word.to_string()),
                    $ty::$count(n) => CountOrWord::Count(n),
                }
            }
        }
    };
}

count_or_word!(ReeSubsample, "all", All, Count);
count_or_word!(Workers, "auto", Auto, Count);
count_or_word!(Binning, "auto_fd", AutoFd, Fixed);

impl Workers {
    pub fn resolve(self) -> usize {
        match self {
            Workers::Count(n) => n.max(1),
            Workers::Auto => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "auto" {
            return Some(Workers::Auto);
        }
        s.parse().ok().filter(|&n| n > 0).map(Workers::Count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDirective {
    pub kind: ChannelKind,
    #[serde(default = "default_sweep_measure")]
    pub measure: Measure,
    #[serde(default = "default_sweep_n")]
    pub n_sample: usize,
    pub gammas: Vec<f64>,
    #[serde(default = "default_sweep_bootstrap")]
    pub bootstrap_n: usize,
}

fn default_sweep_measure() -> Measure {
    Measure::Concurrence
}

fn default_sweep_n() -> usize {
    2000
}

fn default_sweep_bootstrap() -> usize {
    100
}

fn grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n).map(|i| (i as f64 * step * 1e12).round() / 1e12).collect()
}

impl SweepDirective {
    pub fn default_set() -> Vec<SweepDirective> {
        vec![
            SweepDirective {
                kind: ChannelKind::AmplitudeDamping,
                measure: Measure::Concurrence,
                n_sample: 2000,
                gammas: grid(0.1, 0.5),
                bootstrap_n: 100,
            },
            SweepDirective {
                kind: ChannelKind::PhaseDamping,
                measure: Measure::Concurrence,
                n_sample: 2000,
                gammas: grid(0.1, 0.5),
                bootstrap_n: 100,
            },
            SweepDirective {
                kind: ChannelKind::Depolarizing,
                measure: Measure::Concurrence,
                n_sample: 2000,
                gammas: grid(0.05, 0.3),
                bootstrap_n: 100,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_states: usize,
    pub ree_subsample: ReeSubsample,
    pub binning: Binning,
    pub min_bin_occupancy: usize,
    pub bootstrap_n: usize,
    pub cv_folds: usize,
    pub test_fraction: f64,
    pub bin_robustness: Vec<usize>,
    pub separable_baseline_n: usize,
    pub output_dir: PathBuf,
    pub workers: Workers,
    pub mqfi: MqfiConfig,
    pub ree: ReeConfig,
    pub sweeps: Vec<SweepDirective>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 42,
            n_states: 20_000,
            ree_subsample: ReeSubsample::Count(500),
            binning: Binning::AutoFd,
            min_bin_occupancy: 100,
            bootstrap_n: 1000,
            cv_folds: 5,
            test_fraction: 0.2,
            bin_robustness: vec![15, 20, 25, 30, 35],
            separable_baseline_n: 1000,
            output_dir: PathBuf::from("qmetro-out"),
            workers: Workers::Auto,
            mqfi: MqfiConfig::default(),
            ree: ReeConfig::default(),
            sweeps: SweepDirective::default_set(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.n_states < 100 {
            return bad(format!("n_states must be at least 100, got {}", self.n_states));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.cv_folds < 2 {
            return bad(format!("cv_folds must be at least 2, got {}", self.cv_folds));
        }
        if self.bootstrap_n == 0 {
            return bad("bootstrap_n must be positive".into());
        }
        if let Binning::Fixed(n) = self.binning {
            if n < 2 {
                return bad(format!("binning needs at least 2 bins, got {n}"));
            }
        }
        if let Workers::Count(0) = self.workers {
            return bad("workers must be positive".into());
        }
        if self.mqfi.n_restarts == 0 || self.ree.n_starts == 0 {
            return bad("mqfi.n_restarts and ree.n_starts must be positive".into());
        }
        for s in &self.sweeps {
            if s.gammas.first() != Some(&0.0) || s.gammas.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("sweep {}: gammas must start at 0 and increase", s.kind));
            }
            if s.gammas.iter().any(|&g| g > s.kind.max_gamma()) {
                return bad(format!("sweep {}: gamma above {}", s.kind, s.kind.max_gamma()));
            }
            if s.n_sample < 200 {
                return bad(format!("sweep {}: n_sample must be at least 200", s.kind));
            }
        }
        Ok(())
    }

    /// Number of states that receive an REE evaluation.
    pub fn ree_count(&self) -> usize {
        match self.ree_subsample {
            ReeSubsample::All => self.n_states,
            ReeSubsample::Count(n) => n.min(self.n_states),
        }
    }

    pub fn ensemble_path(&self) -> PathBuf {
        self.output_dir.join("ensemble.csv")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("manifest.json")
    }

    /// The settings that determine ensemble contents. Two configs with equal
    /// identities produce byte-identical ensembles.
    fn ensemble_identity(&self) -> serde_json::Value {
        serde_json::json!({
            "master_seed": self.master_seed,
            "n_states": self.n_states,
            "ree_subsample": self.ree_subsample,
            "mqfi": self.mqfi,
            "ree": self.ree,
        })
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub config: ExperimentConfig,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub n_states: usize,
    pub completed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub ree_requested: usize,
    pub ree_completed: usize,
    pub failed_ids: Vec<u64>,
    pub ree_not_converged_ids: Vec<u64>,
    pub mqfi_low_confidence_ids: Vec<u64>,
    pub mqfi_unconverged_ids: Vec<u64>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn is_complete(&self) -> bool {
        self.completed + self.skipped + self.failed == self.n_states
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub(crate) fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn config_words_and_counts() {
        let c = ExperimentConfig::from_toml_str("ree_subsample = \"all\"\nworkers = 3\nbinning = 26\n").unwrap();
        assert_eq!(c.ree_subsample, ReeSubsample::All);
        assert_eq!(c.workers, Workers::Count(3));
        assert_eq!(c.binning, Binning::Fixed(26));
        assert!(ExperimentConfig::from_toml_str("workers = \"many\"").is_err());
        assert!(ExperimentConfig::from_toml_str("n_states = 10").is_err());
        assert!(ExperimentConfig::from_toml_str("test_fraction = 1.5").is_err());
        assert!(ExperimentConfig::from_toml_str("unknown_key = 1").is_err());
    }

    #[test]
    fn nested_sections_parse() {
        let c = ExperimentConfig::from_toml_str(
            "[mqfi]\nn_restarts = 4\n\n[[sweeps]]\nkind = \"phase_damping\"\ngammas = [0.0, 0.25, 0.5]\n",
        )
        .unwrap();
        assert_eq!(c.mqfi.n_restarts, 4);
        assert_eq!(c.mqfi.max_iter, 1000);
        assert_eq!(c.sweeps.len(), 1);
        assert_eq!(c.sweeps[0].n_sample, 2000);
        assert!(ExperimentConfig::from_toml_str("[[sweeps]]\nkind = \"phase_damping\"\ngammas = [0.1]\n").is_err());
    }

    #[test]
    fn default_grids() {
        assert_eq!(grid(0.1, 0.5), vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
    }
}

use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{
    io_err, unix_now, with_workers, write_atomic, write_json, ExperimentConfig, PipelineError, Result, RunManifest,
};
use crate::entanglement::{concurrence, negativity, ree, EntanglementError};
use crate::metrology::{mqfi, pauli_product_generator, Axis};
use crate::seed::{derive_labeled, derive_seed, rng_from_seed};
use crate::states::{gen_hs_random, purity, EnsembleRecord};

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub records: Vec<EnsembleRecord>,
    pub manifest: RunManifest,
    /// True when an existing complete run with the same settings was reused.
    pub reused: bool,
}

enum Outcome {
    Done { record: EnsembleRecord, low_confidence: bool, unconverged: bool },
    Skipped(u64, String),
    Failed(u64, String),
}

fn evaluate_state(config: &ExperimentConfig, id: u64) -> Outcome {
    let seed = derive_seed(config.master_seed, id);
    let rho = match gen_hs_random(seed) {
        Ok(r) => r,
        Err(e) => return Outcome::Failed(id, e.to_string()),
    };
    let run = || -> std::result::Result<_, String> {
        let c = concurrence(&rho).map_err(|e| e.to_string())?;
        let n = negativity(&rho).map_err(|e| e.to_string())?;
        let h = pauli_product_generator(Axis::Z, Axis::Z);
        let m = mqfi(&rho, &h, &config.mqfi, derive_labeled(seed, "mqfi", 0)).map_err(|e| e.to_string())?;
        Ok((c, n, m))
    };
    match run() {
        Ok((c, n, m)) => {
            let record = EnsembleRecord {
                state_id: id,
                seed,
                purity: purity(&rho),
                concurrence: c,
                negativity: n,
                ree: None,
                mqfi: m.value,
                mqfi_norm: m.value / 4.0,
            };
            let finite = [record.purity, c, n, m.value].iter().all(|v| v.is_finite());
            if finite {
                Outcome::Done { record, low_confidence: m.low_confidence, unconverged: m.unconverged }
            } else {
                Outcome::Skipped(id, "non-finite measure".into())
            }
        }
        Err(e) => Outcome::Failed(id, e),
    }
}

/// Indices into `records` chosen for REE: ranks by (concurrence, id) are cut
/// into ten deciles, each decile is shuffled, and picks alternate across
/// deciles so every decile contributes equally.
pub(crate) fn stratified_subsample(records: &[EnsembleRecord], count: usize, seed: u64) -> Vec<usize> {
    let n = records.len();
    if count >= n {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[a].concurrence.total_cmp(&records[b].concurrence).then(records[a].state_id.cmp(&records[b].state_id))
    });
    let mut deciles: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (rank, &i) in order.iter().enumerate() {
        deciles[rank * 10 / n].push(i);
    }
    let mut rng = rng_from_seed(seed);
    for d in deciles.iter_mut() {
        d.shuffle(&mut rng);
    }
    let mut picked = Vec::with_capacity(count);
    let mut round = 0;
    while picked.len() < count {
        for d in &deciles {
            if let Some(&i) = d.get(round) {
                if picked.len() < count {
                    picked.push(i);
                }
            }
        }
        round += 1;
    }
    picked.sort_unstable();
    picked
}

fn check_existing(config: &ExperimentConfig, force: bool) -> Result<Option<RunManifest>> {
    let manifest_path = config.manifest_path();
    let csv_path = config.ensemble_path();
    if !manifest_path.exists() {
        if csv_path.exists() && !force {
            return Err(PipelineError::Refused(format!(
                "{} exists without a manifest; pass --force to regenerate",
                csv_path.display()
            )));
        }
        return Ok(None);
    }
    let manifest = RunManifest::load(&manifest_path)?;
    let same = manifest.config.ensemble_identity() == config.ensemble_identity();
    if same && manifest.is_complete() && csv_path.exists() {
        return Ok(Some(manifest));
    }
    if force {
        return Ok(None);
    }
    let why = if same { "is incomplete" } else { "was produced with different settings" };
    Err(PipelineError::Refused(format!(
        "existing run in {} {why}; pass --force to regenerate",
        config.output_dir.display()
    )))
}

/// Generates the ensemble, writes `ensemble.csv` and `manifest.json`.
///
/// An existing complete run with identical ensemble settings is reused. Any
/// other existing output is left untouched unless `force` is set.
pub fn run_ensemble(config: &ExperimentConfig, workers: usize, force: bool) -> Result<EnsembleRun> {
    config.validate()?;
    if let Some(manifest) = check_existing(config, force)? {
        info!("reusing ensemble in {}", config.output_dir.display());
        let records = read_ensemble_csv(&config.ensemble_path())?;
        return Ok(EnsembleRun { records, manifest, reused: true });
    }
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let started = unix_now();
    let n = config.n_states;
    info!("generating {n} states with {workers} workers");

    let outcomes: Vec<Outcome> =
        with_workers(workers, || (0..n as u64).into_par_iter().map(|id| evaluate_state(config, id)).collect())?;

    let mut records = Vec::with_capacity(n);
    let mut manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        workers,
        started_unix: started,
        finished_unix: started,
        n_states: n,
        completed: 0,
        skipped: 0,
        failed: 0,
        ree_requested: 0,
        ree_completed: 0,
        failed_ids: Vec::new(),
        ree_not_converged_ids: Vec::new(),
        mqfi_low_confidence_ids: Vec::new(),
        mqfi_unconverged_ids: Vec::new(),
        warnings: Vec::new(),
    };
    for o in outcomes {
        match o {
            Outcome::Done { record, low_confidence, unconverged } => {
                if low_confidence {
                    manifest.mqfi_low_confidence_ids.push(record.state_id);
                }
                if unconverged {
                    manifest.mqfi_unconverged_ids.push(record.state_id);
                }
                records.push(record);
            }
            Outcome::Skipped(id, why) => {
                manifest.skipped += 1;
                manifest.warnings.push(format!("state {id} skipped: {why}"));
            }
            Outcome::Failed(id, why) => {
                manifest.failed += 1;
                manifest.failed_ids.push(id);
                manifest.warnings.push(format!("state {id} failed: {why}"));
            }
        }
    }
    manifest.completed = records.len();
    if manifest.failed * 100 > n {
        return Err(PipelineError::TooManyFailures { failed: manifest.failed, total: n });
    }

    let picks =
        stratified_subsample(&records, config.ree_count(), derive_labeled(config.master_seed, "ree-subsample", 0));
    manifest.ree_requested = picks.len();
    info!("computing REE on {} states", picks.len());
    let ree_cfg = config.ree;
    let ree_values: Vec<(usize, std::result::Result<f64, EntanglementError>)> = with_workers(workers, || {
        picks
            .par_iter()
            .map(|&i| {
                let r = &records[i];
                let rho = gen_hs_random(r.seed).expect("state regenerated from a seed that succeeded");
                (i, ree(&rho, &ree_cfg, derive_labeled(r.seed, "ree", 0)).map(|res| res.value))
            })
            .collect()
    })?;
    for (i, value) in ree_values {
        match value {
            Ok(v) => {
                records[i].ree = Some(v);
                manifest.ree_completed += 1;
            }
            Err(e) => {
                let id = records[i].state_id;
                warn!("REE for state {id}: {e}");
                manifest.ree_not_converged_ids.push(id);
                manifest.warnings.push(format!("state {id} REE: {e}"));
            }
        }
    }

    write_ensemble_csv(&config.ensemble_path(), &records)?;
    manifest.finished_unix = unix_now();
    write_json(&config.manifest_path(), &manifest)?;
    Ok(EnsembleRun { records, manifest, reused: false })
}

pub(crate) fn write_ensemble_csv(path: &Path, records: &[EnsembleRecord]) -> Result<()> {
    let mut s = String::with_capacity(records.len() * 180);
    s.push_str(EnsembleRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    write_atomic(path, &s)
}

pub fn read_ensemble_csv(path: &Path) -> Result<Vec<EnsembleRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == EnsembleRecord::CSV_HEADER => {}
        _ => {
            return Err(PipelineError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header \"{}\"", EnsembleRecord::CSV_HEADER),
            })
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            EnsembleRecord::from_csv_row(l).map_err(|message| PipelineError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message,
            })
        })
        .collect()
}

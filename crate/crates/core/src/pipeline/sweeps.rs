use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{io_err, stage, with_workers, write_atomic, write_json, ExperimentConfig, PipelineError, Result};
use crate::channels::{channel_sweep, ChannelKind, SweepOptions, SweepPoint, SweepResult};
use crate::entanglement::{negativity, Measure};
use crate::metrology::{mqfi, pauli_product_generator, Axis};
use crate::seed::derive_labeled;
use crate::states::{separable_mixture, DensityMatrix};
use crate::stats::{fit_model_or_best, mean, percentile, std_dev, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionFit {
    /// "A", "alpha" or "B".
    pub parameter: String,
    pub model: ModelKind,
    pub params: Vec<f64>,
    pub r2: f64,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEvolution {
    pub kind: ChannelKind,
    pub measure: Measure,
    /// Every candidate fitted to each parameter series.
    pub fits: Vec<EvolutionFit>,
    /// The law reported for each parameter.
    pub selected: Vec<EvolutionFit>,
    /// max over γ of |p(γ) − p(0)| / |p(0)| for A, α, B.
    pub max_relative_drift: [f64; 3],
    /// Decay rate of A(γ) = A₀ e^(−β γ) (amplitude damping).
    pub beta_a: Option<f64>,
    /// Intercept + slope of the linear B(γ) law, i.e. B at γ = 1 (depolarizing).
    pub b_infinity_extrapolated: Option<f64>,
    /// MQFI/4 of the maximally mixed state (depolarizing).
    pub b_infinity_direct: Option<f64>,
    pub errors: Vec<String>,
}

impl SweepEvolution {
    pub fn selected_for(&self, parameter: &str) -> Option<&EvolutionFit> {
        self.selected.iter().find(|f| f.parameter == parameter)
    }

    pub fn fits_for<'a>(&'a self, parameter: &'a str) -> impl Iterator<Item = &'a EvolutionFit> + 'a {
        self.fits.iter().filter(move |f| f.parameter == parameter)
    }
}

const PARAMETERS: [(&str, fn(&SweepPoint) -> f64); 3] = [("A", |p| p.a), ("alpha", |p| p.alpha), ("B", |p| p.b)];

fn candidates(kind: ChannelKind, parameter: &str) -> Vec<ModelKind> {
    match (kind, parameter) {
        (ChannelKind::AmplitudeDamping, "A") => vec![ModelKind::ExponentialDecay, ModelKind::Linear],
        (ChannelKind::PhaseDamping, _) => {
            vec![ModelKind::Constant, ModelKind::Linear, ModelKind::ExponentialDecay, ModelKind::Quadratic]
        }
        _ => vec![ModelKind::Linear],
    }
}

/// Fits evolution laws to the per-γ parameters of a sweep.
pub fn fit_evolution(result: &SweepResult) -> SweepEvolution {
    let mut fits = Vec::new();
    let mut selected = Vec::new();
    let mut errors = Vec::new();
    let mut drift = [f64::NAN; 3];
    for (k, (name, get)) in PARAMETERS.iter().enumerate() {
        let (g, v) = result.series(get);
        if let (Some(&v0), true) = (v.first(), result.params.first().map(|p| p.gamma) == Some(0.0)) {
            drift[k] = v.iter().map(|x| ((x - v0) / v0).abs()).fold(0.0, f64::max);
        }
        let mut these = Vec::new();
        for model in candidates(result.kind, name) {
            match fit_model_or_best(model, &g, &v, None) {
                Ok(f) => these.push(EvolutionFit {
                    parameter: name.to_string(),
                    model,
                    params: f.params,
                    r2: f.r2,
                    aic: f.aic,
                    bic: f.bic,
                }),
                Err(e) => errors.push(format!("{name} {model}: {e}")),
            }
        }
        let choice = match result.kind {
            ChannelKind::PhaseDamping => these.iter().min_by(|a, b| a.aic.total_cmp(&b.aic)),
            _ => these.first().filter(|f| f.model == candidates(result.kind, name)[0]),
        };
        if let Some(c) = choice {
            selected.push(c.clone());
        }
        fits.extend(these);
    }
    let mut evo = SweepEvolution {
        kind: result.kind,
        measure: result.measure,
        fits,
        selected,
        max_relative_drift: drift,
        beta_a: None,
        b_infinity_extrapolated: None,
        b_infinity_direct: None,
        errors,
    };
    match result.kind {
        ChannelKind::AmplitudeDamping => {
            evo.beta_a = evo.selected_for("A").filter(|f| f.model == ModelKind::ExponentialDecay).map(|f| f.params[1]);
        }
        ChannelKind::Depolarizing => {
            evo.b_infinity_extrapolated = evo.selected_for("B").map(|f| f.params[0] + f.params[1]);
            let h = pauli_product_generator(Axis::Z, Axis::Z);
            evo.b_infinity_direct =
                mqfi(&DensityMatrix::maximally_mixed(), &h, &Default::default(), 0).ok().map(|r| r.value / 4.0);
        }
        ChannelKind::PhaseDamping => {}
    }
    evo
}

/// Runs every sweep directive and writes `sweeps/<kind>_<measure>.json` and
/// `sweeps/<kind>_<measure>_evolution.json`.
pub fn run_sweeps(config: &ExperimentConfig, workers: usize) -> Result<Vec<(SweepResult, SweepEvolution)>> {
    config.validate()?;
    let dir = config.output_dir.join("sweeps");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut out = Vec::new();
    for (i, d) in config.sweeps.iter().enumerate() {
        info!("sweep {} / {} on {} states", d.kind, d.measure, d.n_sample);
        let options =
            SweepOptions { bootstrap_n: d.bootstrap_n, mqfi: config.mqfi, ree: config.ree, ..Default::default() };
        let seed = derive_labeled(config.master_seed, "sweep", i as u64);
        let result = with_workers(workers, || channel_sweep(seed, d.n_sample, d.kind, &d.gammas, d.measure, &options))?
            .map_err(stage(format!("sweep {} {}", d.kind, d.measure)))?;
        let evo = fit_evolution(&result);
        for e in &evo.errors {
            warn!("sweep {} {}: {e}", d.kind, d.measure);
        }
        let stem = format!("{}_{}", d.kind, d.measure);
        write_json(&dir.join(format!("{stem}.json")), &result)?;
        write_json(&dir.join(format!("{stem}_evolution.json")), &evo)?;
        out.push((result, evo));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableBaseline {
    pub n: usize,
    pub n_components: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Largest negativity over the sample; certifies separability.
    pub max_negativity: f64,
    pub low_confidence: usize,
}

/// MQFI/4 statistics over `n` random separable mixtures. Writes
/// `separable_baseline.json`.
pub fn run_separable_baseline(config: &ExperimentConfig, n: usize, workers: usize) -> Result<SeparableBaseline> {
    if n < 100 {
        return Err(PipelineError::Config(format!("separable baseline needs n >= 100, got {n}")));
    }
    let n_components = crate::entanglement::ANSATZ_COMPONENTS;
    let h = pauli_product_generator(Axis::Z, Axis::Z);
    let rows: Vec<(f64, f64, bool)> = with_workers(workers, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64, bool)> {
                let seed = derive_labeled(config.master_seed, "separable", i);
                let rho = separable_mixture(seed, n_components)?;
                let m = mqfi(&rho, &h, &config.mqfi, derive_labeled(seed, "mqfi", 0))?;
                Ok((m.value / 4.0, negativity(&rho)?, m.low_confidence))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let v: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let baseline = SeparableBaseline {
        n,
        n_components,
        mean: mean(&v),
        median: percentile(&v, 0.5),
        std: std_dev(&v),
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_negativity: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        low_confidence: rows.iter().filter(|r| r.2).count(),
    };
    write_json(&config.output_dir.join("separable_baseline.json"), &baseline)?;
    Ok(baseline)
}

fn read_json(path: &Path) -> Option<serde_json::Value> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

fn num(v: &serde_json::Value) -> String {
    v.as_f64().map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

/// Collects whatever parts of the bundle exist into `report.json` and a
/// readable `report.md`. Returns the markdown path.
pub fn write_report(output_dir: &Path) -> Result<PathBuf> {
    let mut md = String::from("# qmetro run report\n\n");
    let mut json = serde_json::Map::new();
    if let Some(m) = read_json(&output_dir.join("manifest.json")) {
        let _ = writeln!(
            md,
            "## Ensemble\n\nstates {} (completed {}, skipped {}, failed {}), REE on {} of {} requested\n",
            m["n_states"], m["completed"], m["skipped"], m["failed"], m["ree_completed"], m["ree_requested"]
        );
        json.insert("manifest".into(), m);
    }
    let analysis = output_dir.join("analysis");
    if let Some(s) = read_json(&analysis.join("summary.json")) {
        let _ = writeln!(
            md,
            "## Analysis\n\nmean purity {}\n\nPearson with MQFI: concurrence {}, negativity {}, REE {}\n",
            num(&s["purity_mean"]),
            num(&s["pearson_concurrence_mqfi"]),
            num(&s["pearson_negativity_mqfi"]),
            num(&s["pearson_ree_mqfi"])
        );
        json.insert("analysis".into(), s);
        md.push_str("| measure | A | alpha | B | B p-value | cubic R2 train | cubic R2 CV | upper boundary R2 |\n");
        md.push_str("|---|---|---|---|---|---|---|---|\n");
        let mut per = serde_json::Map::new();
        for m in Measure::ALL {
            let Some(s) = read_json(&analysis.join(m.name()).join("summary.json")) else { continue };
            let p = &s["exponential"]["params"];
            let _ = writeln!(
                md,
                "| {m} | {} | {} | {} | {} | {} | {} | {} |",
                num(&p[0]),
                num(&p[1]),
                num(&p[2]),
                s["b_zero_p_value"].as_f64().map(|x| format!("{x:.2e}")).unwrap_or_else(|| "n/a".into()),
                num(&s["cubic"]["r2_train"]),
                num(&s["cubic"]["r2_cv"]),
                num(&s["upper_boundary_r2"])
            );
            per.insert(m.name().into(), s);
        }
        md.push('\n');
        json.insert("measures".into(), per.into());
    }
    if let Some(b) = read_json(&output_dir.join("separable_baseline.json")) {
        let _ = writeln!(
            md,
            "## Separable baseline\n\nn {}, MQFI/4 mean {} median {} std {}\n",
            b["n"],
            num(&b["mean"]),
            num(&b["median"]),
            num(&b["std"])
        );
        json.insert("separable_baseline".into(), b);
    }
    let sweeps = output_dir.join("sweeps");
    if let Ok(entries) = fs::read_dir(&sweeps) {
        let mut names: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with("_evolution.json"))
            .collect();
        names.sort();
        let mut list = Vec::new();
        if !names.is_empty() {
            md.push_str("## Channel sweeps\n\n");
        }
        for p in names {
            let Some(e) = read_json(&p) else { continue };
            let _ = write!(md, "- {} / {}:", e["kind"].as_str().unwrap_or("?"), e["measure"].as_str().unwrap_or("?"));
            for s in e["selected"].as_array().into_iter().flatten() {
                let _ = write!(
                    md,
                    " {} {} (R2 {})",
                    s["parameter"].as_str().unwrap_or("?"),
                    s["model"].as_str().unwrap_or("?"),
                    num(&s["r2"])
                );
            }
            if e["beta_a"].is_number() {
                let _ = write!(md, ", beta_A {}", num(&e["beta_a"]));
            }
            if e["b_infinity_extrapolated"].is_number() {
                let _ = write!(
                    md,
                    ", B_inf extrapolated {} direct {}",
                    num(&e["b_infinity_extrapolated"]),
                    num(&e["b_infinity_direct"])
                );
            }
            md.push('\n');
            list.push(e);
        }
        json.insert("sweeps".into(), list.into());
    }
    write_json(&output_dir.join("report.json"), &serde_json::Value::Object(json))?;
    let path = output_dir.join("report.md");
    write_atomic(&path, &md)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::SweepFailure;

    fn point(gamma: f64, a: f64, alpha: f64, b: f64) -> SweepPoint {
        SweepPoint {
            gamma,
            a,
            a_ci: (a, a),
            alpha,
            alpha_ci: (alpha, alpha),
            b,
            b_ci: (b, b),
            r2: 1.0,
            n_bins: 10,
            n_states: 1000,
            dropped_bins: 0,
        }
    }

    fn result(kind: ChannelKind, params: Vec<SweepPoint>) -> SweepResult {
        SweepResult {
            kind,
            measure: Measure::Concurrence,
            gammas: params.iter().map(|p| p.gamma).collect(),
            params,
            failures: Vec::<SweepFailure>::new(),
            n_sample: 1000,
            seed: 1,
        }
    }

    #[test]
    fn amplitude_damping_recovers_decay_rate() {
        let pts = (0..6).map(|i| {
            let g = i as f64 * 0.1;
            point(g, 0.7 * (-1.2 * g).exp(), 2.3 - g, 0.2 + 0.1 * g)
        });
        let evo = fit_evolution(&result(ChannelKind::AmplitudeDamping, pts.collect()));
        assert!((evo.beta_a.unwrap() - 1.2).abs() < 1e-6);
        assert_eq!(evo.selected_for("B").unwrap().model, ModelKind::Linear);
        assert!((evo.max_relative_drift[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn depolarizing_extrapolates_b() {
        let pts = (0..7).map(|i| {
            let g = i as f64 * 0.05;
            point(g, 0.75 * (1.0 - g), 2.3, 0.19 * (1.0 - g) + 0.01 * g)
        });
        let evo = fit_evolution(&result(ChannelKind::Depolarizing, pts.collect()));
        assert!((evo.b_infinity_extrapolated.unwrap() - 0.01).abs() < 1e-9);
        assert_eq!(evo.b_infinity_direct, Some(0.0));
        assert!(evo.selected_for("A").unwrap().r2 > 0.999_999);
    }

    #[test]
    fn phase_damping_picks_by_aic() {
        let noise = [0.003, -0.002, 0.001, -0.004, 0.002, 0.0];
        let pts = (0..6).map(|i| {
            let g = i as f64 * 0.1;
            point(g, 0.75 + noise[i], 2.3 + 2.0 * g, 0.19 - noise[i])
        });
        let evo = fit_evolution(&result(ChannelKind::PhaseDamping, pts.collect()));
        assert_eq!(evo.fits_for("A").count(), 4);
        let best = evo.fits_for("alpha").min_by(|a, b| a.aic.total_cmp(&b.aic)).unwrap();
        assert_eq!(evo.selected_for("alpha").unwrap(), best);
        assert_ne!(best.model, ModelKind::Constant);
    }

    #[test]
    fn baseline_is_separable_and_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { output_dir: dir.path().to_path_buf(), ..Default::default() };
        let b = run_separable_baseline(&cfg, 100, 1).unwrap();
        assert!(b.max_negativity <= 1e-10);
        assert!(b.min >= 0.0 && b.max <= 1.0);
        assert!(dir.path().join("separable_baseline.json").exists());
        assert!(run_separable_baseline(&cfg, 10, 1).is_err());
        let report = write_report(dir.path()).unwrap();
        assert!(fs::read_to_string(report).unwrap().contains("Separable baseline"));
    }
}

use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{stage, with_workers, write_atomic, write_json, Binning, ExperimentConfig, PipelineError, Result};
use crate::entanglement::Measure;
use crate::seed::derive_labeled;
use crate::states::{fmt_f64, EnsembleRecord};
use crate::stats::{
    bin_series, bin_with_edges, bootstrap_fit_many, boundary_extract, comparison_csv, fd_bin_count, fit_model,
    fit_model_or_best, kfold_cv, mean, pearson, r_squared, std_dev, train_test_split, BinnedSeries, BootstrapSummary,
    ComparisonRow, FitResult, ModelKind, Rebin, SparseBins,
};

/// Measures with fewer usable points than this are left out of the bundle.
pub const MIN_ANALYSIS_POINTS: usize = 50;
/// Fewer surviving bins than this (full or training set) skips the measure;
/// two-fold CV then still leaves five bins per cubic fit.
pub const MIN_ANALYSIS_BINS: usize = 10;

/// Bin counts whose fitted parameters are compared for robustness.
pub const ROBUSTNESS_CORE: [usize; 3] = [20, 25, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEntry {
    pub model: ModelKind,
    pub summary: Option<BootstrapSummary>,
    pub error: Option<String>,
    /// Two-sided p-value for B = 0 (exponential saturation only).
    pub b_zero_p_value: Option<f64>,
    pub b_zero_empirical_p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub n_bins: usize,
    pub n_bins_used: usize,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureAnalysis {
    pub measure: Measure,
    pub n_points: usize,
    pub n_bins_requested: usize,
    pub min_occupancy: usize,
    pub n_bins: usize,
    pub pearson: f64,
    pub cv_folds: usize,
    /// Weighted fits of every comparison model on all binned data.
    pub full_fits: Vec<FitResult>,
    /// The same fits on bins of the training split.
    pub train_fits: Vec<FitResult>,
    pub table: Vec<ComparisonRow>,
    pub table_raw: Vec<ComparisonRow>,
    pub bootstrap: Vec<BootstrapEntry>,
    pub boundary_upper: FitResult,
    pub boundary_lower: FitResult,
    pub robustness: Vec<RobustnessRow>,
    /// (max − min)/|mean| of A, α and B over [`ROBUSTNESS_CORE`].
    pub robustness_rel_spread: [f64; 3],
}

impl MeasureAnalysis {
    pub fn full_fit(&self, model: ModelKind) -> Option<&FitResult> {
        self.full_fits.iter().find(|f| f.model == model)
    }

    pub fn train_fit(&self, model: ModelKind) -> Option<&FitResult> {
        self.train_fits.iter().find(|f| f.model == model)
    }

    pub fn bootstrap_for(&self, model: ModelKind) -> Option<&BootstrapSummary> {
        self.bootstrap.iter().find(|b| b.model == model)?.summary.as_ref()
    }

    pub fn row(&self, model: ModelKind) -> Option<&ComparisonRow> {
        self.table.iter().find(|r| r.model == model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BOverlap {
    pub a: Measure,
    pub b: Measure,
    pub overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_states: usize,
    pub purity_mean: f64,
    pub purity_std: f64,
    pub mqfi_norm_mean: f64,
    pub pearson_concurrence_mqfi: f64,
    pub pearson_negativity_mqfi: f64,
    /// Over the REE subsample.
    pub pearson_ree_mqfi: Option<f64>,
    pub n_ree: usize,
    pub pearson_concurrence_negativity: f64,
    pub b_ci_overlaps: Vec<BOverlap>,
    pub skipped_measures: Vec<Measure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub summary: EnsembleSummary,
    pub measures: Vec<MeasureAnalysis>,
}

impl AnalysisReport {
    pub fn measure(&self, m: Measure) -> Option<&MeasureAnalysis> {
        self.measures.iter().find(|a| a.measure == m)
    }
}

fn column(records: &[EnsembleRecord], m: Measure) -> (Vec<u64>, Vec<f64>, Vec<f64>) {
    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in records {
        let v = match m {
            Measure::Concurrence => Some(r.concurrence),
            Measure::Negativity => Some(r.negativity),
            Measure::Ree => r.ree,
        };
        if let Some(v) = v {
            ids.push(r.state_id);
            x.push(v);
            y.push(r.mqfi_norm);
        }
    }
    (ids, x, y)
}

/// Occupancy floor, relaxed for small samples so that a typical bin can
/// still meet it.
fn effective_min_occupancy(configured: usize, n: usize, n_bins: usize) -> usize {
    configured.min((n / (2 * n_bins)).max(5))
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn comparison_rows(
    models: &[ModelKind],
    train: (&[f64], &[f64], Option<&[f64]>),
    test: (&[f64], &[f64], Option<&[f64]>),
    folds: usize,
    fold_seed: u64,
) -> std::result::Result<(Vec<FitResult>, Vec<ComparisonRow>), (ModelKind, crate::stats::StatsError)> {
    let mut fits = Vec::new();
    let mut rows = Vec::new();
    for &model in models {
        let mut fit = fit_model_or_best(model, train.0, train.1, train.2).map_err(|e| (model, e))?;
        let cv = kfold_cv(model, train.0, train.1, train.2, folds, fold_seed).map_err(|e| (model, e))?;
        fit.r2_cv = Some(cv);
        let test_w = test.2.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; test.0.len()]);
        let r2_test = r_squared(model, &fit.params, test.0, test.1, &test_w, None);
        rows.push(ComparisonRow {
            model,
            n_params: model.arity(),
            r2_train: fit.r2,
            r2_cv: cv,
            aic: fit.aic,
            bic: fit.bic,
            r2_test,
        });
        fits.push(fit);
    }
    Ok((fits, rows))
}

fn analyze_measure(
    config: &ExperimentConfig,
    measure: Measure,
    ids: &[u64],
    x: &[f64],
    y: &[f64],
    dir: &Path,
) -> Result<Option<MeasureAnalysis>> {
    let ctx = |what: &str| format!("{measure}: {what}");
    let n = x.len();
    let n_bins_requested = match config.binning {
        Binning::AutoFd => fd_bin_count(x).map_err(stage(ctx("bin count")))?,
        Binning::Fixed(k) => k,
    };
    let min_occ = effective_min_occupancy(config.min_bin_occupancy, n, n_bins_requested);
    let bins = bin_series(x, y, n_bins_requested, min_occ).map_err(stage(ctx("binning")))?;
    if bins.bins.len() < MIN_ANALYSIS_BINS {
        warn!("{measure}: {} bins after merging, skipping analysis", bins.bins.len());
        return Ok(None);
    }
    let models = ModelKind::COMPARISON;

    let mut full_fits = Vec::new();
    for model in models {
        let fit = fit_model_or_best(model, &bins.x(), &bins.y(), Some(&bins.weights()))
            .map_err(stage(ctx(&format!("full fit {model}"))))?;
        full_fits.push(fit);
    }

    // Split on states, bin the training part, bin the test part on the
    // training edges.
    let measure_index = Measure::ALL.iter().position(|&m| m == measure).unwrap_or(0) as u64;
    let (train_idx, test_idx) =
        train_test_split(n, config.test_fraction, derive_labeled(config.master_seed, "split", measure_index))
            .map_err(stage(ctx("split")))?;
    let (xtr, ytr) = (pick(x, &train_idx), pick(y, &train_idx));
    let (xte, yte) = (pick(x, &test_idx), pick(y, &test_idx));
    let train_occ = effective_min_occupancy(config.min_bin_occupancy, xtr.len(), n_bins_requested);
    let train_bins = bin_series(&xtr, &ytr, n_bins_requested, train_occ).map_err(stage(ctx("train binning")))?;
    if train_bins.bins.len() < MIN_ANALYSIS_BINS {
        warn!("{measure}: {} training bins after merging, skipping analysis", train_bins.bins.len());
        return Ok(None);
    }
    let test_bins = bin_with_edges(&xte, &yte, &train_bins.edges).map_err(stage(ctx("test binning")))?;
    let folds = config.cv_folds.min(train_bins.bins.len() / 2).max(2);
    if folds < config.cv_folds {
        warn!("{measure}: {} training bins, using {folds}-fold CV", train_bins.bins.len());
    }
    let fold_seed = derive_labeled(config.master_seed, "cv", measure_index);
    let (trx, try_, trw) = (train_bins.x(), train_bins.y(), train_bins.weights());
    let (tex, tey, tew) = (test_bins.x(), test_bins.y(), test_bins.weights());
    let (train_fits, table) =
        comparison_rows(&models, (&trx, &try_, Some(&trw)), (&tex, &tey, Some(&tew)), folds, fold_seed).map_err(
            |(m, e)| PipelineError::Stage { context: ctx(&format!("binned table {m}")), message: e.to_string() },
        )?;
    let (_, table_raw) =
        comparison_rows(&models, (&xtr, &ytr, None), (&xte, &yte, None), config.cv_folds, fold_seed).map_err(
            |(m, e)| PipelineError::Stage { context: ctx(&format!("raw table {m}")), message: e.to_string() },
        )?;

    let rebin = Rebin { n_bins: n_bins_requested, min_occupancy: min_occ, sparse: SparseBins::Merge };
    let boot = bootstrap_fit_many(
        &models,
        x,
        y,
        config.bootstrap_n,
        derive_labeled(config.master_seed, "analysis-bootstrap", measure_index),
        Some(rebin),
    )
    .map_err(stage(ctx("bootstrap")))?;
    let bootstrap: Vec<BootstrapEntry> = models
        .iter()
        .zip(boot)
        .map(|(&model, r)| {
            let is_exp = model == ModelKind::ExponentialSaturation;
            match r {
                Ok(s) => BootstrapEntry {
                    model,
                    b_zero_p_value: if is_exp { s.zero_p_value("B") } else { None },
                    b_zero_empirical_p_value: if is_exp { s.zero_empirical_p_value("B") } else { None },
                    summary: Some(s),
                    error: None,
                },
                Err(e) => {
                    warn!("{measure}: bootstrap {model}: {e}");
                    BootstrapEntry {
                        model,
                        summary: None,
                        error: Some(e.to_string()),
                        b_zero_p_value: None,
                        b_zero_empirical_p_value: None,
                    }
                }
            }
        })
        .collect();
    for fit in full_fits.iter_mut() {
        if let Some(Some(s)) = bootstrap.iter().find(|b| b.model == fit.model).map(|b| b.summary.as_ref()) {
            fit.param_cis = Some(s.cis());
        }
    }

    let (upper, lower) = boundary_extract(x, y, n_bins_requested).map_err(stage(ctx("boundaries")))?;
    let fit_boundary = |pts: &[(f64, f64)], which: &str| {
        let bx: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let by: Vec<f64> = pts.iter().map(|p| p.1).collect();
        fit_model(ModelKind::Quadratic, &bx, &by, None).map_err(stage(ctx(&format!("{which} boundary fit"))))
    };
    let boundary_upper = fit_boundary(&upper, "upper")?;
    let boundary_lower = fit_boundary(&lower, "lower")?;

    let mut robustness = Vec::new();
    for &nb in &config.bin_robustness {
        let occ = effective_min_occupancy(config.min_bin_occupancy, n, nb);
        let s = bin_series(x, y, nb, occ).map_err(stage(ctx(&format!("robustness binning {nb}"))))?;
        let f = fit_model_or_best(ModelKind::ExponentialSaturation, &s.x(), &s.y(), Some(&s.weights()))
            .map_err(stage(ctx(&format!("robustness fit {nb}"))))?;
        robustness.push(RobustnessRow {
            n_bins: nb,
            n_bins_used: s.bins.len(),
            a: f.params[0],
            alpha: f.params[1],
            b: f.params[2],
            r2: f.r2,
        });
    }
    let robustness_rel_spread = relative_spread(&robustness);

    let analysis = MeasureAnalysis {
        measure,
        n_points: n,
        n_bins_requested,
        min_occupancy: min_occ,
        n_bins: bins.bins.len(),
        pearson: pearson(x, y).map_err(stage(ctx("pearson")))?,
        cv_folds: folds,
        full_fits,
        train_fits,
        table,
        table_raw,
        bootstrap,
        boundary_upper,
        boundary_lower,
        robustness,
        robustness_rel_spread,
    };
    write_measure(&analysis, dir, ids, x, y, &bins, &upper, &lower)?;
    Ok(Some(analysis))
}

fn relative_spread(rows: &[RobustnessRow]) -> [f64; 3] {
    let core: Vec<&RobustnessRow> = rows.iter().filter(|r| ROBUSTNESS_CORE.contains(&r.n_bins)).collect();
    let mut out = [f64::NAN; 3];
    if core.len() < 2 {
        return out;
    }
    let getters: [fn(&RobustnessRow) -> f64; 3] = [|r| r.a, |r| r.alpha, |r| r.b];
    for (k, g) in getters.iter().enumerate() {
        let v: Vec<f64> = core.iter().map(|r| g(r)).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        out[k] = (hi - lo) / mean(&v).abs();
    }
    out
}

#[derive(Serialize)]
struct Fits<'a> {
    full: &'a [FitResult],
    train: &'a [FitResult],
}

#[derive(Serialize)]
struct BoundaryFits<'a> {
    upper: &'a FitResult,
    lower: &'a FitResult,
}

#[derive(Serialize)]
struct MeasureSummary<'a> {
    measure: Measure,
    n_points: usize,
    n_bins: usize,
    min_occupancy: usize,
    pearson: f64,
    exponential: Option<&'a FitResult>,
    exponential_bootstrap: Option<&'a BootstrapSummary>,
    b_zero_p_value: Option<f64>,
    b_zero_empirical_p_value: Option<f64>,
    cubic: Option<&'a ComparisonRow>,
    upper_boundary_r2: f64,
    lower_boundary_r2: f64,
    robustness_rel_spread: [f64; 3],
}

#[allow(clippy::too_many_arguments)]
fn write_measure(
    a: &MeasureAnalysis,
    dir: &Path,
    ids: &[u64],
    x: &[f64],
    y: &[f64],
    bins: &BinnedSeries,
    upper: &[(f64, f64)],
    lower: &[(f64, f64)],
) -> Result<()> {
    let mut scatter = format!("state_id,{},mqfi_norm\n", a.measure);
    for i in 0..x.len() {
        scatter.push_str(&format!("{},{},{}\n", ids[i], fmt_f64(x[i]), fmt_f64(y[i])));
    }
    write_atomic(&dir.join("scatter.csv"), &scatter)?;
    write_atomic(&dir.join("bins.csv"), &bins.to_csv())?;
    write_json(&dir.join("fits.json"), &Fits { full: &a.full_fits, train: &a.train_fits })?;
    write_json(&dir.join("bootstrap.json"), &a.bootstrap)?;
    let mut bcsv = String::from("x_center,upper,lower\n");
    for (u, l) in upper.iter().zip(lower) {
        bcsv.push_str(&format!("{},{},{}\n", fmt_f64(u.0), fmt_f64(u.1), fmt_f64(l.1)));
    }
    write_atomic(&dir.join("boundaries.csv"), &bcsv)?;
    write_json(&dir.join("boundary_fits.json"), &BoundaryFits { upper: &a.boundary_upper, lower: &a.boundary_lower })?;
    write_atomic(&dir.join("table1.csv"), &comparison_csv(&a.table))?;
    write_atomic(&dir.join("table1_raw.csv"), &comparison_csv(&a.table_raw))?;
    write_json(&dir.join("bin_robustness.json"), &a.robustness)?;
    let exp = ModelKind::ExponentialSaturation;
    let entry = a.bootstrap.iter().find(|b| b.model == exp);
    write_json(
        &dir.join("summary.json"),
        &MeasureSummary {
            measure: a.measure,
            n_points: a.n_points,
            n_bins: a.n_bins,
            min_occupancy: a.min_occupancy,
            pearson: a.pearson,
            exponential: a.full_fit(exp),
            exponential_bootstrap: a.bootstrap_for(exp),
            b_zero_p_value: entry.and_then(|e| e.b_zero_p_value),
            b_zero_empirical_p_value: entry.and_then(|e| e.b_zero_empirical_p_value),
            cubic: a.row(ModelKind::Cubic),
            upper_boundary_r2: a.boundary_upper.r2,
            lower_boundary_r2: a.boundary_lower.r2,
            robustness_rel_spread: a.robustness_rel_spread,
        },
    )
}

fn ensemble_summary(
    records: &[EnsembleRecord],
    measures: &[MeasureAnalysis],
    skipped: Vec<Measure>,
) -> Result<EnsembleSummary> {
    let purity: Vec<f64> = records.iter().map(|r| r.purity).collect();
    let c: Vec<f64> = records.iter().map(|r| r.concurrence).collect();
    let nn: Vec<f64> = records.iter().map(|r| r.negativity).collect();
    let m: Vec<f64> = records.iter().map(|r| r.mqfi_norm).collect();
    let (_, rx, ry) = column(records, Measure::Ree);
    let p = |a: &[f64], b: &[f64], what: &str| pearson(a, b).map_err(stage(format!("summary: {what}")));
    let mut overlaps = Vec::new();
    let ci_b = |a: &MeasureAnalysis| {
        a.bootstrap_for(ModelKind::ExponentialSaturation).and_then(|s| s.param("B")).map(|p| (p.ci_low, p.ci_high))
    };
    for i in 0..measures.len() {
        for j in i + 1..measures.len() {
            if let (Some(u), Some(v)) = (ci_b(&measures[i]), ci_b(&measures[j])) {
                overlaps.push(BOverlap {
                    a: measures[i].measure,
                    b: measures[j].measure,
                    overlap: u.0 <= v.1 && v.0 <= u.1,
                });
            }
        }
    }
    Ok(EnsembleSummary {
        n_states: records.len(),
        purity_mean: mean(&purity),
        purity_std: std_dev(&purity),
        mqfi_norm_mean: mean(&m),
        pearson_concurrence_mqfi: p(&c, &m, "concurrence")?,
        pearson_negativity_mqfi: p(&nn, &m, "negativity")?,
        pearson_ree_mqfi: if rx.len() >= 3 { Some(p(&rx, &ry, "ree")?) } else { None },
        n_ree: rx.len(),
        pearson_concurrence_negativity: p(&c, &nn, "concurrence vs negativity")?,
        b_ci_overlaps: overlaps,
        skipped_measures: skipped,
    })
}

/// Builds the analysis bundle under `output_dir/analysis` from an ensemble CSV.
pub fn run_analysis(ensemble_csv: &Path, config: &ExperimentConfig, workers: usize) -> Result<AnalysisReport> {
    let records = super::read_ensemble_csv(ensemble_csv)?;
    if records.len() < 3 {
        return Err(PipelineError::Stage {
            context: ensemble_csv.display().to_string(),
            message: format!("only {} records", records.len()),
        });
    }
    let root = config.output_dir.join("analysis");
    fs::create_dir_all(&root).map_err(super::io_err(&root))?;
    with_workers(workers, || {
        let mut measures = Vec::new();
        let mut skipped = Vec::new();
        for m in Measure::ALL {
            let (ids, x, y) = column(&records, m);
            if x.len() < MIN_ANALYSIS_POINTS {
                warn!("{m}: {} points, skipping analysis", x.len());
                skipped.push(m);
                continue;
            }
            info!("analyzing {m} on {} points", x.len());
            match analyze_measure(config, m, &ids, &x, &y, &root.join(m.name()))? {
                Some(a) => measures.push(a),
                None => skipped.push(m),
            }
        }
        let summary = ensemble_summary(&records, &measures, skipped)?;
        write_json(&root.join("summary.json"), &summary)?;
        Ok(AnalysisReport { summary, measures })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{run_ensemble, ReeSubsample};

    #[test]
    fn occupancy_floor_relaxes_for_small_samples() {
        assert_eq!(effective_min_occupancy(100, 20_000, 25), 100);
        assert_eq!(effective_min_occupancy(100, 500, 10), 25);
        assert_eq!(effective_min_occupancy(100, 60, 10), 5);
    }

    #[test]
    fn relative_spread_uses_core_bin_counts() {
        let row = |n, a| RobustnessRow { n_bins: n, n_bins_used: n, a, alpha: 2.0, b: 0.2, r2: 1.0 };
        let s = relative_spread(&[row(15, 100.0), row(20, 1.0), row(25, 1.1), row(30, 0.9)]);
        assert!((s[0] - 0.2).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn small_bundle_is_cross_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            n_states: 2000,
            ree_subsample: ReeSubsample::Count(0),
            bootstrap_n: 40,
            output_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        run_ensemble(&cfg, 1, false).unwrap();
        let report = run_analysis(&cfg.ensemble_path(), &cfg, 1).unwrap();
        assert_eq!(report.summary.skipped_measures, vec![Measure::Ree]);
        assert_eq!(report.measures.len(), 2);

        let base = dir.path().join("analysis/concurrence");
        for f in [
            "scatter.csv",
            "bins.csv",
            "fits.json",
            "bootstrap.json",
            "boundaries.csv",
            "table1.csv",
            "bin_robustness.json",
        ] {
            assert!(base.join(f).exists(), "{f}");
        }
        let fits: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(base.join("fits.json")).unwrap()).unwrap();
        let table = fs::read_to_string(base.join("table1.csv")).unwrap();
        for (row, fit) in table.lines().skip(1).zip(fits["train"].as_array().unwrap()) {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols[0], fit["model"].as_str().unwrap());
            let r2: f64 = cols[2].parse().unwrap();
            assert_eq!(r2, fit["r2"].as_f64().unwrap());
            let cv: f64 = cols[3].parse().unwrap();
            assert_eq!(cv, fit["r2_cv"].as_f64().unwrap());
        }
    }

    #[test]
    fn missing_input_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { output_dir: dir.path().to_path_buf(), ..Default::default() };
        let err = run_analysis(&dir.path().join("absent.csv"), &cfg, 1).unwrap_err().to_string();
        assert!(err.contains("absent.csv"), "{err}");
    }
}

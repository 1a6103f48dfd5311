//! Acceptance criteria 1-17. Each test prints one PASS/FAIL line to stderr
//! (uncaptured) and then asserts.
//!
//! The quantitative criteria share one full-size run (20000 states, REE on a
//! 500-state stratified subsample, 1000 bootstrap resamples, the default
//! sweeps and a 1000-state separable baseline), built once per process.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use qmetro::channels::{
    completeness_residual, single_qubit_kraus, two_qubit_kraus, ChannelKind, ChannelSpec, SweepResult,
};
use qmetro::entanglement::{concurrence, negativity, Measure};
use qmetro::linalg::C64;
use qmetro::metrology::{
    diagonal_pauli_generators, mqfi, pauli_product_generator, qfi, verify_generator_independence, Axis, MqfiConfig,
};
use qmetro::pipeline::{
    run_analysis, run_ensemble, run_separable_baseline, run_sweeps, AnalysisReport, EnsembleRun, ExperimentConfig,
    SeparableBaseline, SweepEvolution,
};
use qmetro::seed::{derive_labeled, derive_seed, rng_from_seed};
use qmetro::states::{bell_state, gen_hs_random, purity, validate_with_tol, werner, DensityMatrix};
use qmetro::stats::{aic, bic, bootstrap_fit, fit_model, kfold_cv, ModelKind};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const SEED: u64 = 42;

struct FullRun {
    _dir: tempfile::TempDir,
    ensemble: EnsembleRun,
    analysis: AnalysisReport,
    baseline: SeparableBaseline,
    sweeps: Vec<(SweepResult, SweepEvolution)>,
}

fn full_run() -> &'static FullRun {
    static RUN: OnceLock<FullRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let config = ExperimentConfig { master_seed: SEED, output_dir: dir.path().to_path_buf(), ..Default::default() };
        let workers = config.workers.resolve();
        let ensemble = run_ensemble(&config, workers, false).expect("ensemble");
        let analysis = run_analysis(&config.ensemble_path(), &config, workers).expect("analysis");
        let baseline = run_separable_baseline(&config, 1000, workers).expect("separable baseline");
        let sweeps = run_sweeps(&config, workers).expect("sweeps");
        FullRun { _dir: dir, ensemble, analysis, baseline, sweeps }
    })
}

fn report(n: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!("criterion {n:>2} {}: {name}: {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} ({name}) failed: {}", detail.as_ref());
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn sweep(kind: ChannelKind) -> &'static (SweepResult, SweepEvolution) {
    full_run().sweeps.iter().find(|(r, _)| r.kind == kind && r.measure == Measure::Concurrence).expect("sweep")
}

#[test]
fn criterion_01_ensemble_purity() {
    let start = Instant::now();
    let p: Vec<f64> = (0..20_000).map(|i| purity(&gen_hs_random(derive_seed(SEED, i)).unwrap())).collect();
    let elapsed = start.elapsed();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let pipeline_mean = full_run().analysis.summary.purity_mean;
    report(
        1,
        "mean purity in [0.50, 0.54], generation under 1 min",
        within(pipeline_mean, 0.50, 0.54) && elapsed < Duration::from_secs(60),
        format!("mean {pipeline_mean:.4} (direct {mean:.4}), generation {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_correlations() {
    let s = &full_run().analysis.summary;
    let r_ree = s.pearson_ree_mqfi.unwrap_or(f64::NAN);
    report(
        2,
        "Pearson with MQFI: C in [0.93, 0.97], N in [0.92, 0.96], REE in [0.83, 0.93]",
        within(s.pearson_concurrence_mqfi, 0.93, 0.97)
            && within(s.pearson_negativity_mqfi, 0.92, 0.96)
            && within(r_ree, 0.83, 0.93),
        format!(
            "C {:.4}, N {:.4}, REE {:.4} on {} states",
            s.pearson_concurrence_mqfi, s.pearson_negativity_mqfi, r_ree, s.n_ree
        ),
    );
}

#[test]
fn criterion_03_cubic_binned_fit() {
    let a = full_run().analysis.measure(Measure::Concurrence).expect("concurrence analysis");
    let row = a.row(ModelKind::Cubic).expect("cubic row");
    report(
        3,
        "cubic R2_train >= 0.995 and |R2_train - R2_CV| <= 0.005",
        row.r2_train >= 0.995 && (row.r2_train - row.r2_cv).abs() <= 0.005,
        format!("R2_train {:.5}, R2_CV {:.5}, {} bins", row.r2_train, row.r2_cv, a.n_bins),
    );
}

#[test]
fn criterion_04_exponential_saturation() {
    const REFERENCE_B_CI: (f64, f64) = (0.164, 0.211);
    let a = full_run().analysis.measure(Measure::Concurrence).expect("concurrence analysis");
    let fit = a.full_fit(ModelKind::ExponentialSaturation).expect("exponential fit");
    let (big_a, alpha, b) = (fit.params[0], fit.params[1], fit.params[2]);
    let b_ci = a
        .bootstrap_for(ModelKind::ExponentialSaturation)
        .and_then(|s| s.param("B"))
        .map(|p| (p.ci_low, p.ci_high))
        .unwrap_or((f64::NAN, f64::NAN));
    let overlap = b_ci.0 <= REFERENCE_B_CI.1 && REFERENCE_B_CI.0 <= b_ci.1;
    report(
        4,
        "A in [0.70, 0.81], alpha in [2.0, 2.7], B in [0.15, 0.22], B CI overlaps [0.164, 0.211]",
        within(big_a, 0.70, 0.81) && within(alpha, 2.0, 2.7) && within(b, 0.15, 0.22) && overlap,
        format!("A {big_a:.4}, alpha {alpha:.4}, B {b:.4}, B CI [{:.4}, {:.4}]", b_ci.0, b_ci.1),
    );
}

#[test]
fn criterion_05_nonzero_baseline() {
    let run = full_run();
    let mut detail = Vec::new();
    let mut pass = true;
    for m in Measure::ALL {
        let p = run
            .analysis
            .measure(m)
            .and_then(|a| a.bootstrap.iter().find(|b| b.model == ModelKind::ExponentialSaturation))
            .and_then(|b| b.b_zero_p_value)
            .unwrap_or(f64::NAN);
        pass &= p < 1e-3;
        detail.push(format!("{m} p = {p:.2e}"));
    }
    report(5, "bootstrap test of B = 0 rejects at p < 0.001 for every measure", pass, detail.join(", "));
}

#[test]
fn criterion_06_separable_baseline() {
    let b = &full_run().baseline;
    report(
        6,
        "separable mixtures: mean MQFI/4 in [0.14, 0.24]",
        within(b.mean, 0.14, 0.24) && b.max_negativity <= 1e-10,
        format!(
            "n {}, mean {:.4}, median {:.4}, std {:.4}, max negativity {:.1e}",
            b.n, b.mean, b.median, b.std, b.max_negativity
        ),
    );
}

#[test]
fn criterion_07_amplitude_damping_sweep() {
    let (result, evo) = sweep(ChannelKind::AmplitudeDamping);
    let beta = evo.beta_a.unwrap_or(f64::NAN);
    let r2 = evo.selected_for("A").map(|f| f.r2).unwrap_or(f64::NAN);
    report(
        7,
        "amplitude damping: beta_A in [0.9, 1.6], exponential A(gamma) R2 >= 0.95",
        result.n_sample >= 1000 && within(beta, 0.9, 1.6) && r2 >= 0.95,
        format!(
            "beta_A {beta:.4}, R2 {r2:.4}, {} of {} gammas fitted, n_sample {}",
            result.params.len(),
            result.gammas.len(),
            result.n_sample
        ),
    );
}

#[test]
fn criterion_08_phase_damping_sweep() {
    let (result, evo) = sweep(ChannelKind::PhaseDamping);
    let covers = result.failures.is_empty() && result.params.last().map(|p| p.gamma) == Some(0.5);
    let drift = evo.max_relative_drift;
    let drift_ok = drift.iter().all(|d| *d < 0.10);
    let winners: Vec<String> = ["A", "alpha", "B"]
        .iter()
        .map(|p| format!("{p}: {}", evo.selected_for(p).map(|f| f.model.name()).unwrap_or("none")))
        .collect();
    let constant_wins =
        ["A", "alpha", "B"].iter().all(|p| evo.selected_for(p).map(|f| f.model) == Some(ModelKind::Constant));
    report(
        8,
        "phase damping: drift < 10% over gamma in [0, 0.5], constant model wins AIC",
        covers && drift_ok && constant_wins,
        format!(
            "{} of {} gammas fitted, drift A {:.3} alpha {:.3} B {:.3}, AIC winners {}",
            result.params.len(),
            result.gammas.len(),
            drift[0],
            drift[1],
            drift[2],
            winners.join(", ")
        ),
    );
}

#[test]
fn criterion_09_depolarizing_sweep() {
    let (result, evo) = sweep(ChannelKind::Depolarizing);
    let r2 = evo.selected_for("A").map(|f| f.r2).unwrap_or(f64::NAN);
    report(
        9,
        "depolarizing: linear A(gamma) R2 >= 0.995",
        result.params.len() >= 3 && r2 >= 0.995,
        format!(
            "R2 {r2:.5}, {} of {} gammas fitted, B(1) extrapolated {:?}, MQFI/4 of I/4 {:?}",
            result.params.len(),
            result.gammas.len(),
            evo.b_infinity_extrapolated,
            evo.b_infinity_direct
        ),
    );
}

#[test]
fn criterion_10_generator_independence() {
    let gens = diagonal_pauli_generators();
    let cfg = MqfiConfig::default();
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let rho = gen_hs_random(derive_labeled(SEED, "acceptance-independence", i)).unwrap();
        worst = worst.max(verify_generator_independence(&rho, &gens, &cfg, i).unwrap());
    }
    report(10, "MQFI spread over XX, YY, ZZ <= 1e-3 on 50 states", worst <= 1e-3, format!("max spread {worst:.2e}"));
}

#[test]
fn criterion_11_bin_count_robustness() {
    let run = full_run();
    let mut pass = true;
    let mut detail = Vec::new();
    for a in &run.analysis.measures {
        let s = a.robustness_rel_spread;
        if a.measure == Measure::Concurrence {
            pass &= s.iter().all(|v| *v < 0.05);
        }
        detail.push(format!("{}: A {:.3} alpha {:.3} B {:.3}", a.measure, s[0], s[1], s[2]));
    }
    report(11, "concurrence (A, alpha, B) vary < 5% across 20, 25, 30 bins", pass, detail.join("; "));
}

#[test]
fn criterion_12_upper_boundary() {
    let a = full_run().analysis.measure(Measure::Concurrence).expect("concurrence analysis");
    let r2 = a.boundary_upper.r2;
    report(
        12,
        "upper-boundary quadratic R2 >= 0.98",
        r2 >= 0.98,
        format!("R2 {r2:.4}, lower R2 {:.4}", a.boundary_lower.r2),
    );
}

fn amplitudes(seed: u64) -> [C64; 4] {
    let mut rng = rng_from_seed(seed);
    let mut a = [C64::new(0.0, 0.0); 4];
    for v in a.iter_mut() {
        *v = C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
    }
    let n = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    a.map(|v| v / n)
}

#[test]
fn criterion_13_analytic_anchors() {
    let bell = bell_state();
    let bell_dev = (concurrence(&bell).unwrap() - 1.0).abs().max((negativity(&bell).unwrap() - 0.5).abs());
    let mut pure_dev: f64 = 0.0;
    for i in 0..200 {
        let a = amplitudes(derive_labeled(SEED, "acceptance-pure", i));
        let c = concurrence(&DensityMatrix::pure(&a).unwrap()).unwrap();
        pure_dev = pure_dev.max((c - 2.0 * (a[0] * a[3] - a[1] * a[2]).norm()).abs());
    }
    let mut werner_dev: f64 = 0.0;
    for i in 0..50 {
        let p = i as f64 / 49.0;
        let rho = werner(p).unwrap();
        let c = ((3.0 * p - 1.0) / 2.0).max(0.0);
        werner_dev = werner_dev.max((concurrence(&rho).unwrap() - c).abs());
        werner_dev = werner_dev.max((negativity(&rho).unwrap() - c / 2.0).abs());
    }
    report(
        13,
        "Bell 1e-9, pure-state concurrence 1e-8, Werner closed forms 1e-8",
        bell_dev <= 1e-9 && pure_dev <= 1e-8 && werner_dev <= 1e-8,
        format!("Bell {bell_dev:.1e}, pure {pure_dev:.1e}, Werner {werner_dev:.1e}"),
    );
}

#[test]
fn criterion_14_qfi_anchors() {
    let h = pauli_product_generator(Axis::Z, Axis::Z);
    let cfg = MqfiConfig::default();
    let mixed = qfi(&DensityMatrix::maximally_mixed(), &h).unwrap();
    let signs = [1.0, -1.0, -1.0, 1.0];
    let mut pure_dev: f64 = 0.0;
    for i in 0..100 {
        let a = amplitudes(derive_labeled(SEED, "acceptance-qfi", i));
        let m: f64 = a.iter().zip(signs).map(|(v, s)| v.norm_sqr() * s).sum();
        let q = qfi(&DensityMatrix::pure(&a).unwrap(), &h).unwrap();
        pure_dev = pure_dev.max((q - 4.0 * (1.0 - m * m)).abs());
    }
    let bell_dev = (mqfi(&bell_state(), &h, &cfg, 1).unwrap().value - 4.0).abs();
    let mut below = 0;
    for i in 0..200 {
        let rho = gen_hs_random(derive_labeled(SEED, "acceptance-mqfi", i)).unwrap();
        if mqfi(&rho, &h, &cfg, i).unwrap().value < qfi(&rho, &h).unwrap() {
            below += 1;
        }
    }
    report(
        14,
        "QFI(I/4) = 0, pure QFI = 4 Var 1e-8, MQFI(Bell) = 4 1e-4, MQFI >= identity QFI",
        mixed == 0.0 && pure_dev <= 1e-8 && bell_dev <= 1e-4 && below == 0,
        format!("QFI(I/4) {mixed:e}, pure {pure_dev:.1e}, Bell {bell_dev:.1e}, below identity {below}/200"),
    );
}

#[test]
fn criterion_15_cptp_suite() {
    let mut completeness: f64 = 0.0;
    for kind in [ChannelKind::AmplitudeDamping, ChannelKind::PhaseDamping] {
        for k in 0..=10 {
            let g = 0.05 * k as f64;
            completeness = completeness.max(completeness_residual(&single_qubit_kraus(kind, g).unwrap()));
            completeness = completeness.max(completeness_residual(&two_qubit_kraus(kind, g).unwrap()));
        }
    }
    let mut invalid = 0;
    let mut population: f64 = 0.0;
    let mut increase: f64 = 0.0;
    for i in 0..50 {
        let rho = gen_hs_random(derive_labeled(SEED, "acceptance-cptp", i)).unwrap();
        let (c0, n0) = (concurrence(&rho).unwrap(), negativity(&rho).unwrap());
        for kind in ChannelKind::ALL {
            for g in [0.0, 0.1, 0.25, 0.5] {
                let out = ChannelSpec::new(kind, g).unwrap().apply(&rho).unwrap();
                if !validate_with_tol(out.mat(), 1e-10).is_empty() {
                    invalid += 1;
                }
                if kind == ChannelKind::Depolarizing {
                    continue;
                }
                if kind == ChannelKind::PhaseDamping {
                    for k in 0..4 {
                        population = population.max((out.mat()[(k, k)] - rho.mat()[(k, k)]).norm());
                    }
                }
                increase = increase.max(concurrence(&out).unwrap() - c0).max(negativity(&out).unwrap() - n0);
            }
        }
    }
    report(
        15,
        "validity 1e-10, Kraus completeness 1e-12, populations 1e-14, local monotonicity 1e-8",
        invalid == 0 && completeness <= 1e-12 && population <= 1e-14 && increase <= 1e-8,
        format!(
            "invalid {invalid}, completeness {completeness:.1e}, populations {population:.1e}, max increase {increase:.1e}"
        ),
    );
}

#[test]
fn criterion_16_statistics_suite() {
    let mut interp: f64 = 0.0;
    for (model, d) in [(ModelKind::Linear, 1), (ModelKind::Quadratic, 2), (ModelKind::Cubic, 3)] {
        let x: Vec<f64> = (0..=d).map(|i| 0.3 * i as f64 - 0.2).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v - 2.0 * v * v + 0.5 * v.powi(3)).collect();
        // d + 1 points leave no residual degree of freedom, so fit through
        // one extra copy of the first point.
        let mut xs = x.clone();
        let mut ys = y.clone();
        xs.push(x[0]);
        ys.push(y[0]);
        if d == 3 {
            let f = fit_model(model, &xs, &ys, None).unwrap();
            interp = interp.max(f.rss);
        } else {
            let xl: Vec<f64> = (0..=d + 1).map(|i| i as f64).collect();
            let coeffs = [0.7, -1.1, 0.4];
            let yl: Vec<f64> = xl.iter().map(|v| (0..=d).map(|k| coeffs[k] * v.powi(k as i32)).sum()).collect();
            interp = interp.max(fit_model(model, &xl, &yl, None).unwrap().rss);
        }
    }
    let penalty_ok = aic(2.0, 30, 2) < aic(2.0, 30, 3) && bic(2.0, 30, 2) < bic(2.0, 30, 3);
    let x: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
    let line: Vec<f64> = x.iter().map(|v| 3.0 * v - 0.5).collect();
    let cv = kfold_cv(ModelKind::Linear, &x, &line, None, 5, 1).unwrap();

    let width = |n: usize| {
        let mut rng = rng_from_seed(derive_labeled(SEED, "acceptance-bootstrap", n as u64));
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                0.5 + 2.0 * v + {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    0.2 * e
                }
            })
            .collect();
        let b = bootstrap_fit(ModelKind::Linear, &x, &y, 400, 17, None).unwrap();
        let p = b.param("a1").unwrap();
        p.ci_high - p.ci_low
    };
    let ratio = width(2000) / width(1000);
    report(
        16,
        "polynomial interpolation, AIC/BIC penalty order, exact-line R2_CV = 1, CI width ratio 0.71 +- 0.15",
        interp <= 1e-16 * 1e4 && penalty_ok && (cv - 1.0).abs() <= 1e-12 && (ratio - 0.71).abs() <= 0.15,
        format!("max interpolation RSS {interp:.1e}, R2_CV {cv:.15}, CI width ratio {ratio:.3}"),
    );
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().and_then(|n| n.to_str()) != Some("manifest.json") {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_17_determinism_across_workers() {
    let toml = r#"
        master_seed = 9
        n_states = 1000
        ree_subsample = 40
        bootstrap_n = 100

        [[sweeps]]
        kind = "amplitude_damping"
        n_sample = 400
        gammas = [0.0, 0.2]
        bootstrap_n = 20
    "#;
    let mut outputs = Vec::new();
    for workers in [1, 8] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(toml).unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        run_ensemble(&cfg, workers, false).unwrap();
        run_analysis(&cfg.ensemble_path(), &cfg, workers).unwrap();
        run_sweeps(&cfg, workers).unwrap();
        run_separable_baseline(&cfg, 100, workers).unwrap();
        outputs.push(files_under(dir.path()));
    }
    let differing: Vec<String> = outputs[0]
        .iter()
        .filter(|(k, v)| outputs[1].get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_set = outputs[0].keys().eq(outputs[1].keys());
    report(
        17,
        "1 vs 8 workers give byte-identical outputs",
        same_set && differing.is_empty() && outputs[0].len() > 10,
        format!("{} files compared, differing: {:?}", outputs[0].len(), differing),
    );
}

#[test]
fn full_run_accounts_for_every_state() {
    let m = &full_run().ensemble.manifest;
    assert_eq!(m.completed + m.skipped + m.failed, m.n_states);
    assert_eq!(m.ree_requested, 500);
}

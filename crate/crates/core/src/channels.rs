//! Local decoherence channels and parameter sweeps.
//!
//! Amplitude and phase damping act on each qubit independently through
//! single-qubit Kraus sets. Depolarizing noise is the convex mixture
//! (1−γ)ρ + γI/4.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::{EntanglementError, Measure, ReeConfig};
use crate::linalg::{kron, CMat};
use crate::metrology::{mqfi, pauli_product_generator, Axis, MetrologyError, MqfiConfig};
use crate::seed::derive_labeled;
use crate::states::{gen_hs_random, DensityMatrix, StateError};
use crate::stats::{bin_series, bootstrap_fit, fd_bin_count, fit_model, ModelKind, Rebin, SparseBins, StatsError};

/// Tolerance for Σ K†K = I.
pub const KRAUS_COMPLETENESS_TOL: f64 = 1e-12;

/// Channel outputs are validated at this tolerance.
pub const OUTPUT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("{kind} strength {gamma} outside [0, {max}]")]
    RangeViolation { kind: ChannelKind, gamma: f64, max: f64 },
    #[error("Kraus set for {kind} at {gamma} fails completeness by {residual:e}")]
    Incomplete { kind: ChannelKind, gamma: f64, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Entanglement(#[from] EntanglementError),
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    AmplitudeDamping,
    PhaseDamping,
    Depolarizing,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] =
        [ChannelKind::AmplitudeDamping, ChannelKind::PhaseDamping, ChannelKind::Depolarizing];

    pub fn max_gamma(self) -> f64 {
        match self {
            ChannelKind::AmplitudeDamping | ChannelKind::PhaseDamping => 0.5,
            ChannelKind::Depolarizing => 0.75,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::AmplitudeDamping => "amplitude_damping",
            ChannelKind::PhaseDamping => "phase_damping",
            ChannelKind::Depolarizing => "depolarizing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A channel kind with a range-checked strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    kind: ChannelKind,
    gamma: f64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, gamma: f64) -> Result<Self> {
        if !(0.0..=kind.max_gamma()).contains(&gamma) {
            return Err(ChannelError::RangeViolation { kind, gamma, max: kind.max_gamma() });
        }
        Ok(Self { kind, gamma })
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        match self.kind {
            ChannelKind::AmplitudeDamping => amplitude_damping(rho, self.gamma),
            ChannelKind::PhaseDamping => phase_damping(rho, self.gamma),
            ChannelKind::Depolarizing => depolarizing(rho, self.gamma),
        }
    }
}

fn c(re: f64) -> crate::C64 {
    crate::C64::new(re, 0.0)
}

fn mat2(a: f64, b: f64, cc: f64, d: f64) -> CMat {
    CMat::from_row_major(&[c(a), c(b), c(cc), c(d)]).expect("2x2")
}

/// Single-qubit Kraus operators for the damping channels.
pub fn single_qubit_kraus(kind: ChannelKind, gamma: f64) -> Result<Vec<CMat>> {
    ChannelSpec::new(kind, gamma)?;
    let ops = match kind {
        ChannelKind::AmplitudeDamping => {
            vec![mat2(1.0, 0.0, 0.0, (1.0 - gamma).sqrt()), mat2(0.0, gamma.sqrt(), 0.0, 0.0)]
        }
        ChannelKind::PhaseDamping => vec![
            CMat::identity(2).scale((1.0 - gamma).sqrt()),
            mat2(gamma.sqrt(), 0.0, 0.0, 0.0),
            mat2(0.0, 0.0, 0.0, gamma.sqrt()),
        ],
        ChannelKind::Depolarizing => {
            return Err(ChannelError::InvalidArgument("depolarizing is defined as a convex mixture".into()))
        }
    };
    let residual = completeness_residual(&ops);
    if residual > KRAUS_COMPLETENESS_TOL {
        return Err(ChannelError::Incomplete { kind, gamma, residual });
    }
    Ok(ops)
}

/// The two-qubit Kraus set {K_i ⊗ K_j} of a local damping channel.
pub fn two_qubit_kraus(kind: ChannelKind, gamma: f64) -> Result<Vec<CMat>> {
    let ops = single_qubit_kraus(kind, gamma)?;
    let mut out = Vec::with_capacity(ops.len() * ops.len());
    for a in &ops {
        for b in &ops {
            out.push(kron(a, b).expect("2x2 factors"));
        }
    }
    Ok(out)
}

/// ‖Σ K†K − I‖_max.
pub fn completeness_residual(ops: &[CMat]) -> f64 {
    let dim = ops[0].dim();
    let mut sum = CMat::zeros(dim);
    for k in ops {
        sum = sum + k.adjoint() * *k;
    }
    sum.max_abs_diff(&CMat::identity(dim))
}

fn apply_kraus(rho: &CMat, ops: &[CMat]) -> CMat {
    let mut out = CMat::zeros(rho.dim());
    for k in ops {
        out = out + k.sandwich(rho);
    }
    out
}

/// Applies single-qubit Kraus sets to qubit A, then to qubit B.
fn apply_local(rho: &DensityMatrix, ops_a: &[CMat], ops_b: &[CMat]) -> Result<DensityMatrix> {
    let id = CMat::identity(2);
    let on_a: Vec<CMat> = ops_a.iter().map(|k| kron(k, &id).expect("2x2")).collect();
    let on_b: Vec<CMat> = ops_b.iter().map(|k| kron(&id, k).expect("2x2")).collect();
    let out = apply_kraus(&apply_kraus(rho.mat(), &on_a), &on_b).hermitian_part();
    Ok(DensityMatrix::with_tolerance(out, OUTPUT_TOL)?)
}

fn local_damping(kind: ChannelKind, rho: &DensityMatrix, gamma: f64) -> Result<DensityMatrix> {
    let ops = single_qubit_kraus(kind, gamma)?;
    if gamma == 0.0 {
        return Ok(*rho);
    }
    apply_local(rho, &ops, &ops)
}

/// Amplitude damping of strength γ ∈ [0, 0.5] on both qubits.
pub fn amplitude_damping(rho: &DensityMatrix, gamma: f64) -> Result<DensityMatrix> {
    local_damping(ChannelKind::AmplitudeDamping, rho, gamma)
}

/// Phase damping of strength γ ∈ [0, 0.5] on both qubits.
pub fn phase_damping(rho: &DensityMatrix, gamma: f64) -> Result<DensityMatrix> {
    local_damping(ChannelKind::PhaseDamping, rho, gamma)
}

/// (1−γ)ρ + γI/4 for γ ∈ [0, 0.75].
pub fn depolarizing(rho: &DensityMatrix, gamma: f64) -> Result<DensityMatrix> {
    ChannelSpec::new(ChannelKind::Depolarizing, gamma)?;
    if gamma == 0.0 {
        return Ok(*rho);
    }
    let out = rho.mat().scale(1.0 - gamma) + CMat::identity(4).scale(0.25 * gamma);
    Ok(DensityMatrix::with_tolerance(out, OUTPUT_TOL)?)
}

/// Inverts the depolarizing mixing: (P − γ·P_∞)/(1 − γ).
pub fn depolarizing_correction(p_measured: f64, gamma_eff: f64, p_infinity: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma_eff) {
        return Err(ChannelError::RangeViolation { kind: ChannelKind::Depolarizing, gamma: gamma_eff, max: 1.0 });
    }
    Ok((p_measured - gamma_eff * p_infinity) / (1.0 - gamma_eff))
}

// --- sweeps -------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub bootstrap_n: usize,
    /// Fixed bin count; when absent, the Freedman-Diaconis count at the
    /// first γ is used for every γ.
    pub n_bins: Option<usize>,
    pub min_bin_count: usize,
    pub mqfi: MqfiConfig,
    pub ree: ReeConfig,
    /// REE sweeps stop at this γ.
    pub ree_max_gamma: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            bootstrap_n: 100,
            n_bins: None,
            min_bin_count: 30,
            mqfi: MqfiConfig::default(),
            ree: ReeConfig::default(),
            ree_max_gamma: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "A_ci")]
    pub a_ci: (f64, f64),
    pub alpha: f64,
    pub alpha_ci: (f64, f64),
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "B_ci")]
    pub b_ci: (f64, f64),
    pub r2: f64,
    pub n_bins: usize,
    /// States whose measure evaluated successfully at this γ.
    pub n_states: usize,
    pub dropped_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: ChannelKind,
    pub measure: Measure,
    pub gammas: Vec<f64>,
    /// One entry per γ whose fit succeeded.
    pub params: Vec<SweepPoint>,
    pub failures: Vec<SweepFailure>,
    pub n_sample: usize,
    pub seed: u64,
}

impl SweepResult {
    pub fn series(&self, f: impl Fn(&SweepPoint) -> f64) -> (Vec<f64>, Vec<f64>) {
        (self.params.iter().map(|p| p.gamma).collect(), self.params.iter().map(f).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub gamma: f64,
    pub reason: String,
}

/// The HS state used as sweep sample `index`.
pub fn sweep_state_seed(seed: u64, index: usize) -> u64 {
    derive_labeled(seed, "sweep-state", index as u64)
}

/// Applies the channel at each γ to `n_sample` fresh HS states, recomputes
/// the measure and MQFI/4, bins, fits the exponential saturation model and
/// bootstraps its parameters.
pub fn channel_sweep(
    seed: u64,
    n_sample: usize,
    kind: ChannelKind,
    gammas: &[f64],
    measure: Measure,
    options: &SweepOptions,
) -> Result<SweepResult> {
    if n_sample < 200 {
        return Err(ChannelError::InvalidArgument(format!("n_sample {n_sample} below 200")));
    }
    if gammas.first() != Some(&0.0) || gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ChannelError::InvalidArgument("gammas must start at 0 and increase strictly".into()));
    }
    for &g in gammas {
        ChannelSpec::new(kind, g)?;
    }
    if measure == Measure::Ree && n_sample < 500 {
        return Err(ChannelError::InvalidArgument("REE sweeps need n_sample >= 500".into()));
    }
    let gammas: Vec<f64> = if measure == Measure::Ree {
        gammas.iter().copied().filter(|&g| g <= options.ree_max_gamma).collect()
    } else {
        gammas.to_vec()
    };

    let states: Vec<DensityMatrix> = (0..n_sample)
        .into_par_iter()
        .map(|i| gen_hs_random(sweep_state_seed(seed, i)))
        .collect::<std::result::Result<_, _>>()?;
    let generator = pauli_product_generator(Axis::Z, Axis::Z);

    let mut params = Vec::with_capacity(gammas.len());
    let mut failures = Vec::new();
    // One bin count for the whole sweep, from the first γ with usable data.
    let mut sweep_bins = options.n_bins;
    for (gi, &gamma) in gammas.iter().enumerate() {
        let spec = ChannelSpec::new(kind, gamma)?;
        let evaluated: Vec<Option<(f64, f64)>> = states
            .par_iter()
            .enumerate()
            .map(|(i, rho)| -> Result<Option<(f64, f64)>> {
                let out = spec.apply(rho)?;
                let state_seed = sweep_state_seed(seed, i);
                let e = match measure.evaluate(&out, &options.ree, derive_labeled(state_seed, "ree", 0)) {
                    Ok(v) => v,
                    Err(EntanglementError::NotConverged { .. }) => return Ok(None),
                    Err(e) => return Err(e.into()),
                };
                let q = mqfi(&out, &generator, &options.mqfi, derive_labeled(state_seed, "mqfi", 0))?;
                Ok(Some((e, q.value / 4.0)))
            })
            .collect::<Result<_>>()?;
        let (x, y): (Vec<f64>, Vec<f64>) = evaluated.into_iter().flatten().unzip();
        if sweep_bins.is_none() {
            match fd_bin_count(&x) {
                Ok(n) => sweep_bins = Some(n.max(2)),
                Err(e) => {
                    failures.push(SweepFailure { gamma, reason: format!("bin count: {e}") });
                    continue;
                }
            }
        }
        let n_bins = sweep_bins.expect("bin count set above");
        match fit_sweep_point(gamma, &x, &y, n_bins, options, derive_labeled(seed, "sweep-bootstrap", gi as u64)) {
            Ok(point) => {
                if point.dropped_bins > 0 {
                    log::warn!(
                        "{kind} sweep, {measure}, gamma {gamma}: dropped {} bin(s) under {} points",
                        point.dropped_bins,
                        options.min_bin_count
                    );
                }
                params.push(point);
            }
            Err(e) => {
                log::warn!("{kind} sweep, {measure}, gamma {gamma}: fit failed: {e}");
                failures.push(SweepFailure { gamma, reason: e.to_string() });
            }
        }
    }
    Ok(SweepResult { kind, measure, gammas, params, failures, n_sample, seed })
}

fn fit_sweep_point(
    gamma: f64,
    x: &[f64],
    y: &[f64],
    n_bins: usize,
    options: &SweepOptions,
    boot_seed: u64,
) -> std::result::Result<SweepPoint, StatsError> {
    let rebin = Rebin { n_bins, min_occupancy: options.min_bin_count, sparse: SparseBins::Drop };
    let all_bins = bin_series(x, y, n_bins, 0)?.bins.len();
    let series = rebin.apply(x, y)?;
    let fit = fit_model(ModelKind::ExponentialSaturation, &series.x(), &series.y(), Some(&series.weights()))?;
    let boot = bootstrap_fit(ModelKind::ExponentialSaturation, x, y, options.bootstrap_n, boot_seed, Some(rebin))?;
    let ci = boot.cis();
    Ok(SweepPoint {
        gamma,
        a: fit.params[0],
        a_ci: ci[0],
        alpha: fit.params[1],
        alpha_ci: ci[1],
        b: fit.params[2],
        b_ci: ci[2],
        r2: fit.r2,
        n_bins: series.bins.len(),
        n_states: x.len(),
        dropped_bins: all_bins - series.bins.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::{concurrence, negativity};
    use crate::seed::derive_seed;
    use crate::states::{bell_state, bloch_qubit, purity, werner};
    use proptest::prelude::{prop_assert, proptest};

    fn random_states(n: u64, tag: u64) -> Vec<DensityMatrix> {
        (0..n).map(|s| gen_hs_random(derive_seed(tag, s)).unwrap()).collect()
    }

    #[test]
    fn kraus_sets_are_complete() {
        for kind in [ChannelKind::AmplitudeDamping, ChannelKind::PhaseDamping] {
            for k in 0..=10 {
                let g = 0.05 * k as f64;
                assert!(completeness_residual(&single_qubit_kraus(kind, g).unwrap()) <= KRAUS_COMPLETENESS_TOL);
                assert!(completeness_residual(&two_qubit_kraus(kind, g).unwrap()) <= KRAUS_COMPLETENESS_TOL);
            }
        }
    }

    #[test]
    fn range_checks() {
        let rho = bell_state();
        assert!(matches!(amplitude_damping(&rho, 0.6), Err(ChannelError::RangeViolation { .. })));
        assert!(matches!(phase_damping(&rho, -0.1), Err(ChannelError::RangeViolation { .. })));
        assert!(matches!(depolarizing(&rho, 1.0), Err(ChannelError::RangeViolation { .. })));
        assert!(depolarizing(&rho, 0.75).is_ok());
    }

    #[test]
    fn zero_strength_is_identity() {
        for rho in random_states(10, 1) {
            for kind in ChannelKind::ALL {
                let out = ChannelSpec::new(kind, 0.0).unwrap().apply(&rho).unwrap();
                assert_eq!(out.mat().max_abs_diff(rho.mat()), 0.0);
            }
        }
    }

    #[test]
    fn amplitude_damping_examples() {
        let one = [0.0, 0.0, -1.0];
        let rho = crate::states::product_state(&one, &one).unwrap();
        let out = amplitude_damping(&rho, 0.5).unwrap();
        for i in 0..4 {
            assert!((out.mat()[(i, i)].re - 0.25).abs() < 1e-15);
        }
        // Single qubit: |1⟩⟨1| → (1−γ)|1⟩⟨1| + γ|0⟩⟨0|.
        let g = 0.3;
        let q = bloch_qubit(&one).unwrap();
        let ops = single_qubit_kraus(ChannelKind::AmplitudeDamping, g).unwrap();
        let out = apply_kraus(&q, &ops);
        assert!((out[(0, 0)].re - g).abs() < 1e-15 && (out[(1, 1)].re - (1.0 - g)).abs() < 1e-15);
    }

    #[test]
    fn phase_damping_examples() {
        for k in 0..=5 {
            let g = 0.1 * k as f64;
            let out = phase_damping(&bell_state(), g).unwrap();
            assert!((out.mat()[(0, 3)].re - 0.5 * (1.0 - g).powi(2)).abs() < 1e-15);
            for i in 0..4 {
                assert!((out.mat()[(i, i)] - bell_state().mat()[(i, i)]).norm() < 1e-14);
            }
        }
        for rho in random_states(50, 2) {
            let out = phase_damping(&rho, 0.37).unwrap();
            for i in 0..4 {
                assert!((out.mat()[(i, i)] - rho.mat()[(i, i)]).norm() <= 1e-14);
            }
        }
    }

    #[test]
    fn depolarizing_examples() {
        let out = depolarizing(&bell_state(), 0.75).unwrap();
        assert!((purity(&out) - 0.296875).abs() < 1e-14);
        for k in 0..=15 {
            let g = 0.05 * k as f64;
            let out = depolarizing(&bell_state(), g).unwrap();
            assert!(out.mat().max_abs_diff(werner(1.0 - g).unwrap().mat()) < 1e-15);
            let expected = (0.5 * (3.0 * (1.0 - g) - 1.0)).max(0.0);
            assert!((concurrence(&out).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn correction_examples() {
        assert!((depolarizing_correction(0.3, 0.4, 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(depolarizing_correction(0.61, 0.0, 0.2).unwrap(), 0.61);
        let measured = 0.5 * 0.756;
        assert!((depolarizing_correction(measured, 0.5, 0.0).unwrap() - 0.756).abs() < 1e-15);
        assert!(depolarizing_correction(0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn channels_preserve_validity() {
        for rho in random_states(50, 3) {
            for kind in ChannelKind::ALL {
                for g in [0.1, 0.25, 0.5] {
                    let out = ChannelSpec::new(kind, g).unwrap().apply(&rho).unwrap();
                    assert!(crate::states::validate_with_tol(out.mat(), OUTPUT_TOL).is_empty());
                }
            }
        }
    }

    #[test]
    fn local_channels_do_not_increase_entanglement() {
        for rho in random_states(100, 4) {
            let (c0, n0) = (concurrence(&rho).unwrap(), negativity(&rho).unwrap());
            for kind in [ChannelKind::AmplitudeDamping, ChannelKind::PhaseDamping] {
                let out = ChannelSpec::new(kind, 0.2).unwrap().apply(&rho).unwrap();
                assert!(concurrence(&out).unwrap() <= c0 + 1e-8);
                assert!(negativity(&out).unwrap() <= n0 + 1e-8);
            }
        }
    }

    #[test]
    fn depolarizing_is_linear() {
        // Any linear functional, here ⟨00|ρ|00⟩ and Re⟨01|ρ|10⟩.
        for rho in random_states(20, 5) {
            let g = 0.3;
            let out = depolarizing(&rho, g).unwrap();
            let lin = |m: &CMat| m[(0, 0)].re + 2.0 * m[(1, 2)].re;
            let expected = (1.0 - g) * lin(rho.mat()) + g * lin(&CMat::identity(4).scale(0.25));
            assert!((lin(out.mat()) - expected).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn local_channel_order_is_irrelevant(seed in 0u64..10_000, g in 0.0f64..0.5, ad in proptest::bool::ANY) {
            let rho = gen_hs_random(seed).unwrap();
            let kind = if ad { ChannelKind::AmplitudeDamping } else { ChannelKind::PhaseDamping };
            let ops = single_qubit_kraus(kind, g).unwrap();
            let id = CMat::identity(2);
            let on_a: Vec<CMat> = ops.iter().map(|k| kron(k, &id).unwrap()).collect();
            let on_b: Vec<CMat> = ops.iter().map(|k| kron(&id, k).unwrap()).collect();
            let ab = apply_kraus(&apply_kraus(rho.mat(), &on_a), &on_b);
            let ba = apply_kraus(&apply_kraus(rho.mat(), &on_b), &on_a);
            let joint = apply_kraus(rho.mat(), &two_qubit_kraus(kind, g).unwrap());
            prop_assert!(ab.max_abs_diff(&ba) < 1e-15);
            prop_assert!(ab.max_abs_diff(&joint) < 1e-15);
        }
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let o = SweepOptions::default();
        let m = Measure::Concurrence;
        assert!(channel_sweep(1, 100, ChannelKind::PhaseDamping, &[0.0, 0.1], m, &o).is_err());
        assert!(channel_sweep(1, 300, ChannelKind::PhaseDamping, &[0.1, 0.2], m, &o).is_err());
        assert!(channel_sweep(1, 300, ChannelKind::PhaseDamping, &[0.0, 0.6], m, &o).is_err());
    }

    #[test]
    fn small_sweep_runs() {
        let o = SweepOptions { bootstrap_n: 100, ..Default::default() };
        let r = channel_sweep(9, 600, ChannelKind::AmplitudeDamping, &[0.0, 0.1], Measure::Concurrence, &o).unwrap();
        assert_eq!(r.params.len() + r.failures.len(), 2);
        assert!(r.params.iter().all(|p| p.n_states == 600 && p.a.is_finite()));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["params"][0]["A_ci"].is_array());
        assert_eq!(json["kind"], "amplitude_damping");
        assert!(r.failures.is_empty(), "{:?}", r.failures);
    }
}

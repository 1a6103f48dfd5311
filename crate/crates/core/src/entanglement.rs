//! Concurrence, negativity and the relative entropy of entanglement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    kron, matrix_log2_regularized, partial_transpose_a, pauli_y, paulis, singular_values, trace_norm, CMat, LinalgError,
};
use crate::optim::{bfgs, BfgsOptions};
use crate::seed::{derive_labeled, rng_from_seed};
use crate::states::{bloch_qubit_unchecked, sample_flat_dirichlet, sample_unit_ball, DensityMatrix};

/// Regularization added to eigenvalues before taking logarithms.
pub const LOG_EPSILON: f64 = 1e-14;

/// Number of product components in the separable ansatz.
pub const ANSATZ_COMPONENTS: usize = 4;

const CLAMP_TOL: f64 = 1e-10;
const SPECTRUM_ERROR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntanglementError {
    #[error("spin-flip spectrum has eigenvalue {value:e} below -1e-8")]
    SpectrumError { value: f64 },
    #[error("relative entropy {value:e} is negative beyond tolerance")]
    NegativeRelativeEntropy { value: f64 },
    #[error("REE did not converge: {agreeing} run(s) agree within tolerance, {required} required (best {best})")]
    NotConverged { agreeing: usize, required: usize, best: f64, partial: Box<ReeResult> },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, EntanglementError>;

/// Wootters concurrence max(0, λ₁−λ₂−λ₃−λ₄).
///
/// With ρ = WW† (W = V√P from the spectral decomposition) the spin-flip
/// matrix R = ρ(σ_y⊗σ_y)ρ*(σ_y⊗σ_y) has the same spectrum as τ†τ for the
/// complex symmetric τ = Wᵀ(σ_y⊗σ_y)W. The λᵢ are the square roots of that
/// spectrum, i.e. the singular values of τ, which are computed directly so
/// near-zero λᵢ keep their relative accuracy.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    let yy = kron(&pauli_y(), &pauli_y())?;
    let eig = rho.mat().eigh()?;
    let mut w = eig.eigenvectors;
    for (k, &p) in eig.eigenvalues.iter().enumerate() {
        // Spectrum of R = ρρ̃ is nonnegative for PSD ρ; a negative ρ eigenvalue
        // is the only way it can go negative.
        if p < -SPECTRUM_ERROR_TOL {
            return Err(EntanglementError::SpectrumError { value: p });
        }
        let root = if p < CLAMP_TOL { p.max(0.0) } else { p }.sqrt();
        for r in 0..4 {
            w[(r, k)] *= root;
        }
    }
    let tau = w.transpose() * yy * w;
    let l = singular_values(&tau)?;
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

/// (‖ρ^{T_A}‖₁ − 1)/2, clamped to [0, 0.5].
pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    let pt = partial_transpose_a(rho.mat())?;
    let tn = trace_norm(&pt)?;
    Ok(((tn - 1.0) / 2.0).clamp(0.0, 0.5))
}

/// Smallest eigenvalue of the partial transpose.
pub fn min_partial_transpose_eigenvalue(rho: &DensityMatrix) -> Result<f64> {
    let pt = partial_transpose_a(rho.mat())?;
    Ok(*pt.eigh()?.eigenvalues.last().unwrap())
}

/// Tr(ρ log₂ρ) with regularized logarithm.
fn neg_entropy(rho: &DensityMatrix, epsilon: f64) -> Result<f64> {
    let eig = rho.mat().eigh()?;
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&l| {
            let l = l.max(0.0);
            l * (l + epsilon).log2()
        })
        .sum())
}

/// Quantum relative entropy S(ρ‖σ) = Tr(ρ log₂ρ) − Tr(ρ log₂σ) in bits.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix, epsilon: f64) -> Result<f64> {
    let first = neg_entropy(rho, epsilon)?;
    let log_sigma = matrix_log2_regularized(sigma.mat(), epsilon)?;
    let s = first - rho.mat().trace_product_re(&log_sigma);
    if s < -SPECTRUM_ERROR_TOL {
        return Err(EntanglementError::NegativeRelativeEntropy { value: s });
    }
    Ok(s.max(0.0))
}

/// Convex combination of [`ANSATZ_COMPONENTS`] product states, each given by a
/// pair of Bloch vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableAnsatz {
    pub weights: [f64; ANSATZ_COMPONENTS],
    pub bloch_a: [[f64; 3]; ANSATZ_COMPONENTS],
    pub bloch_b: [[f64; 3]; ANSATZ_COMPONENTS],
}

impl SeparableAnsatz {
    /// Free parameters: 3 Bloch coordinates per local state plus N−1 weights.
    pub const FREE_PARAMETERS: usize = 7 * ANSATZ_COMPONENTS - 1;

    pub fn materialize(&self) -> DensityMatrix {
        let mut acc = CMat::zeros(4);
        for i in 0..ANSATZ_COMPONENTS {
            let a = bloch_qubit_unchecked(&self.bloch_a[i]);
            let b = bloch_qubit_unchecked(&self.bloch_b[i]);
            acc = acc + kron(&a, &b).expect("2x2 factors").scale(self.weights[i]);
        }
        let tr = acc.trace().re;
        DensityMatrix::from_trusted(acc.hermitian_part().scale(1.0 / tr))
    }

    /// Checks the simplex and Bloch-ball constraints at `tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        let sum: f64 = self.weights.iter().sum();
        self.weights.iter().all(|&w| w >= -tol)
            && (sum - 1.0).abs() <= tol
            && self
                .bloch_a
                .iter()
                .chain(self.bloch_b.iter())
                .all(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReeConfig {
    pub n_starts: usize,
    pub max_iter: usize,
    pub objective_tol: f64,
    pub gradient_tol: f64,
    pub constraint_tol: f64,
    pub accept_spread: f64,
    pub accept_min_runs: usize,
    pub epsilon: f64,
}

impl Default for ReeConfig {
    fn default() -> Self {
        Self {
            n_starts: 10,
            max_iter: 2000,
            objective_tol: 1e-8,
            gradient_tol: 1e-6,
            constraint_tol: 1e-8,
            accept_spread: 1e-4,
            accept_min_runs: 3,
            epsilon: LOG_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReeRun {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReeResult {
    /// Relative entropy of entanglement in bits.
    pub value: f64,
    pub closest_separable: SeparableAnsatz,
    /// Converged runs whose value lies within `accept_spread` of the best.
    pub n_converged_runs: usize,
    /// Gap between the best value and the `accept_min_runs`-th best converged
    /// value (infinite if too few runs converged).
    pub run_spread: f64,
    pub runs: Vec<ReeRun>,
}

// Unconstrained coordinates: u (weights, p = u²/Σu²) followed by, per
// component, v_A and v_B with r = sin(|v|)/|v| · v. Both maps reach the
// boundary of the feasible set smoothly.
const N_COORDS: usize = ANSATZ_COMPONENTS + 6 * ANSATZ_COMPONENTS;

fn bloch_from_raw(v: &[f64]) -> ([f64; 3], f64, f64) {
    let t2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let t = t2.sqrt();
    // s(t) = sin t / t, d = s'(t)/t
    let (s, d) = if t < 1e-4 {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, -1.0 / 3.0 + t2 / 30.0)
    } else {
        let (sin, cos) = t.sin_cos();
        (sin / t, (t * cos - sin) / (t2 * t))
    };
    ([s * v[0], s * v[1], s * v[2]], s, d)
}

fn raw_from_bloch(r: &[f64; 3]) -> [f64; 3] {
    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt().min(1.0);
    if n < 1e-12 {
        return *r;
    }
    let t = n.asin();
    r.map(|x| x * t / n)
}

fn ansatz_from_coords(x: &[f64]) -> SeparableAnsatz {
    let total: f64 = x[..ANSATZ_COMPONENTS].iter().map(|u| u * u).sum();
    let mut weights = [0.0; ANSATZ_COMPONENTS];
    let mut bloch_a = [[0.0; 3]; ANSATZ_COMPONENTS];
    let mut bloch_b = [[0.0; 3]; ANSATZ_COMPONENTS];
    for i in 0..ANSATZ_COMPONENTS {
        weights[i] = x[i] * x[i] / total;
        let base = ANSATZ_COMPONENTS + 6 * i;
        bloch_a[i] = bloch_from_raw(&x[base..base + 3]).0;
        bloch_b[i] = bloch_from_raw(&x[base + 3..base + 6]).0;
    }
    SeparableAnsatz { weights, bloch_a, bloch_b }
}

fn coords_from_ansatz(a: &SeparableAnsatz) -> Vec<f64> {
    let mut x = Vec::with_capacity(N_COORDS);
    x.extend(a.weights.iter().map(|w| w.max(0.0).sqrt()));
    for i in 0..ANSATZ_COMPONENTS {
        x.extend(raw_from_bloch(&a.bloch_a[i]));
        x.extend(raw_from_bloch(&a.bloch_b[i]));
    }
    x
}

/// Re Tr(G (X⊗Y)) for 2×2 X, Y.
fn tr_kron(g: &CMat, x: &CMat, y: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let xij = x[(i, j)];
            for k in 0..2 {
                for l in 0..2 {
                    acc += (g[(2 * j + l, 2 * i + k)] * xij * y[(k, l)]).re;
                }
            }
        }
    }
    acc
}

/// The REE objective −Tr(ρ log₂σ(x)) + Tr(ρ log₂ρ) and its exact gradient.
struct ReeObjective<'a> {
    rho: &'a CMat,
    rho_term: f64,
    epsilon: f64,
    half_paulis: [CMat; 3],
}

impl<'a> ReeObjective<'a> {
    fn new(rho: &'a DensityMatrix, epsilon: f64) -> Result<Self> {
        Ok(Self {
            rho: rho.mat(),
            rho_term: neg_entropy(rho, epsilon)?,
            epsilon,
            half_paulis: paulis().map(|p| p.scale(0.5)),
        })
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = ANSATZ_COMPONENTS;
        let total: f64 = x[..n].iter().map(|u| u * u).sum();
        if !(total > 1e-300) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return f64::INFINITY;
        }
        let mut p = [0.0; ANSATZ_COMPONENTS];
        let mut locals_a = [CMat::zeros(2); ANSATZ_COMPONENTS];
        let mut locals_b = [CMat::zeros(2); ANSATZ_COMPONENTS];
        let mut jac = [(0.0, 0.0); 2 * ANSATZ_COMPONENTS];
        let mut sigma = CMat::zeros(4);
        for i in 0..n {
            p[i] = x[i] * x[i] / total;
            let base = n + 6 * i;
            let (ra, sa, da) = bloch_from_raw(&x[base..base + 3]);
            let (rb, sb, db) = bloch_from_raw(&x[base + 3..base + 6]);
            jac[2 * i] = (sa, da);
            jac[2 * i + 1] = (sb, db);
            locals_a[i] = bloch_qubit_unchecked(&ra);
            locals_b[i] = bloch_qubit_unchecked(&rb);
            sigma = sigma + kron(&locals_a[i], &locals_b[i]).unwrap().scale(p[i]);
        }
        let sigma = sigma.hermitian_part();
        let eig = match sigma.eigh() {
            Ok(e) => e,
            Err(_) => return f64::INFINITY,
        };
        let eps = self.epsilon;
        let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
        let g: Vec<f64> = lam.iter().map(|l| (l + eps).log2()).collect();
        let rho_t = eig.to_eigenbasis(self.rho);
        let value = self.rho_term - (0..4).map(|k| g[k] * rho_t[(k, k)].re).sum::<f64>();

        // Fréchet derivative of log₂ through divided differences.
        let mut weighted = CMat::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                let diff = lam[i] - lam[j];
                let f = if diff.abs() > 1e-9 * (lam[i] + lam[j] + eps) {
                    (g[i] - g[j]) / diff
                } else {
                    1.0 / ((0.5 * (lam[i] + lam[j]) + eps) * std::f64::consts::LN_2)
                };
                weighted[(i, j)] = rho_t[(i, j)] * f;
            }
        }
        let gm = eig.eigenvectors * weighted * eig.eigenvectors.adjoint();

        // df/dσ contracted with dσ/dθ; f = −Tr(ρ L) + const.
        let mut dp = [0.0; ANSATZ_COMPONENTS];
        for i in 0..n {
            dp[i] = -tr_kron(&gm, &locals_a[i], &locals_b[i]);
            let mut dra = [0.0; 3];
            let mut drb = [0.0; 3];
            for c in 0..3 {
                dra[c] = -p[i] * tr_kron(&gm, &self.half_paulis[c], &locals_b[i]);
                drb[c] = -p[i] * tr_kron(&gm, &locals_a[i], &self.half_paulis[c]);
            }
            let base = n + 6 * i;
            for (off, dr, (s, d)) in [(0, dra, jac[2 * i]), (3, drb, jac[2 * i + 1])] {
                let v = &x[base + off..base + off + 3];
                let vdr = v[0] * dr[0] + v[1] * dr[1] + v[2] * dr[2];
                for c in 0..3 {
                    grad[base + off + c] = s * dr[c] + d * vdr * v[c];
                }
            }
        }
        let mean_dp: f64 = (0..n).map(|i| p[i] * dp[i]).sum();
        for j in 0..n {
            grad[j] = 2.0 * x[j] / total * (dp[j] - mean_dp);
        }
        value
    }
}

fn random_start(seed: u64) -> SeparableAnsatz {
    let mut rng = rng_from_seed(seed);
    let w = sample_flat_dirichlet(&mut rng, ANSATZ_COMPONENTS);
    let mut weights = [0.0; ANSATZ_COMPONENTS];
    weights.copy_from_slice(&w);
    let mut bloch_a = [[0.0; 3]; ANSATZ_COMPONENTS];
    let mut bloch_b = [[0.0; 3]; ANSATZ_COMPONENTS];
    for i in 0..ANSATZ_COMPONENTS {
        bloch_a[i] = sample_unit_ball(&mut rng);
        bloch_b[i] = sample_unit_ball(&mut rng);
    }
    SeparableAnsatz { weights, bloch_a, bloch_b }
}

/// Relative entropy of entanglement by multi-start minimization over the
/// separable ansatz. Run `k` is seeded from `(seed, k)`.
pub fn ree(rho: &DensityMatrix, config: &ReeConfig, seed: u64) -> Result<ReeResult> {
    let objective = ReeObjective::new(rho, config.epsilon)?;
    let opts = BfgsOptions {
        max_iter: config.max_iter,
        objective_tol: config.objective_tol,
        gradient_tol: config.gradient_tol,
    };

    let mut runs = Vec::with_capacity(config.n_starts);
    let mut best: Option<(f64, SeparableAnsatz)> = None;
    for k in 0..config.n_starts {
        let start = random_start(derive_labeled(seed, "ree-start", k as u64));
        let m = bfgs(|x, g| objective.eval(x, g), coords_from_ansatz(&start), &opts);
        let ansatz = ansatz_from_coords(&m.x);
        let converged = m.termination.converged() && ansatz.is_feasible(config.constraint_tol);
        // Re-evaluate through the public path so the reported value does not
        // depend on the gradient-carrying implementation.
        let value = relative_entropy(rho, &ansatz.materialize(), config.epsilon).unwrap_or(m.value).max(0.0);
        runs.push(ReeRun { value, iterations: m.iterations, converged });
        if converged && best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, ansatz));
        }
    }

    let mut converged_values: Vec<f64> = runs.iter().filter(|r| r.converged).map(|r| r.value).collect();
    converged_values.sort_by(f64::total_cmp);
    let required = config.accept_min_runs.max(1);
    let (best_value, closest) = match best {
        Some(b) => b,
        None => {
            let fallback = runs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
            let partial = ReeResult {
                value: fallback,
                closest_separable: random_start(seed),
                n_converged_runs: 0,
                run_spread: f64::INFINITY,
                runs,
            };
            return Err(EntanglementError::NotConverged {
                agreeing: 0,
                required,
                best: fallback,
                partial: Box::new(partial),
            });
        }
    };
    let agreeing = converged_values.iter().filter(|&&v| v - best_value <= config.accept_spread).count();
    let run_spread = converged_values.get(required - 1).map(|v| v - best_value).unwrap_or(f64::INFINITY);
    let result =
        ReeResult { value: best_value, closest_separable: closest, n_converged_runs: agreeing, run_spread, runs };
    if agreeing < required {
        return Err(EntanglementError::NotConverged {
            agreeing,
            required,
            best: best_value,
            partial: Box::new(result),
        });
    }
    Ok(result)
}

/// One of the three entanglement measures, for selecting a data column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Concurrence,
    Negativity,
    Ree,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Concurrence, Measure::Negativity, Measure::Ree];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Concurrence => "concurrence",
            Measure::Negativity => "negativity",
            Measure::Ree => "ree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Evaluates the measure; `seed` only matters for REE.
    pub fn evaluate(self, rho: &DensityMatrix, ree_config: &ReeConfig, seed: u64) -> Result<f64> {
        match self {
            Measure::Concurrence => concurrence(rho),
            Measure::Negativity => negativity(rho),
            Measure::Ree => ree(rho, ree_config, seed).map(|r| r.value),
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::seed::derive_seed;
    use crate::states::{bell_state, gen_hs_random, product_state, random_pure, separable_mixture, werner};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Independent concurrence oracle: eigenvalues of the non-Hermitian R via
    /// its characteristic polynomial roots, found by Durand-Kerner iteration.
    fn concurrence_bruteforce(rho: &DensityMatrix) -> f64 {
        let yy = kron(&pauli_y(), &pauli_y()).unwrap();
        let m = *rho.mat();
        let r = m * yy * m.conj() * yy;
        // Faddeev-LeVerrier for the characteristic polynomial.
        let mut coeffs = vec![c(1.0, 0.0)];
        let mut mk = CMat::zeros(4);
        let id = CMat::identity(4);
        for k in 1..=4 {
            let prev = *coeffs.last().unwrap();
            mk = r * mk + id.scale_c(prev);
            let ck = -(r * mk).trace() / (k as f64);
            coeffs.push(ck);
        }
        let poly = |z: C64| coeffs.iter().fold(c(0.0, 0.0), |acc, &a| acc * z + a);
        let mut roots: Vec<C64> = (0..4).map(|k| c(0.4, 0.9).powu(k as u32)).collect();
        for _ in 0..500 {
            for i in 0..4 {
                let mut denom = c(1.0, 0.0);
                for j in 0..4 {
                    if i != j {
                        denom *= roots[i] - roots[j];
                    }
                }
                let z = roots[i];
                roots[i] = z - poly(z) / denom;
            }
        }
        let mut l: Vec<f64> = roots.iter().map(|z| z.re.max(0.0).sqrt()).collect();
        l.sort_by(|a, b| b.total_cmp(a));
        (l[0] - l[1] - l[2] - l[3]).max(0.0)
    }

    #[test]
    fn bell_anchors() {
        assert!((concurrence(&bell_state()).unwrap() - 1.0).abs() < 1e-9);
        assert!((negativity(&bell_state()).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn product_states_are_unentangled() {
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let rho = product_state(&sample_unit_ball(&mut rng), &sample_unit_ball(&mut rng)).unwrap();
            assert!(concurrence(&rho).unwrap() < 1e-7);
            assert!(negativity(&rho).unwrap() < 1e-12);
        }
    }

    #[test]
    fn pure_state_closed_form() {
        for s in 0..200 {
            let rho = random_pure(derive_seed(99, s));
            // Recover amplitudes from the rank-one projector.
            let eig = rho.mat().eigh().unwrap();
            let v = eig.vector(0);
            let closed = 2.0 * (v[0] * v[3] - v[1] * v[2]).norm();
            let got = concurrence(&rho).unwrap();
            assert!((got - closed).abs() < 1e-8, "state {s}: {got} vs {closed}");
        }
    }

    #[test]
    fn matches_characteristic_polynomial_oracle() {
        for s in 0..100 {
            let rho = gen_hs_random(derive_seed(7, s)).unwrap();
            let a = concurrence(&rho).unwrap();
            let b = concurrence_bruteforce(&rho);
            assert!((a - b).abs() < 1e-6, "state {s}: {a} vs {b}");
        }
    }

    #[test]
    fn werner_closed_forms() {
        for k in 0..50 {
            let p = k as f64 / 49.0;
            let rho = werner(p).unwrap();
            let want_c = ((3.0 * p - 1.0) / 2.0).max(0.0);
            let want_n = ((3.0 * p - 1.0) / 4.0).max(0.0);
            assert!((concurrence(&rho).unwrap() - want_c).abs() < 1e-8);
            assert!((negativity(&rho).unwrap() - want_n).abs() < 1e-8);
        }
        assert!((concurrence(&werner(0.5).unwrap()).unwrap() - 0.25).abs() < 1e-12);
        assert!((negativity(&werner(0.5).unwrap()).unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn separable_mixtures_are_ppt() {
        for s in 0..200 {
            let rho = separable_mixture(s, 4).unwrap();
            assert!(negativity(&rho).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn ppt_equivalence_on_hs_states() {
        for s in 0..2000 {
            let rho = gen_hs_random(derive_seed(1, s)).unwrap();
            let c = concurrence(&rho).unwrap();
            let n = negativity(&rho).unwrap();
            let min_pt = min_partial_transpose_eigenvalue(&rho).unwrap();
            assert!((0.0..=1.0).contains(&c) && (0.0..=0.5).contains(&n));
            // Both quantities vanish together; the 1e-9 cut is applied with a
            // small guard band since each carries its own rounding.
            if c > 1e-7 {
                assert!(n > 1e-9 && min_pt < -1e-9, "state {s}: C={c} N={n}");
            }
            if n > 1e-7 {
                assert!(c > 1e-9, "state {s}: C={c} N={n}");
            }
        }
    }

    #[test]
    fn relative_entropy_examples() {
        let rho = gen_hs_random(5).unwrap();
        assert!(relative_entropy(&rho, &rho, LOG_EPSILON).unwrap() < 1e-7);
        let up = product_state(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap();
        let s = relative_entropy(&up, &DensityMatrix::maximally_mixed(), LOG_EPSILON).unwrap();
        assert!((s - 2.0).abs() < 1e-10);
        for k in 0..100 {
            let a = gen_hs_random(derive_seed(11, k)).unwrap();
            let b = gen_hs_random(derive_seed(12, k)).unwrap();
            assert!(relative_entropy(&a, &b, LOG_EPSILON).unwrap() >= 0.0);
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut checked = 0;
        for s in 0..20 {
            let rho = gen_hs_random(derive_seed(31, s)).unwrap();
            let obj = ReeObjective::new(&rho, LOG_EPSILON).unwrap();
            let x = coords_from_ansatz(&random_start(derive_seed(32, s)));
            let mut g = vec![0.0; N_COORDS];
            obj.eval(&x, &mut g);
            let mut scratch = vec![0.0; N_COORDS];
            for k in 0..N_COORDS {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (obj.eval(&xp, &mut scratch) - obj.eval(&xm, &mut scratch)) / (2.0 * h);
                let scale = g[k].abs().max(fd.abs()).max(1e-3);
                assert!((g[k] - fd).abs() / scale < 1e-4, "coord {k}: {} vs {fd}", g[k]);
                checked += 1;
            }
        }
        assert_eq!(checked, 20 * N_COORDS);
    }

    #[test]
    fn ansatz_coordinates_round_trip() {
        let a = random_start(4);
        let back = ansatz_from_coords(&coords_from_ansatz(&a));
        for i in 0..ANSATZ_COMPONENTS {
            assert!((a.weights[i] - back.weights[i]).abs() < 1e-12);
            for c in 0..3 {
                assert!((a.bloch_a[i][c] - back.bloch_a[i][c]).abs() < 1e-12);
                assert!((a.bloch_b[i][c] - back.bloch_b[i][c]).abs() < 1e-12);
            }
        }
        assert!(a.is_feasible(1e-8));
        let sigma = a.materialize();
        assert!(negativity(&sigma).unwrap() <= 1e-8);
    }

    #[test]
    fn ree_bell_is_one_bit() {
        let r = ree(&bell_state(), &ReeConfig::default(), 1).unwrap();
        assert!((r.value - 1.0).abs() < 1e-3, "{}", r.value);
        assert!(r.n_converged_runs >= 3 && r.run_spread <= 1e-4);
        assert!(r.closest_separable.is_feasible(1e-8));
    }

    #[test]
    fn ree_separable_is_zero() {
        for s in 0..5 {
            let rho = separable_mixture(derive_seed(8, s), 4).unwrap();
            let r = ree(&rho, &ReeConfig::default(), s).unwrap();
            assert!(r.value <= 1e-6, "{}", r.value);
        }
    }

    #[test]
    fn ree_werner_matches_symmetric_oracle() {
        let rho = werner(0.8).unwrap();
        // 1-D oracle: closest separable Werner state on a dense grid of q.
        let mut oracle = f64::INFINITY;
        for k in 0..=20000 {
            let q = k as f64 / 20000.0 / 3.0;
            let s = relative_entropy(&rho, &werner(q).unwrap(), LOG_EPSILON).unwrap();
            oracle = oracle.min(s);
        }
        let r = ree(&rho, &ReeConfig::default(), 2).unwrap();
        assert!((r.value - oracle).abs() < 5e-3, "{} vs oracle {oracle}", r.value);
    }

    #[test]
    fn mixing_with_identity_never_increases_measures() {
        let cfg = ReeConfig::default();
        for s in 0..100 {
            let rho = gen_hs_random(derive_seed(55, s)).unwrap();
            let mixed =
                DensityMatrix::from_trusted(rho.mat().scale(0.7) + DensityMatrix::maximally_mixed().mat().scale(0.3));
            assert!(concurrence(&mixed).unwrap() <= concurrence(&rho).unwrap() + 1e-9);
            assert!(negativity(&mixed).unwrap() <= negativity(&rho).unwrap() + 1e-9);
            if s < 10 {
                let a = ree(&rho, &cfg, s).unwrap().value;
                let b = ree(&mixed, &cfg, s).unwrap().value;
                assert!(b <= a + cfg.accept_spread, "state {s}: {b} > {a}");
            }
        }
    }
}

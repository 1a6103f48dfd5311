//! Two-qubit density matrices: validation, the Hilbert-Schmidt random
//! ensemble, named reference states and certified separable mixtures.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

use crate::linalg::{kron, paulis, CMat, LinalgError, C64};
use crate::seed::rng_from_seed;

/// Tolerance used when certifying a matrix as a density matrix.
pub const STATE_TOL: f64 = 1e-12;

const HS_MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("degenerate Hilbert-Schmidt sample: Tr(MM†) = {trace:e} after {attempts} attempts")]
    DegenerateSample { trace: f64, attempts: usize },
    #[error("Bloch vector norm {norm} exceeds 1")]
    BlochNormViolation { norm: f64 },
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    RangeViolation { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("not a valid density matrix: {}", fmt_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Hermiticity,
    Positivity,
    Normalization,
    Dimension,
}

/// One failed density-matrix property and its measured residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub property: Property,
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} violated (residual {:e})", self.property, self.residual)
    }
}

/// Checks Hermiticity, positivity and unit trace at `tol`.
pub fn validate_with_tol(mat: &CMat, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    if mat.dim() != 4 {
        out.push(Violation { property: Property::Dimension, residual: mat.dim() as f64 });
        return out;
    }
    let herm = mat.hermiticity_residual();
    if !(herm <= tol) {
        out.push(Violation { property: Property::Hermiticity, residual: herm });
    }
    // Positivity is judged on the Hermitian part so a tiny asymmetry does not
    // mask a real spectral problem.
    match mat.hermitian_part().eigh() {
        Ok(eig) => {
            let min = *eig.eigenvalues.last().unwrap();
            if min < -tol {
                out.push(Violation { property: Property::Positivity, residual: -min });
            }
        }
        Err(_) => out.push(Violation { property: Property::Positivity, residual: f64::NAN }),
    }
    let tr = mat.trace();
    let dev = (tr.re - 1.0).abs().max(tr.im.abs());
    if !(dev <= tol) {
        out.push(Violation { property: Property::Normalization, residual: dev });
    }
    out
}

/// [`validate_with_tol`] at the 1e-12 state tolerance.
pub fn validate(mat: &CMat) -> Vec<Violation> {
    validate_with_tol(mat, STATE_TOL)
}

/// A certified two-qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    /// Validates at the default 1e-12 tolerance.
    pub fn new(mat: CMat) -> Result<Self, StateError> {
        Self::with_tolerance(mat, STATE_TOL)
    }

    pub fn with_tolerance(mat: CMat, tol: f64) -> Result<Self, StateError> {
        let v = validate_with_tol(&mat, tol);
        if v.is_empty() {
            Ok(Self(mat))
        } else {
            Err(StateError::Invalid(v))
        }
    }

    /// Wraps a matrix known to be valid by construction.
    pub(crate) fn from_trusted(mat: CMat) -> Self {
        debug_assert_eq!(mat.dim(), 4);
        Self(mat)
    }

    pub fn mat(&self) -> &CMat {
        &self.0
    }

    pub fn into_mat(self) -> CMat {
        self.0
    }

    pub fn maximally_mixed() -> Self {
        Self(CMat::identity(4).scale(0.25))
    }

    /// Pure state |ψ⟩⟨ψ| from an (unnormalized) amplitude vector.
    pub fn pure(amplitudes: &[C64; 4]) -> Result<Self, StateError> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(StateError::RangeViolation { name: "amplitude norm", value: norm, lo: 0.0, hi: f64::INFINITY });
        }
        let v: Vec<C64> = amplitudes.iter().map(|a| a / norm).collect();
        Ok(Self(CMat::outer(&v, &v)))
    }

    /// (U_A⊗U_B) ρ (U_A⊗U_B)† for a 4×4 unitary.
    pub fn conjugate_by(&self, unitary: &CMat) -> Self {
        Self(unitary.sandwich(&self.0).hermitian_part())
    }
}

impl AsRef<CMat> for DensityMatrix {
    fn as_ref(&self) -> &CMat {
        &self.0
    }
}

/// Tr(ρ²).
pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr(ρ²) = Σ|ρᵢⱼ|² for Hermitian ρ.
    rho.mat().entries().iter().map(|z| z.norm_sqr()).sum()
}

/// Hilbert-Schmidt random state ρ = MM†/Tr(MM†), M with i.i.d. standard
/// complex normal entries. A pure function of `seed`.
pub fn gen_hs_random(seed: u64) -> Result<DensityMatrix, StateError> {
    let mut rng = rng_from_seed(seed);
    let mut last_trace = 0.0;
    for _ in 0..=HS_MAX_RETRIES {
        let mut m = CMat::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                m[(i, j)] = C64::new(re, im);
            }
        }
        let mm = (m * m.adjoint()).hermitian_part();
        let tr = mm.trace().re;
        last_trace = tr;
        if tr >= 1e-12 {
            return Ok(DensityMatrix::from_trusted(mm.scale(1.0 / tr)));
        }
    }
    Err(StateError::DegenerateSample { trace: last_trace, attempts: HS_MAX_RETRIES + 1 })
}

/// |Φ⁺⟩⟨Φ⁺| with |Φ⁺⟩ = (|00⟩+|11⟩)/√2.
pub fn bell_state() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let v = [C64::new(s, 0.0), z, z, C64::new(s, 0.0)];
    DensityMatrix::from_trusted(CMat::outer(&v, &v))
}

/// Single-qubit state (I + r·σ)/2.
pub fn bloch_qubit(r: &[f64; 3]) -> Result<CMat, StateError> {
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 + 1e-12 || !norm.is_finite() {
        return Err(StateError::BlochNormViolation { norm });
    }
    Ok(bloch_qubit_unchecked(r))
}

pub(crate) fn bloch_qubit_unchecked(r: &[f64; 3]) -> CMat {
    let [sx, sy, sz] = paulis();
    (CMat::identity(2) + sx.scale(r[0]) + sy.scale(r[1]) + sz.scale(r[2])).scale(0.5)
}

/// ρ_A ⊗ ρ_B from two Bloch vectors.
pub fn product_state(bloch_a: &[f64; 3], bloch_b: &[f64; 3]) -> Result<DensityMatrix, StateError> {
    let a = bloch_qubit(bloch_a)?;
    let b = bloch_qubit(bloch_b)?;
    Ok(DensityMatrix::from_trusted(kron(&a, &b)?))
}

/// Uniform point in the closed unit ball.
pub fn sample_unit_ball<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let mut dir = [0.0; 3];
    let mut norm = 0.0;
    while norm < 1e-300 {
        for d in dir.iter_mut() {
            *d = StandardNormal.sample(rng);
        }
        norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let radius = rng.random::<f64>().cbrt();
    dir.map(|d| d / norm * radius)
}

/// Flat Dirichlet weights of length `n`.
pub fn sample_flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Σᵢ pᵢ ρᵢᴬ⊗ρᵢᴮ with flat Dirichlet weights and Bloch vectors uniform in the
/// unit ball. Separable by construction.
pub fn separable_mixture(seed: u64, n_components: usize) -> Result<DensityMatrix, StateError> {
    if n_components == 0 {
        return Err(StateError::RangeViolation { name: "n_components", value: 0.0, lo: 1.0, hi: f64::INFINITY });
    }
    let mut rng = rng_from_seed(seed);
    let weights = sample_flat_dirichlet(&mut rng, n_components);
    let mut acc = CMat::zeros(4);
    for w in weights {
        let a = bloch_qubit_unchecked(&sample_unit_ball(&mut rng));
        let b = bloch_qubit_unchecked(&sample_unit_ball(&mut rng));
        acc = acc + kron(&a, &b)?.scale(w);
    }
    // Renormalize away the rounding in Σpᵢ.
    let tr = acc.trace().re;
    Ok(DensityMatrix::from_trusted(acc.hermitian_part().scale(1.0 / tr)))
}

/// p·|Φ⁺⟩⟨Φ⁺| + (1−p)·I/4.
pub fn werner(p: f64) -> Result<DensityMatrix, StateError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StateError::RangeViolation { name: "p", value: p, lo: 0.0, hi: 1.0 });
    }
    let mat = bell_state().mat().scale(p) + CMat::identity(4).scale((1.0 - p) / 4.0);
    Ok(DensityMatrix::from_trusted(mat))
}

/// Haar-random pure state.
pub fn random_pure(seed: u64) -> DensityMatrix {
    let mut rng = rng_from_seed(seed);
    let mut amps = [C64::new(0.0, 0.0); 4];
    for a in amps.iter_mut() {
        *a = C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
    }
    DensityMatrix::pure(&amps).expect("gaussian amplitudes are nonzero almost surely")
}

/// One row of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    pub state_id: u64,
    pub seed: u64,
    pub purity: f64,
    pub concurrence: f64,
    pub negativity: f64,
    /// `None` when REE was not computed for this state.
    pub ree: Option<f64>,
    pub mqfi: f64,
    pub mqfi_norm: f64,
}

impl EnsembleRecord {
    pub const CSV_HEADER: &'static str = "state_id,seed,purity,concurrence,negativity,ree,mqfi,mqfi_norm";

    /// Floats are written with 17 significant digits so rows round-trip exactly.
    pub fn to_csv_row(&self) -> String {
        let ree = self.ree.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.state_id,
            self.seed,
            fmt_f64(self.purity),
            fmt_f64(self.concurrence),
            fmt_f64(self.negativity),
            ree,
            fmt_f64(self.mqfi),
            fmt_f64(self.mqfi_norm)
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 8 {
            return Err(format!("expected 8 fields, found {}", fields.len()));
        }
        let f = |i: usize| -> Result<f64, String> { fields[i].parse::<f64>().map_err(|e| format!("column {i}: {e}")) };
        Ok(Self {
            state_id: fields[0].parse().map_err(|e| format!("state_id: {e}"))?,
            seed: fields[1].parse().map_err(|e| format!("seed: {e}"))?,
            purity: f(2)?,
            concurrence: f(3)?,
            negativity: f(4)?,
            ree: if fields[5].is_empty() { None } else { Some(f(5)?) },
            mqfi: f(6)?,
            mqfi_norm: f(7)?,
        })
    }
}

/// 17 significant digits, '.' decimal, no locale.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_seed;

    #[test]
    fn record_csv_round_trip() {
        let r = EnsembleRecord {
            state_id: 3,
            seed: u64::MAX,
            purity: 0.1 + 0.2,
            concurrence: 1.0 / 3.0,
            negativity: 0.0,
            ree: None,
            mqfi: 2.5,
            mqfi_norm: 0.625,
        };
        let line = r.to_csv_row();
        assert!(line.contains(",,"));
        assert_eq!(EnsembleRecord::from_csv_row(&line).unwrap(), r);
        let with_ree = EnsembleRecord { ree: Some(0.123456789012345678), ..r };
        assert_eq!(EnsembleRecord::from_csv_row(&with_ree.to_csv_row()).unwrap(), with_ree);
        assert!(EnsembleRecord::from_csv_row("1,2,3").is_err());
    }

    #[test]
    fn hs_is_deterministic() {
        let a = gen_hs_random(1234).unwrap();
        let b = gen_hs_random(1234).unwrap();
        assert_eq!(a.mat().entries(), b.mat().entries());
        assert_ne!(gen_hs_random(1235).unwrap(), a);
    }

    #[test]
    fn hs_samples_validate() {
        for id in 0..500 {
            let rho = gen_hs_random(derive_seed(42, id)).unwrap();
            assert!(validate(rho.mat()).is_empty(), "state {id}");
        }
    }

    #[test]
    fn validate_reports_each_violation() {
        assert!(validate(&CMat::identity(4).scale(0.25)).is_empty());
        let bad = CMat::from_real_diag(&[0.6, 0.6, -0.1, -0.1]);
        let v = validate(&bad);
        let props: Vec<_> = v.iter().map(|x| x.property).collect();
        // The entries sum to exactly one, so only positivity fails.
        assert_eq!(props, vec![Property::Positivity]);
        let v = validate(&CMat::from_real_diag(&[0.6, 0.6, -0.1, 0.1]));
        let props: Vec<_> = v.iter().map(|x| x.property).collect();
        assert_eq!(props, vec![Property::Positivity, Property::Normalization]);
        let pos = v.iter().find(|x| x.property == Property::Positivity).unwrap();
        assert!((pos.residual - 0.1).abs() < 1e-12);
        let mut nonherm = CMat::identity(4).scale(0.25);
        nonherm[(0, 1)] = C64::new(0.1, 0.0);
        assert!(validate(&nonherm).iter().any(|x| x.property == Property::Hermiticity));
        assert!(DensityMatrix::new(bad).is_err());
    }

    #[test]
    fn purity_examples() {
        assert!((purity(&DensityMatrix::maximally_mixed()) - 0.25).abs() < 1e-15);
        assert!((purity(&bell_state()) - 1.0).abs() < 1e-15);
        assert!((purity(&random_pure(9)) - 1.0).abs() < 1e-12);
        assert!((purity(&werner(0.5).unwrap()) - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn product_state_examples() {
        let mixed = product_state(&[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(mixed, DensityMatrix::maximally_mixed());
        let up = product_state(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(up.mat(), &CMat::from_real_diag(&[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(product_state(&[1.0, 1.0, 0.0], &[0.0; 3]), Err(StateError::BlochNormViolation { .. })));
    }

    #[test]
    fn werner_endpoints() {
        assert_eq!(werner(0.0).unwrap(), DensityMatrix::maximally_mixed());
        assert!(werner(1.0).unwrap().mat().max_abs_diff(bell_state().mat()) < 1e-16);
        assert!(werner(1.2).is_err());
    }

    #[test]
    fn separable_mixture_is_valid() {
        for s in 0..100 {
            let rho = separable_mixture(s, 4).unwrap();
            assert!(validate(rho.mat()).is_empty());
        }
        assert!(separable_mixture(1, 0).is_err());
    }

    #[test]
    fn single_component_mixture_is_product() {
        let rho = separable_mixture(77, 1).unwrap();
        // A product state has rank-one operator-Schmidt structure: reshuffled
        // matrix has a single nonzero singular value. Check via purity of the
        // reduced states instead: Tr(ρ²) = Tr(ρ_A²)·Tr(ρ_B²).
        let m = rho.mat();
        let mut ra = CMat::zeros(2);
        let mut rb = CMat::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    ra[(i, j)] += m[(2 * i + k, 2 * j + k)];
                    rb[(i, j)] += m[(2 * k + i, 2 * k + j)];
                }
            }
        }
        let prod = kron(&ra, &rb).unwrap();
        assert!(prod.max_abs_diff(m) < 1e-14);
    }

    #[test]
    fn unit_ball_samples_inside() {
        let mut rng = rng_from_seed(5);
        for _ in 0..1000 {
            let v = sample_unit_ball(&mut rng);
            assert!(v.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-15);
        }
        let w = sample_flat_dirichlet(&mut rng, 4);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}

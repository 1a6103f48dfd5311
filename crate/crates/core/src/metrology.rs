//! Quantum Fisher information and its maximization over local unitaries.
//!
//! The QFI is quadratic in the generator. Writing H = Σ c_kl σ_k⊗σ_l over the
//! sixteen Pauli products, QFI(ρ, H) = cᵀQc for a 16×16 form Q built once from
//! the spectrum of ρ. A local unitary U_A⊗U_B acts on the coefficients as a
//! pair of SO(3) rotations, so the search over SU(2)⊗SU(2) never has to touch
//! ρ again. For product generators (a·σ)⊗(b·σ) the maximization alternates
//! exact 3×3 eigenproblems in a and b; other generators fall back to
//! retracted gradient ascent with central-difference gradients.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{kron, paulis, CMat, LinalgError, C64, DEFAULT_TOL};
use crate::seed::{derive_labeled, rng_from_seed};
use crate::states::DensityMatrix;

/// Eigenvalue pairs whose sum is at or below this are dropped from the sum.
pub const PAIR_CUTOFF: f64 = 1e-12;

/// Two restarts further apart than this mark a result as low confidence.
pub const LOW_CONFIDENCE_SPREAD: f64 = 1e-3;

const UNITARY_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-6;
const SPECTRAL_STARTS: usize = 6;
const Z_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetrologyError {
    #[error("generator '{label}' has spectral norm {norm}, expected 1")]
    NonUnitNormGenerator { label: String, norm: f64 },
    #[error("generator '{label}' is not Hermitian (residual {residual:e})")]
    NonHermitianGenerator { label: String, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, MetrologyError>;

/// Hermitian phase generator with unit spectral norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    mat: CMat,
    label: String,
}

impl Generator {
    pub fn new(mat: CMat, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if mat.dim() != 4 {
            return Err(LinalgError::DimensionMismatch { expected: 4, found: mat.dim() }.into());
        }
        let residual = mat.hermiticity_residual();
        if residual > DEFAULT_TOL {
            return Err(MetrologyError::NonHermitianGenerator { label, residual });
        }
        let norm = spectral_norm(&mat)?;
        if (norm - 1.0).abs() > DEFAULT_TOL {
            return Err(MetrologyError::NonUnitNormGenerator { label, norm });
        }
        Ok(Self { mat, label })
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Real coefficients c_kl with H = Σ c_kl σ_k⊗σ_l (σ₀ = I).
    fn pauli_coefficients(&self) -> [[f64; 4]; 4] {
        let basis = pauli_basis();
        let mut c = [[0.0; 4]; 4];
        for k in 0..4 {
            for l in 0..4 {
                c[k][l] = 0.25 * basis[4 * k + l].trace_product_re(&self.mat);
            }
        }
        c
    }
}

fn spectral_norm(mat: &CMat) -> Result<f64> {
    let eig = mat.hermitian_part().eigh()?;
    Ok(eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// σ_a ⊗ σ_b.
pub fn pauli_product_generator(axis_a: Axis, axis_b: Axis) -> Generator {
    let p = paulis();
    let mat = kron(&p[axis_a.index()], &p[axis_b.index()]).expect("2x2 factors");
    Generator { mat, label: format!("s{}s{}", axis_a.name(), axis_b.name()) }
}

/// The three generators σ_x⊗σ_x, σ_y⊗σ_y, σ_z⊗σ_z.
pub fn diagonal_pauli_generators() -> Vec<Generator> {
    [Axis::X, Axis::Y, Axis::Z].into_iter().map(|a| pauli_product_generator(a, a)).collect()
}

/// U_A ⊗ U_B with each factor in SU(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalUnitaryPair {
    u_a: CMat,
    u_b: CMat,
}

impl LocalUnitaryPair {
    pub fn identity() -> Self {
        Self { u_a: CMat::identity(2), u_b: CMat::identity(2) }
    }

    /// Checks both factors are 2×2 and unitary to 1e-9.
    pub fn new(u_a: CMat, u_b: CMat) -> Result<Self> {
        for u in [&u_a, &u_b] {
            if u.dim() != 2 {
                return Err(LinalgError::DimensionMismatch { expected: 2, found: u.dim() }.into());
            }
            let r = unitarity_residual(u);
            if r > UNITARY_TOL {
                return Err(MetrologyError::InvalidArgument(format!("factor is not unitary (residual {r:e})")));
            }
        }
        Ok(Self { u_a, u_b })
    }

    fn from_quats(qa: &Quat, qb: &Quat) -> Self {
        Self { u_a: su2(qa), u_b: su2(qb) }
    }

    pub fn u_a(&self) -> &CMat {
        &self.u_a
    }

    pub fn u_b(&self) -> &CMat {
        &self.u_b
    }

    pub fn full(&self) -> CMat {
        kron(&self.u_a, &self.u_b).expect("2x2 factors")
    }

    /// max over factors of ‖U†U − I‖_max.
    pub fn unitarity_residual(&self) -> f64 {
        unitarity_residual(&self.u_a).max(unitarity_residual(&self.u_b))
    }
}

fn unitarity_residual(u: &CMat) -> f64 {
    (u.adjoint() * *u).max_abs_diff(&CMat::identity(u.dim()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MqfiConfig {
    pub n_restarts: usize,
    pub max_iter: usize,
    pub improvement_tol: f64,
}

impl Default for MqfiConfig {
    fn default() -> Self {
        Self { n_restarts: 8, max_iter: 1000, improvement_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MqfiResult {
    pub value: f64,
    pub optimal_rotation: LocalUnitaryPair,
    pub n_restarts_used: usize,
    /// Restarts that met the improvement criterion before `max_iter`.
    pub n_converged: usize,
    /// Gap between the best and second-best restart values.
    pub best_restart_spread: f64,
    pub low_confidence: bool,
    /// Set when no restart converged; `value` is then the identity-start QFI.
    pub unconverged: bool,
    pub restart_values: Vec<f64>,
}

/// Spectral-formula QFI of ρ for phase generator `h`.
pub fn qfi(rho: &DensityMatrix, h: &Generator) -> Result<f64> {
    let eig = rho.mat().eigh()?;
    let ht = eig.to_eigenbasis(h.mat());
    let p = &eig.eigenvalues;
    let mut f = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let s = p[i] + p[j];
            if s > PAIR_CUTOFF {
                f += (p[i] - p[j]).powi(2) / s * ht[(i, j)].norm_sqr();
            }
        }
    }
    Ok(2.0 * f)
}

/// QFI maximized over local unitaries. Restart 0 starts from the identity.
/// For product generators restarts 1..=6 start from spectral warm starts;
/// every other restart r starts from a Haar-random pair seeded by `(seed, r)`;
/// for product generators that pair is read as random start directions.
/// Ties keep the lowest restart index.
pub fn mqfi(rho: &DensityMatrix, h: &Generator, config: &MqfiConfig, seed: u64) -> Result<MqfiResult> {
    if config.n_restarts == 0 {
        return Err(MetrologyError::InvalidArgument("n_restarts must be at least 1".into()));
    }
    let form = QfiForm::new(rho)?;
    let coeffs = h.pauli_coefficients();
    let product = product_factors(&coeffs);

    let identity_value = qfi(rho, h)?;
    let mut runs: Vec<(f64, bool, LocalUnitaryPair)> = Vec::with_capacity(config.n_restarts);
    for r in 0..config.n_restarts {
        let (qa, qb) = if r == 0 {
            (QUAT_ONE, QUAT_ONE)
        } else if let Some(start) = product.as_ref().and_then(|(a, b)| spectral_start(&form, a, b, r - 1)) {
            start
        } else {
            let mut rng = rng_from_seed(derive_labeled(seed, "mqfi-restart", r as u64));
            let (qa, qb) = (random_quat(&mut rng), random_quat(&mut rng));
            match product.as_ref() {
                // Draw start directions rather than rotations of (a, b), so
                // product generators that differ by a local rotation share
                // the same random starts.
                Some((a, b)) => {
                    let n = apply_rotation(&adjoint_rotation(&qa), &Z_AXIS);
                    let m = apply_rotation(&adjoint_rotation(&qb), &Z_AXIS);
                    (quat_mapping(a, &n), quat_mapping(b, &m))
                }
                None => (qa, qb),
            }
        };
        let (pair, converged) = match &product {
            Some((a, b)) => alternate(&form, a, b, &qa, &qb, config),
            None => ascend(&form, &coeffs, qa, qb, config),
        };
        let value = qfi(&rho.conjugate_by(&pair.full()), h)?;
        runs.push((value, converged, pair));
    }

    let restart_values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let n_converged = runs.iter().filter(|r| r.1).count();
    let mut best: Option<usize> = None;
    for (i, run) in runs.iter().enumerate() {
        if run.1 && best.is_none_or(|b| run.0 > runs[b].0) {
            best = Some(i);
        }
    }
    let (mut value, mut rotation) = match best {
        Some(b) => (runs[b].0, runs[b].2),
        None => {
            log::warn!("mqfi: no restart converged for generator {}", h.label());
            (identity_value, LocalUnitaryPair::identity())
        }
    };
    if value < identity_value {
        value = identity_value;
        rotation = LocalUnitaryPair::identity();
    }
    let mut sorted: Vec<f64> = runs.iter().filter(|r| r.1).map(|r| r.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let spread = if sorted.len() >= 2 { sorted[0] - sorted[1] } else { 0.0 };

    Ok(MqfiResult {
        value,
        optimal_rotation: rotation,
        n_restarts_used: config.n_restarts,
        n_converged,
        best_restart_spread: spread,
        low_confidence: spread > LOW_CONFIDENCE_SPREAD,
        unconverged: best.is_none(),
        restart_values,
    })
}

/// Largest pairwise difference of MQFI across generators for one state.
/// The list must contain σ_x⊗σ_x, σ_y⊗σ_y and σ_z⊗σ_z.
pub fn verify_generator_independence(
    rho: &DensityMatrix,
    generators: &[Generator],
    config: &MqfiConfig,
    seed: u64,
) -> Result<f64> {
    for g in generators {
        let norm = spectral_norm(g.mat())?;
        if (norm - 1.0).abs() > DEFAULT_TOL {
            return Err(MetrologyError::NonUnitNormGenerator { label: g.label().to_string(), norm });
        }
    }
    for required in diagonal_pauli_generators() {
        if !generators.iter().any(|g| g.mat().max_abs_diff(required.mat()) <= DEFAULT_TOL) {
            return Err(MetrologyError::InvalidArgument(format!("generator list lacks {}", required.label())));
        }
    }
    let mut values = Vec::with_capacity(generators.len());
    for g in generators {
        values.push(mqfi(rho, g, config, seed)?.value);
    }
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(hi - lo)
}

// --- Pauli quadratic form -------------------------------------------------

fn pauli_basis() -> [CMat; 16] {
    let p = paulis();
    let s = [CMat::identity(2), p[0], p[1], p[2]];
    std::array::from_fn(|a| kron(&s[a / 4], &s[a % 4]).expect("2x2 factors"))
}

/// QFI(ρ, Σ c_α P_α) = Σ_αβ q[α][β] c_α c_β over Pauli products P_α.
struct QfiForm {
    q: [[f64; 16]; 16],
}

impl QfiForm {
    fn new(rho: &DensityMatrix) -> Result<Self> {
        let eig = rho.mat().eigh()?;
        let p = &eig.eigenvalues;
        let mut w = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let s = p[i] + p[j];
                if s > PAIR_CUTOFF {
                    w[i][j] = 2.0 * (p[i] - p[j]).powi(2) / s;
                }
            }
        }
        let rotated: Vec<CMat> = pauli_basis().iter().map(|b| eig.to_eigenbasis(b)).collect();
        let mut q = [[0.0; 16]; 16];
        for a in 0..16 {
            for b in a..16 {
                let mut acc = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        if w[i][j] != 0.0 {
                            acc += w[i][j] * (rotated[a][(i, j)] * rotated[b][(i, j)].conj()).re;
                        }
                    }
                }
                q[a][b] = acc;
                q[b][a] = acc;
            }
        }
        Ok(Self { q })
    }

    fn eval(&self, c: &[[f64; 4]; 4]) -> f64 {
        let flat: [f64; 16] = std::array::from_fn(|a| c[a / 4][a % 4]);
        let mut v = 0.0;
        for a in 0..16 {
            if flat[a] == 0.0 {
                continue;
            }
            let row: f64 = (0..16).map(|b| self.q[a][b] * flat[b]).sum();
            v += flat[a] * row;
        }
        v
    }

    /// f(n, m) for the generator (n·σ)⊗(m·σ).
    fn eval_product(&self, n: &[f64; 3], m: &[f64; 3]) -> f64 {
        let mut v = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                let a = 4 * (k + 1) + (l + 1);
                for k2 in 0..3 {
                    for l2 in 0..3 {
                        v += self.q[a][4 * (k2 + 1) + (l2 + 1)] * n[k] * m[l] * n[k2] * m[l2];
                    }
                }
            }
        }
        v
    }

    /// 3×3 form in the A-side vector with the B side held at `m`
    /// (or the B-side form with A held, when `a_side` is false).
    fn partial(&self, fixed: &[f64; 3], a_side: bool) -> Matrix3<f64> {
        let mut out = Matrix3::zeros();
        for k in 0..3 {
            for k2 in 0..3 {
                let mut acc = 0.0;
                for l in 0..3 {
                    for l2 in 0..3 {
                        let (a, b) = if a_side {
                            (4 * (k + 1) + (l + 1), 4 * (k2 + 1) + (l2 + 1))
                        } else {
                            (4 * (l + 1) + (k + 1), 4 * (l2 + 1) + (k2 + 1))
                        };
                        acc += self.q[a][b] * fixed[l] * fixed[l2];
                    }
                }
                out[(k, k2)] = acc;
            }
        }
        out
    }
}

/// If H = (a·σ)⊗(b·σ) with unit a, b (up to an overall sign folded into a),
/// returns (a, b).
fn product_factors(c: &[[f64; 4]; 4]) -> Option<([f64; 3], [f64; 3])> {
    let tol = 1e-12;
    for i in 0..4 {
        if c[0][i].abs() > tol || c[i][0].abs() > tol {
            return None;
        }
    }
    let block: [[f64; 3]; 3] = std::array::from_fn(|k| std::array::from_fn(|l| c[k + 1][l + 1]));
    let row = (0..3).max_by(|&x, &y| norm3(&block[x]).total_cmp(&norm3(&block[y])))?;
    let rn = norm3(&block[row]);
    if rn == 0.0 {
        return None;
    }
    let b = block[row].map(|v| v / rn);
    let a: [f64; 3] = std::array::from_fn(|k| dot3(&block[k], &b));
    for k in 0..3 {
        for l in 0..3 {
            if (block[k][l] - a[k] * b[l]).abs() > tol {
                return None;
            }
        }
    }
    let an = norm3(&a);
    Some((a.map(|v| v / an), b))
}

fn norm3(v: &[f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn top_eigenvector(m: Matrix3<f64>) -> [f64; 3] {
    let eig = SymmetricEigen::new(m);
    let i = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(i);
    let n = v.norm();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Warm start for product generators: the `rank`-th eigenvector of the 9×9
/// form over (n⊗m) coefficients, reshaped to 3×3, gives a relaxed optimum
/// whose leading singular pair is a good (n, m).
fn spectral_start(form: &QfiForm, a: &[f64; 3], b: &[f64; 3], rank: usize) -> Option<(Quat, Quat)> {
    if rank >= SPECTRAL_STARTS {
        return None;
    }
    let t = SMatrix::<f64, 9, 9>::from_fn(|x, y| form.q[4 * (x / 3 + 1) + (x % 3 + 1)][4 * (y / 3 + 1) + (y % 3 + 1)]);
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let v = eig.eigenvectors.column(order[rank]);
    let x = Matrix3::from_fn(|k, l| v[3 * k + l]);
    let svd = x.svd(true, true);
    let i = svd.singular_values.imax();
    let u = svd.u?.column(i).into_owned();
    let w = svd.v_t?.row(i).into_owned();
    let n = [u[0], u[1], u[2]];
    let m = [w[0], w[1], w[2]];
    Some((quat_mapping(a, &n), quat_mapping(b, &m)))
}

/// Alternating exact maximization for product generators.
fn alternate(
    form: &QfiForm,
    a: &[f64; 3],
    b: &[f64; 3],
    qa: &Quat,
    qb: &Quat,
    config: &MqfiConfig,
) -> (LocalUnitaryPair, bool) {
    let mut n = apply_rotation(&adjoint_rotation(qa), a);
    let mut m = apply_rotation(&adjoint_rotation(qb), b);
    let mut value = form.eval_product(&n, &m);
    let mut converged = false;
    for _ in 0..config.max_iter {
        let n_new = top_eigenvector(form.partial(&m, true));
        let m_new = top_eigenvector(form.partial(&n_new, false));
        let v = form.eval_product(&n_new, &m_new);
        if v >= value {
            n = n_new;
            m = m_new;
        }
        let gain = v - value;
        value = value.max(v);
        if gain < config.improvement_tol {
            converged = true;
            break;
        }
    }
    (LocalUnitaryPair::from_quats(&quat_mapping(a, &n), &quat_mapping(b, &m)), converged)
}

/// Gradient ascent over SU(2)×SU(2) for a general generator.
fn ascend(
    form: &QfiForm,
    c: &[[f64; 4]; 4],
    mut qa: Quat,
    mut qb: Quat,
    config: &MqfiConfig,
) -> (LocalUnitaryPair, bool) {
    let objective = |qa: &Quat, qb: &Quat| form.eval(&rotate_coefficients(c, qa, qb));
    let perturbed = |qa: &Quat, qb: &Quat, d: &[f64; 6]| {
        (
            quat_normalize(&quat_mul(qa, &quat_exp(&[d[0], d[1], d[2]]))),
            quat_normalize(&quat_mul(qb, &quat_exp(&[d[3], d[4], d[5]]))),
        )
    };
    let mut value = objective(&qa, &qb);
    let mut step = 1.0;
    let mut converged = false;
    for _ in 0..config.max_iter {
        let mut grad = [0.0; 6];
        for k in 0..6 {
            let mut d = [0.0; 6];
            d[k] = FD_STEP;
            let (pa, pb) = perturbed(&qa, &qb, &d);
            d[k] = -FD_STEP;
            let (ma, mb) = perturbed(&qa, &qb, &d);
            grad[k] = (objective(&pa, &pb) - objective(&ma, &mb)) / (2.0 * FD_STEP);
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-12 {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..40 {
            let d = grad.map(|g| g * step);
            let (ta, tb) = perturbed(&qa, &qb, &d);
            let v = objective(&ta, &tb);
            if v > value {
                accepted = Some((ta, tb, v));
                break;
            }
            step *= 0.5;
        }
        let Some((ta, tb, v)) = accepted else {
            converged = true;
            break;
        };
        let gain = v - value;
        qa = ta;
        qb = tb;
        value = v;
        step *= 2.0;
        if gain < config.improvement_tol {
            converged = true;
            break;
        }
    }
    (LocalUnitaryPair::from_quats(&qa, &qb), converged)
}

// --- SU(2) as unit quaternions --------------------------------------------
//
// q ↦ q₀I − i(q₁σ_x + q₂σ_y + q₃σ_z) is a group isomorphism onto SU(2), so
// quaternion products are matrix products and unitarity holds by
// construction.

type Quat = [f64; 4];

const QUAT_ONE: Quat = [1.0, 0.0, 0.0, 0.0];

fn su2(q: &Quat) -> CMat {
    let i = C64::new(0.0, 1.0);
    let p = paulis();
    CMat::identity(2).scale(q[0]) - (p[0].scale(q[1]) + p[1].scale(q[2]) + p[2].scale(q[3])).scale_c(i)
}

fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn quat_normalize(q: &Quat) -> Quat {
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.map(|x| x / n)
}

fn quat_exp(v: &[f64; 3]) -> Quat {
    let t = norm3(v);
    if t < 1e-300 {
        return QUAT_ONE;
    }
    let s = (0.5 * t).sin() / t;
    [(0.5 * t).cos(), s * v[0], s * v[1], s * v[2]]
}

fn random_quat<R: rand::Rng + ?Sized>(rng: &mut R) -> Quat {
    loop {
        let q: Quat = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return q.map(|x| x / n);
        }
    }
}

/// R with U†(v·σ)U = (Rv)·σ, computed from the trace formula.
fn adjoint_rotation(q: &Quat) -> [[f64; 3]; 3] {
    let u = su2(q);
    let p = paulis();
    std::array::from_fn(|k| {
        std::array::from_fn(|l| {
            let rotated = u.adjoint() * p[l] * u;
            0.5 * rotated.trace_product_re(&p[k])
        })
    })
}

fn apply_rotation(r: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| dot3(&r[k], v))
}

/// Pauli coefficients of U†HU for U = U(qa)⊗U(qb).
fn rotate_coefficients(c: &[[f64; 4]; 4], qa: &Quat, qb: &Quat) -> [[f64; 4]; 4] {
    let embed = |r: [[f64; 3]; 3]| {
        let mut m = [[0.0; 4]; 4];
        m[0][0] = 1.0;
        for k in 0..3 {
            for l in 0..3 {
                m[k + 1][l + 1] = r[k][l];
            }
        }
        m
    };
    let ra = embed(adjoint_rotation(qa));
    let rb = embed(adjoint_rotation(qb));
    let mut out = [[0.0; 4]; 4];
    for k in 0..4 {
        for l in 0..4 {
            let mut acc = 0.0;
            for k2 in 0..4 {
                if ra[k][k2] == 0.0 {
                    continue;
                }
                for l2 in 0..4 {
                    acc += ra[k][k2] * c[k2][l2] * rb[l][l2];
                }
            }
            out[k][l] = acc;
        }
    }
    out
}

/// A quaternion whose SU(2) element U satisfies U†(from·σ)U = to·σ.
fn quat_mapping(from: &[f64; 3], to: &[f64; 3]) -> Quat {
    let cross =
        [from[1] * to[2] - from[2] * to[1], from[2] * to[0] - from[0] * to[2], from[0] * to[1] - from[1] * to[0]];
    let cos = dot3(from, to).clamp(-1.0, 1.0);
    let sin = norm3(&cross);
    let phi = sin.atan2(cos);
    let axis = if sin > 1e-12 {
        cross.map(|x| x / sin)
    } else if cos > 0.0 {
        return QUAT_ONE;
    } else {
        // Antiparallel: any axis orthogonal to `from`.
        let trial = if from[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let d = dot3(&trial, from);
        let v = [trial[0] - d * from[0], trial[1] - d * from[1], trial[2] - d * from[2]];
        let n = norm3(&v);
        v.map(|x| x / n)
    };
    // U = cos(φ/2)I + i sin(φ/2)(k·σ) rotates by +φ about k under U†·U.
    let s = (0.5 * phi).sin();
    [(0.5 * phi).cos(), -s * axis[0], -s * axis[1], -s * axis[2]]
}

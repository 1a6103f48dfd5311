//! Small dense complex matrices for one- and two-qubit work.
//!
//! Everything here is sized for 2×2 and 4×4 operators. Storage is a fixed
//! row-major array so matrices are `Copy` and never touch the heap.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Default tolerance for structural checks (Hermiticity, PSD) in kernels.
pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_JACOBI_SWEEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: max |A - A†| = {residual:e} exceeds {tol:e}")]
    NotHermitian { residual: f64, tol: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    ConvergenceFailure { sweeps: usize, off_norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("negative eigenvalue {value:e} below tolerance")]
    NegativeEigenvalue { value: f64 },
    #[error("unsupported dimension {0}; only 2 and 4 are supported")]
    UnsupportedDimension(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense complex matrix of dimension 2 or 4, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct CMat {
    dim: usize,
    data: [C64; 16],
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "CMat supports dim 2 or 4, got {dim}");
        Self { dim, data: [C64::new(0.0, 0.0); 16] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries. The dimension is inferred from
    /// the slice length (4 or 16).
    pub fn from_row_major(entries: &[C64]) -> Result<Self> {
        let dim = match entries.len() {
            4 => 2,
            16 => 4,
            n => return Err(LinalgError::UnsupportedDimension((n as f64).sqrt() as usize)),
        };
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let mut m = Self::zeros(dim);
        m.data[..entries.len()].copy_from_slice(entries);
        Ok(m)
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Outer product |v⟩⟨w|.
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        assert_eq!(v.len(), w.len());
        let mut m = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in 0..w.len() {
                m[(i, j)] = v[i] * w[j].conj();
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data[..self.dim * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self[(j, i)].conj();
            }
        }
        m
    }

    /// Elementwise complex conjugate in the computational basis.
    pub fn conj(&self) -> Self {
        let mut m = *self;
        for z in m.data.iter_mut() {
            *z = z.conj();
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self[(j, i)];
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for z in m.data.iter_mut() {
            *z *= s;
        }
        m
    }

    pub fn scale_c(&self, s: C64) -> Self {
        let mut m = *self;
        for z in m.data.iter_mut() {
            *z *= s;
        }
        m
    }

    /// `self · other · self†`
    pub fn sandwich(&self, other: &CMat) -> Self {
        *self * *other * self.adjoint()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.entries().iter().zip(other.entries()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// max |A − A†|
    pub fn hermiticity_residual(&self) -> f64 {
        let mut r = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Real part of Tr(self · other) without forming the product.
    pub fn trace_product_re(&self, other: &CMat) -> f64 {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                acc += (self[(i, k)] * other[(k, i)]).re;
            }
        }
        acc
    }

    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let residual = self.hermiticity_residual();
        if residual > tol {
            return Err(LinalgError::NotHermitian { residual, tol });
        }
        Ok(())
    }

    /// (A + A†)/2
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale(0.5)
    }

    /// Shorthand for [`hermitian_eig`] with the default tolerance.
    pub fn eigh(&self) -> Result<EigDecomposition> {
        hermitian_eig(self, DEFAULT_TOL)
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.data[i * self.dim + j]
    }
}

impl Add for CMat {
    type Output = CMat;
    fn add(mut self, rhs: CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for CMat {
    type Output = CMat;
    fn sub(mut self, rhs: CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        self
    }
}

impl Mul for CMat {
    type Output = CMat;
    fn mul(self, rhs: CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat({}x{})[", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:>10.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

pub fn pauli_x() -> CMat {
    let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    CMat::from_row_major(&[o, l, l, o]).unwrap()
}

pub fn pauli_y() -> CMat {
    let (o, i) = (C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    CMat::from_row_major(&[o, -i, i, o]).unwrap()
}

pub fn pauli_z() -> CMat {
    CMat::from_real_diag(&[1.0, -1.0])
}

/// Pauli matrices σ_x, σ_y, σ_z in that order.
pub fn paulis() -> [CMat; 3] {
    [pauli_x(), pauli_y(), pauli_z()]
}

/// Eigenvalues sorted descending with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub eigenvectors: CMat,
}

impl EigDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The `i`-th eigenvector as an owned column.
    pub fn vector(&self, i: usize) -> Vec<C64> {
        (0..self.dim()).map(|r| self.eigenvectors[(r, i)]).collect()
    }

    /// Σᵢ f(λᵢ)|ψᵢ⟩⟨ψᵢ|
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.dim();
        let v = &self.eigenvectors;
        let mut out = CMat::zeros(n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> CMat {
        self.map_spectrum(|l| l)
    }

    /// Expresses `a` in the eigenbasis: V† a V.
    pub fn to_eigenbasis(&self, a: &CMat) -> CMat {
        self.eigenvectors.adjoint() * *a * self.eigenvectors
    }
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// The input must be Hermitian within `hermitian_tol`; its Hermitian part is
/// what gets diagonalized.
pub fn hermitian_eig(a: &CMat, hermitian_tol: f64) -> Result<EigDecomposition> {
    a.check_hermitian(hermitian_tol)?;
    let n = a.dim();
    let mut m = a.hermitian_part();
    let mut v = CMat::identity(n);

    let scale = m.entries().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let threshold = if scale > 0.0 { scale * 1e-17 } else { 0.0 };

    let off_norm = |m: &CMat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)].norm_sqr();
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&m) > threshold {
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(LinalgError::ConvergenceFailure { sweeps, off_norm: off_norm(&m) });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r <= threshold * 1e-3 {
                    continue;
                }
                let phase_conj = (apq / r).conj();
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotation G acting on the (p, q) plane.
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = phase_conj * (-s);
                let g_qq = phase_conj * c;

                // m <- m G
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * g_pp + mkq * g_qp;
                    m[(k, q)] = mkp * g_pq + mkq * g_qq;
                }
                // m <- G† m
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = g_pp.conj() * mpk + g_qp.conj() * mqk;
                    m[(q, k)] = g_pq.conj() * mpk + g_qq.conj() * mqk;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
                // v <- v G
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
    let eigenvalues = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = CMat::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok(EigDecomposition { eigenvalues, eigenvectors: vectors })
}

/// Singular values, descending, by one-sided (Hestenes) Jacobi rotations.
///
/// Column orthogonalization keeps small singular values accurate relative to
/// their own size, which squaring into a Gram matrix would not.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.dim();
    let mut u = *a;
    for sweep in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = C64::new(0.0, 0.0);
                for k in 0..n {
                    alpha += u[(k, p)].norm_sqr();
                    beta += u[(k, q)].norm_sqr();
                    gamma += u[(k, p)].conj() * u[(k, q)];
                }
                let r = gamma.norm();
                if r <= 1e-15 * (alpha * beta).sqrt() || r == 0.0 {
                    continue;
                }
                rotated = true;
                let phase_conj = (gamma / r).conj();
                let tau = (beta - alpha) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let g_qp = phase_conj * (-s);
                let g_qq = phase_conj * c;
                for k in 0..n {
                    let ukp = u[(k, p)];
                    let ukq = u[(k, q)];
                    u[(k, p)] = ukp * c + ukq * g_qp;
                    u[(k, q)] = ukp * s + ukq * g_qq;
                }
            }
        }
        if !rotated {
            let mut sv: Vec<f64> = (0..n).map(|j| (0..n).map(|k| u[(k, j)].norm_sqr()).sum::<f64>().sqrt()).collect();
            sv.sort_by(|x, y| y.total_cmp(x));
            return Ok(sv);
        }
        if sweep + 1 == MAX_JACOBI_SWEEPS {
            break;
        }
    }
    Err(LinalgError::ConvergenceFailure { sweeps: MAX_JACOBI_SWEEPS, off_norm: f64::NAN })
}

/// Kronecker product of two 2×2 matrices: `out[2i+k, 2j+l] = a[i,j]·b[k,l]`.
pub fn kron(a: &CMat, b: &CMat) -> Result<CMat> {
    for m in [a, b] {
        if m.dim() != 2 {
            return Err(LinalgError::DimensionMismatch { expected: 2, found: m.dim() });
        }
    }
    let mut out = CMat::zeros(4);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Partial transpose on the first (slow-index) qubit: the 2×2 blocks are
/// swapped across the block diagonal.
pub fn partial_transpose_a(rho: &CMat) -> Result<CMat> {
    if rho.dim() != 4 {
        return Err(LinalgError::DimensionMismatch { expected: 4, found: rho.dim() });
    }
    let mut out = CMat::zeros(4);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = rho[(2 * j + k, 2 * i + l)];
                }
            }
        }
    }
    Ok(out)
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(a: &CMat) -> Result<f64> {
    let eig = hermitian_eig(a, DEFAULT_TOL)?;
    Ok(eig.eigenvalues.iter().map(|l| l.abs()).sum())
}

/// Base-2 matrix logarithm of a PSD matrix with each eigenvalue shifted by
/// `epsilon` before the log. Eigenvalues in `[-1e-10, 0)` are treated as zero.
pub fn matrix_log2_regularized(rho: &CMat, epsilon: f64) -> Result<CMat> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let eig = hermitian_eig(rho, DEFAULT_TOL)?;
    if let Some(&worst) = eig.eigenvalues.last() {
        if worst < -DEFAULT_TOL {
            return Err(LinalgError::NegativeEigenvalue { value: worst });
        }
    }
    Ok(eig.map_spectrum(|l| (l.max(0.0) + epsilon).log2()))
}

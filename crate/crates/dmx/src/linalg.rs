//! Dense linear-algebra kernels shared by all filter modules.
//!
//! Every rank-sensitive operation (pseudoinverse, numeric rank, range
//! projector, null-space basis) is derived from a single SVD so that rank
//! decisions stay consistent across call sites. The information matrices
//! `P_k` and `B_k` of the filter recursions are singular by design, so
//! pseudoinverses are used everywhere an inverse would appear in the
//! full-rank theory.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors from the dense kernels.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("SVD failed to converge for a {rows}x{cols} matrix")]
    SvdFailed { rows: usize, cols: usize },
    #[error("matrix is not symmetric: asymmetry {asym:.3e} exceeds bound {bound:.3e}")]
    NotSymmetric { asym: f64, bound: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid tolerance configuration: {0}")]
    BadTolerance(String),
}

/// Cutoffs for rank and definiteness decisions.
///
/// The rank cutoff is relative: singular values below
/// `rank_rel_tol * sigma_max` count as zero.
#[derive(Debug, Clone, Copy)]
pub struct ToleranceConfig {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_rel_tol: f64,
    /// Symmetry check bound, relative to the largest entry magnitude.
    pub sym_tol: f64,
    /// Minimum-eigenvalue slack for positive-definiteness checks.
    pub spd_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_rel_tol: 1e-10,
            sym_tol: 1e-8,
            spd_tol: 1e-9,
        }
    }
}

impl ToleranceConfig {
    /// All tolerances must lie strictly inside (0, 1).
    pub fn validate(&self) -> Result<(), LinalgError> {
        for (name, v) in [
            ("rank_rel_tol", self.rank_rel_tol),
            ("sym_tol", self.sym_tol),
            ("spd_tol", self.spd_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(LinalgError::BadTolerance(format!(
                    "{name} = {v} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// One-sided Jacobi SVD.
///
/// `w` holds the rotated copy of the input whose columns are `sigma_j u_j`
/// (pairwise orthogonal at convergence) and `v` accumulates the rotations,
/// so `A = W V'` with `V` orthogonal to machine precision and one sigma per
/// input column, sorted descending. The tight orthogonality of `V` is what
/// keeps pseudoinverse identities accurate on ill-conditioned input, where
/// the amplification factor is the condition number.
#[derive(Debug, Clone)]
pub struct JacobiSvd {
    w: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: Vec<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 60;

fn jacobi_svd(a: &DMatrix<f64>) -> Result<JacobiSvd, LinalgError> {
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::identity(n, n);
    // Columns at roundoff level carry no usable direction; orthogonalizing
    // them would cycle forever on noise.
    let tiny = f64::EPSILON * a.amax() * (a.nrows().max(n) as f64);
    let tiny2 = tiny * tiny;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).dot(&w.column(p));
                let beta = w.column(q).dot(&w.column(q));
                if alpha <= tiny2 || beta <= tiny2 {
                    continue;
                }
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let (mp, mq) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * mp - s * mq;
                        mat[(i, q)] = s * mp + c * mq;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::SvdFailed {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let mut w_sorted = DMatrix::zeros(w.nrows(), n);
    let mut v_sorted = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        w_sorted.column_mut(dst).copy_from(&w.column(src));
        v_sorted.column_mut(dst).copy_from(&v.column(src));
        sigma.push(norms[src]);
    }
    Ok(JacobiSvd {
        w: w_sorted,
        v: v_sorted,
        sigma,
    })
}

impl JacobiSvd {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// Left singular vector for index `j` (requires `sigma_j > 0`).
    pub fn left_vector(&self, j: usize) -> DVector<f64> {
        self.w.column(j) / self.sigma[j]
    }

    /// Right singular vectors as columns of an orthogonal matrix (full,
    /// one column per input column).
    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    fn rank(&self, cutoff: f64) -> usize {
        self.sigma.iter().filter(|&&s| s >= cutoff).count()
    }
}

/// Factor a matrix once; shared backbone of the kernels below.
pub fn svd(m: &DMatrix<f64>) -> Result<JacobiSvd, LinalgError> {
    check_finite(m)?;
    jacobi_svd(m)
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values below `rank_rel_tol * sigma_max` are treated as zero.
pub fn pinv(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>, LinalgError> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(DMatrix::zeros(m.ncols(), m.nrows()));
    }
    let f = jacobi_svd(m)?;
    let sigma_max = f.sigma_max();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    if sigma_max <= 0.0 {
        return Ok(out);
    }
    let cutoff = tol.rank_rel_tol * sigma_max;
    // pinv = sum_j v_j w_j' / sigma_j^2 over retained singular values.
    for j in 0..f.sigma.len() {
        if f.sigma[j] >= cutoff {
            let scale = 1.0 / (f.sigma[j] * f.sigma[j]);
            out += f.v.column(j) * (f.w.column(j).transpose() * scale);
        }
    }
    Ok(out)
}

/// Number of singular values at or above the relative cutoff; 0 for the zero matrix.
pub fn numeric_rank(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<usize, LinalgError> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let f = jacobi_svd(m)?;
    if f.sigma_max() <= 0.0 {
        return Ok(0);
    }
    Ok(f.rank(tol.rank_rel_tol * f.sigma_max()))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn require_symmetric(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let scale = m.amax().max(1.0);
    let asym = asymmetry(m);
    let bound = tol.sym_tol * scale;
    if asym > bound {
        return Err(LinalgError::NotSymmetric { asym, bound });
    }
    Ok(())
}

/// `(M + M') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Pseudoinverse, range projector, rank and a near-cutoff warning for a
/// symmetric matrix, all from one SVD.
#[derive(Debug, Clone)]
pub struct SymmetricPinv {
    pub pinv: DMatrix<f64>,
    /// Orthogonal projector onto the range, `Pi = pinv(M) * M`.
    pub projector: DMatrix<f64>,
    pub rank: usize,
    /// True when some singular value sits within a factor 10 of the rank
    /// cutoff, i.e. the rank decision is fragile.
    pub near_rank_boundary: bool,
}

/// Decompose a symmetric matrix once and derive all rank-dependent pieces.
///
/// Input asymmetry up to `sym_tol` is tolerated and symmetrized away before
/// the SVD so that drift cannot flip rank decisions.
pub fn symmetric_pinv(
    m: &DMatrix<f64>,
    tol: &ToleranceConfig,
) -> Result<SymmetricPinv, LinalgError> {
    check_finite(m)?;
    require_symmetric(m, tol)?;
    if m.nrows() == 0 {
        return Ok(SymmetricPinv {
            pinv: m.clone(),
            projector: m.clone(),
            rank: 0,
            near_rank_boundary: false,
        });
    }
    let sym = symmetrize(m);
    let f = jacobi_svd(&sym)?;
    let sigma_max = f.sigma_max();
    let n = sym.nrows();
    if sigma_max <= 0.0 {
        return Ok(SymmetricPinv {
            pinv: DMatrix::zeros(n, n),
            projector: DMatrix::zeros(n, n),
            rank: 0,
            near_rank_boundary: false,
        });
    }
    let cutoff = tol.rank_rel_tol * sigma_max;
    let mut pinv = DMatrix::zeros(n, n);
    let mut projector = DMatrix::zeros(n, n);
    let mut rank = 0;
    let mut near = false;
    for j in 0..f.sigma.len() {
        let s = f.sigma[j];
        if s >= cutoff / 10.0 && s <= cutoff * 10.0 {
            near = true;
        }
        if s >= cutoff {
            rank += 1;
            let vj = f.v.column(j);
            pinv += vj * (f.w.column(j).transpose() / (s * s));
            // For symmetric input the left vectors agree with v_j up to
            // sign, so v_j v_j' is the clean projector increment.
            projector += vj * vj.transpose();
        }
    }
    Ok(SymmetricPinv {
        pinv: symmetrize(&pinv),
        projector: symmetrize(&projector),
        rank,
        near_rank_boundary: near,
    })
}

/// Orthogonal projector onto the range of a symmetric matrix.
pub fn range_projector(
    m: &DMatrix<f64>,
    tol: &ToleranceConfig,
) -> Result<DMatrix<f64>, LinalgError> {
    Ok(symmetric_pinv(m, tol)?.projector)
}

/// Symmetric positive definite check: symmetric within `sym_tol` and all
/// eigenvalues above `spd_tol * max(1, sigma_max)`.
pub fn is_spd(m: &DMatrix<f64>, tol: &ToleranceConfig) -> bool {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return false;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if require_symmetric(m, tol).is_err() {
        return false;
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let max_abs = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    min > tol.spd_tol * max_abs.max(1.0)
}

/// Orthonormal basis of the null space of `m`, as the columns of an
/// `ncols x nullity` matrix. Columns are ordered by the descending
/// singular-value order of the SVD (smallest singular directions last).
pub fn null_basis(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>, LinalgError> {
    check_finite(m)?;
    let n = m.ncols();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.nrows() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let f = jacobi_svd(m)?;
    let sigma_max = f.sigma_max();
    let cutoff = tol.rank_rel_tol * sigma_max;
    let mut cols = Vec::new();
    for j in 0..n {
        if sigma_max <= 0.0 || f.sigma[j] < cutoff {
            cols.push(f.v.column(j).into_owned());
        }
    }
    let mut basis = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        basis.column_mut(j).copy_from(c);
    }
    Ok(basis)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn inv_spd(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>, LinalgError> {
    check_finite(m)?;
    require_symmetric(m, tol)?;
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|ch| ch.inverse())
        .ok_or(LinalgError::NotPositiveDefinite)
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Eigenvalues below `-spd_tol * max(1, |lambda|_max)` are rejected; small
/// negative drift is clamped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>, LinalgError> {
    check_finite(m)?;
    require_symmetric(m, tol)?;
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let max_abs = eig.eigenvalues.amax().max(1.0);
    let mut scaled = eig.eigenvalues.clone();
    for v in scaled.iter_mut() {
        if *v < -tol.spd_tol * max_abs {
            return Err(LinalgError::NotPositiveDefinite);
        }
        *v = v.max(0.0).sqrt();
    }
    let d = DMatrix::from_diagonal(&scaled);
    Ok(symmetrize(
        &(&eig.eigenvectors * d * eig.eigenvectors.transpose()),
    ))
}

/// Quadratic form `(M x, x)`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (m * x).dot(x)
}

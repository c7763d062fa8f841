//! Recursive discrete-time minimax filter for descriptor models.
//!
//! The filter carries the information pair `(P_k, r_k)` and the scalar
//! `alpha_k`:
//!
//! ```text
//! P_0 = F_0' S F_0 + H_0' R_0 H_0,
//! B_k = P_k + C_k' S_k C_k,
//! P_k = H_k' R_k H_k + F_k' [S_{k-1} - S_{k-1} C_{k-1} B_{k-1}^+ C_{k-1}' S_{k-1}] F_k,
//! r_k = F_k' S_{k-1} C_{k-1} B_{k-1}^+ r_{k-1} + H_k' R_k y_k,
//! alpha_k = alpha_{k-1} + (R_k y_k, y_k) - (B_{k-1}^+ r_{k-1}, r_{k-1}).
//! ```
//!
//! The state estimate is `x_hat = P^+ r` and the set of states consistent
//! with the data is the (possibly degenerate) ellipsoid
//! `(P (x - x_hat), x - x_hat) <= beta_hat` with
//! `beta_hat = 1 - alpha + (P x_hat, x_hat)`. Directions outside the range
//! of `P` have infinite worst-case error; their count is the non-causality
//! index `n - rank P`.
//!
//! `P_k` may be singular at any step, which is the point: rank deficiency is
//! reported, not worked around. A full-column-rank Kalman recursion (explicit
//! inverses) and a batch least-squares oracle are included for
//! cross-validation on models where they apply.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError, ToleranceConfig};
use crate::model::DiscreteDescriptorModel;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("stacked [F_k; H_k] has rank {rank} < n = {n} at step {step}")]
    RankDeficient { step: usize, rank: usize, n: usize },
    #[error("matrix inversion failed at step {step}: {source}")]
    Singular { step: usize, source: LinalgError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Recursion carrier `(k, P_k, r_k, alpha_k)`.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub k: usize,
    pub p: DMatrix<f64>,
    pub r: DVector<f64>,
    pub alpha: f64,
}

/// Model slice consumed by one filter step `k-1 -> k`.
#[derive(Debug, Clone, Copy)]
pub struct StepMatrices<'a> {
    pub f_k: &'a DMatrix<f64>,
    pub c_prev: &'a DMatrix<f64>,
    pub h_k: &'a DMatrix<f64>,
    pub s_prev: &'a DMatrix<f64>,
    pub r_k: &'a DMatrix<f64>,
}

impl DiscreteDescriptorModel {
    /// Borrow the matrices of step `k` (requires `1 <= k <= horizon`).
    pub fn step_matrices(&self, k: usize) -> StepMatrices<'_> {
        StepMatrices {
            f_k: &self.f[k],
            c_prev: &self.c[k - 1],
            h_k: &self.h[k],
            s_prev: &self.s_seq[k - 1],
            r_k: &self.r_seq[k],
        }
    }
}

/// Initial filter state from `y_0`.
///
/// `P_0 = F_0' S F_0 + H_0' R_0 H_0` and `r_0 = H_0' R_0 y_0`; when a
/// `q_anchor` is supplied, `r_0` gains the term `F_0' S q` (the form used by
/// the full-rank equivalence), otherwise the anchor-free form is used.
pub fn filter_init(
    model: &DiscreteDescriptorModel,
    y0: &DVector<f64>,
    q_anchor: Option<&DVector<f64>>,
) -> Result<FilterState, FilterError> {
    if y0.len() != model.p {
        return Err(FilterError::Dimension(format!(
            "y0 has length {}, expected {}",
            y0.len(),
            model.p
        )));
    }
    if let Some(q) = q_anchor {
        if q.len() != model.m {
            return Err(FilterError::Dimension(format!(
                "q anchor has length {}, expected {}",
                q.len(),
                model.m
            )));
        }
    }
    let f0 = &model.f[0];
    let h0 = &model.h[0];
    let r0w = &model.r_seq[0];
    let p = linalg::symmetrize(&(f0.transpose() * &model.s * f0 + h0.transpose() * r0w * h0));
    let mut r = h0.transpose() * (r0w * y0);
    if let Some(q) = q_anchor {
        r += f0.transpose() * (&model.s * q);
    }
    let alpha = (r0w * y0).dot(y0);
    Ok(FilterState { k: 0, p, r, alpha })
}

/// Advance the filter one step.
pub fn filter_step(
    prev: &FilterState,
    step: &StepMatrices<'_>,
    y_k: &DVector<f64>,
    tol: &ToleranceConfig,
) -> Result<FilterState, FilterError> {
    let n = prev.p.nrows();
    if step.f_k.ncols() != n || step.c_prev.ncols() != n || step.h_k.ncols() != n {
        return Err(FilterError::Dimension("state dimension".into()));
    }
    if y_k.len() != step.h_k.nrows() {
        return Err(FilterError::Dimension(format!(
            "y has length {}, expected {}",
            y_k.len(),
            step.h_k.nrows()
        )));
    }
    let b_prev =
        linalg::symmetrize(&(&prev.p + step.c_prev.transpose() * step.s_prev * step.c_prev));
    let b_pinv = linalg::symmetric_pinv(&b_prev, tol)?.pinv;
    // S_{k-1} C_{k-1} B^+ appears in both the P and r updates.
    let scb = step.s_prev * step.c_prev * &b_pinv;
    let bracket = linalg::symmetrize(&(step.s_prev - &scb * step.c_prev.transpose() * step.s_prev));
    let p = linalg::symmetrize(
        &(step.h_k.transpose() * step.r_k * step.h_k + step.f_k.transpose() * &bracket * step.f_k),
    );
    let r = step.f_k.transpose() * (&scb * &prev.r) + step.h_k.transpose() * (step.r_k * y_k);
    let alpha = prev.alpha + (step.r_k * y_k).dot(y_k) - (&b_pinv * &prev.r).dot(&prev.r);
    Ok(FilterState {
        k: prev.k + 1,
        p,
        r,
        alpha,
    })
}

/// Run the filter over a measurement sequence, returning the state after
/// every step (index `k` holds the state once `y_k` is absorbed).
pub fn run_minimax(
    model: &DiscreteDescriptorModel,
    ys: &[DVector<f64>],
    q_anchor: Option<&DVector<f64>>,
    tol: &ToleranceConfig,
) -> Result<Vec<FilterState>, FilterError> {
    if ys.is_empty() || ys.len() > model.horizon + 1 {
        return Err(FilterError::Dimension(format!(
            "{} measurements for horizon {}",
            ys.len(),
            model.horizon
        )));
    }
    let mut states = Vec::with_capacity(ys.len());
    states.push(filter_init(model, &ys[0], q_anchor)?);
    for (k, y) in ys.iter().enumerate().skip(1) {
        let next = filter_step(states.last().unwrap(), &model.step_matrices(k), y, tol)?;
        states.push(next);
    }
    Ok(states)
}

/// Point estimate, consistency level and observability data at one step.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// Central estimate `P^+ r`; always inside the observable subspace.
    pub x_hat: DVector<f64>,
    /// Ellipsoid level `1 - alpha + (P x_hat, x_hat)`.
    pub beta_hat: f64,
    /// Orthogonal projector onto the observable subspace.
    pub projector: DMatrix<f64>,
    /// Non-causality index `n - rank P`.
    pub index: usize,
    /// Cached `P^+` for directional queries.
    pub p_pinv: DMatrix<f64>,
    /// Some singular value of `P` sits within a factor 10 of the rank
    /// cutoff: rank decisions at this step are fragile.
    pub near_rank_boundary: bool,
    /// `beta_hat < -1e-8`: the measurements are incompatible with the
    /// uncertainty set. Reported, never raised; the filter keeps running.
    pub inconsistent: bool,
}

const INCONSISTENCY_SLACK: f64 = 1e-8;
const MEMBERSHIP_SLACK: f64 = 1e-9;

/// Evaluate the a posteriori estimate at the current step.
pub fn estimate(state: &FilterState, tol: &ToleranceConfig) -> Result<EstimateReport, FilterError> {
    let bundle = linalg::symmetric_pinv(&state.p, tol)?;
    let x_hat = &bundle.pinv * &state.r;
    let beta_hat = 1.0 - state.alpha + linalg::quad_form(&state.p, &x_hat);
    let n = state.p.nrows();
    Ok(EstimateReport {
        x_hat,
        beta_hat,
        projector: bundle.projector,
        index: n - bundle.rank,
        p_pinv: bundle.pinv,
        near_rank_boundary: bundle.near_rank_boundary,
        inconsistent: beta_hat < -INCONSISTENCY_SLACK,
    })
}

/// Worst-case estimation error in one direction: finite exactly on the
/// observable subspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionalError {
    Finite(f64),
    Infinite,
}

impl DirectionalError {
    pub fn is_finite(&self) -> bool {
        matches!(self, DirectionalError::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            DirectionalError::Finite(v) => Some(*v),
            DirectionalError::Infinite => None,
        }
    }
}

impl std::fmt::Display for DirectionalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DirectionalError::Finite(v) => write!(f, "{v}"),
            DirectionalError::Infinite => write!(f, "inf"),
        }
    }
}

/// `rho_hat(l) = beta_hat^(1/2) (P^+ l, l)^(1/2)` for observable `l`,
/// infinite otherwise. Negative `beta_hat` (inconsistent data) is clamped
/// to zero; check [`EstimateReport::inconsistent`] separately.
pub fn directional_error(
    report: &EstimateReport,
    l: &DVector<f64>,
    tol: &ToleranceConfig,
) -> DirectionalError {
    let deviation = (&report.projector * l - l).norm();
    if deviation > tol.rank_rel_tol * l.norm() {
        return DirectionalError::Infinite;
    }
    let quad = (&report.p_pinv * l).dot(l).max(0.0);
    DirectionalError::Finite((report.beta_hat.max(0.0) * quad).sqrt())
}

/// Whether `x` lies in the a posteriori ellipsoid
/// `(P (x - x_hat), x - x_hat) <= beta_hat` (with a small absolute slack).
pub fn membership(report: &EstimateReport, state: &FilterState, x: &DVector<f64>) -> bool {
    let d = x - &report.x_hat;
    linalg::quad_form(&state.p, &d) <= report.beta_hat + MEMBERSHIP_SLACK
}

/// Carrier of the full-column-rank Kalman recursion `(P_{k|k}, x_{k|k})`.
#[derive(Debug, Clone)]
pub struct KalmanFullRankState {
    pub k: usize,
    pub p_filt: DMatrix<f64>,
    pub x_filt: DVector<f64>,
}

fn check_stacked_rank(
    f_k: &DMatrix<f64>,
    h_k: &DMatrix<f64>,
    step: usize,
    tol: &ToleranceConfig,
) -> Result<(), FilterError> {
    let n = f_k.ncols();
    let mut stacked = DMatrix::zeros(f_k.nrows() + h_k.nrows(), n);
    stacked.rows_mut(0, f_k.nrows()).copy_from(f_k);
    stacked.rows_mut(f_k.nrows(), h_k.nrows()).copy_from(h_k);
    let rank = linalg::numeric_rank(&stacked, tol)?;
    if rank < n {
        return Err(FilterError::RankDeficient { step, rank, n });
    }
    Ok(())
}

/// Initialize the full-column-rank recursion:
/// `P_{0|0}^{-1} = F_0' S F_0 + H_0' R_0 H_0`,
/// `x_{0|0} = P_{0|0} (H_0' R_0 y_0 [+ F_0' S q])`.
pub fn kalman_init(
    model: &DiscreteDescriptorModel,
    y0: &DVector<f64>,
    q_anchor: Option<&DVector<f64>>,
    tol: &ToleranceConfig,
) -> Result<KalmanFullRankState, FilterError> {
    check_stacked_rank(&model.f[0], &model.h[0], 0, tol)?;
    let info = filter_init(model, y0, q_anchor)?;
    let p_filt = linalg::inv_spd(&info.p, tol)
        .map_err(|source| FilterError::Singular { step: 0, source })?;
    let x_filt = &p_filt * &info.r;
    Ok(KalmanFullRankState {
        k: 0,
        p_filt,
        x_filt,
    })
}

/// One step of the full-column-rank recursion with explicit inverses:
/// `A_{k-1}^{-1} = S_{k-1}^{-1} + C_{k-1} P_{k-1|k-1} C_{k-1}'`,
/// `P_{k|k}^{-1} = F_k' A_{k-1} F_k + H_k' R_k H_k`,
/// `x_{k|k} = P_{k|k} (F_k' A_{k-1} C_{k-1} x_{k-1|k-1} + H_k' R_k y_k)`.
pub fn kalman_step(
    prev: &KalmanFullRankState,
    step: &StepMatrices<'_>,
    y_k: &DVector<f64>,
    tol: &ToleranceConfig,
) -> Result<KalmanFullRankState, FilterError> {
    let k = prev.k + 1;
    check_stacked_rank(step.f_k, step.h_k, k, tol)?;
    let s_inv = linalg::inv_spd(step.s_prev, tol)
        .map_err(|source| FilterError::Singular { step: k, source })?;
    let a_inv = linalg::symmetrize(&(s_inv + step.c_prev * &prev.p_filt * step.c_prev.transpose()));
    let a_prev =
        linalg::inv_spd(&a_inv, tol).map_err(|source| FilterError::Singular { step: k, source })?;
    let p_info = linalg::symmetrize(
        &(step.f_k.transpose() * &a_prev * step.f_k + step.h_k.transpose() * step.r_k * step.h_k),
    );
    let p_filt = linalg::inv_spd(&p_info, tol)
        .map_err(|source| FilterError::Singular { step: k, source })?;
    let x_filt = &p_filt
        * (step.f_k.transpose() * (&a_prev * (step.c_prev * &prev.x_filt))
            + step.h_k.transpose() * (step.r_k * y_k));
    Ok(KalmanFullRankState { k, p_filt, x_filt })
}

/// Batch verification oracle: solve the whole-trajectory regularized
/// least-squares problem
///
/// ```text
/// min over (x_0..x_tau) of (S F_0 x_0, F_0 x_0)
///     + sum_{k<tau} (S_k (F_{k+1} x_{k+1} - C_k x_k), F_{k+1} x_{k+1} - C_k x_k)
///     + sum_{k<=tau} (R_k (y_k - H_k x_k), y_k - H_k x_k)
/// ```
///
/// via a min-norm pseudoinverse solve of the weighted stacked system.
/// Returns the `tau`-th state block and the attained minimum.
#[allow(clippy::needless_range_loop)]
pub fn batch_oracle(
    model: &DiscreteDescriptorModel,
    ys: &[DVector<f64>],
    tau: usize,
    tol: &ToleranceConfig,
) -> Result<(DVector<f64>, f64), FilterError> {
    if tau > model.horizon || ys.len() <= tau {
        return Err(FilterError::Dimension(format!(
            "tau {tau} needs {} measurements within horizon {}",
            tau + 1,
            model.horizon
        )));
    }
    let (n, m, p) = (model.n, model.m, model.p);
    let rows = m + tau * m + (tau + 1) * p;
    let cols = (tau + 1) * n;
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    let sqrt_s = linalg::sqrt_psd(&model.s, tol)?;
    a.view_mut((0, 0), (m, n))
        .copy_from(&(&sqrt_s * &model.f[0]));
    let mut row = m;
    for k in 0..tau {
        let w = linalg::sqrt_psd(&model.s_seq[k], tol)?;
        a.view_mut((row, k * n), (m, n))
            .copy_from(&(-(&w * &model.c[k])));
        a.view_mut((row, (k + 1) * n), (m, n))
            .copy_from(&(&w * &model.f[k + 1]));
        row += m;
    }
    for k in 0..=tau {
        let w = linalg::sqrt_psd(&model.r_seq[k], tol)?;
        a.view_mut((row, k * n), (p, n))
            .copy_from(&(&w * &model.h[k]));
        b.rows_mut(row, p).copy_from(&(&w * &ys[k]));
        row += p;
    }
    let x = linalg::pinv(&a, tol)? * &b;
    let psi_min = (&a * &x - &b).norm_squared();
    Ok((x.rows(tau * n, n).into_owned(), psi_min))
}

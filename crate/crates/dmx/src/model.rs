//! Discrete-time uncertain descriptor models and trajectory simulation.
//!
//! The model is
//!
//! ```text
//! F_{k+1} x_{k+1} - C_k x_k = f_k,   F_0 x_0 = q,
//! y_k = H_k x_k + g_k,               k = 0..N,
//! ```
//!
//! with the joint disturbance `xi = (q, {f_k}, {g_k})` confined to the
//! ellipsoid `Psi(xi) <= 1`, where
//!
//! ```text
//! Psi_tau(xi) = (S q, q) + sum_{k<tau} (S_k f_k, f_k) + sum_{k<=tau} (R_k g_k, g_k).
//! ```
//!
//! `F_k` may be rank deficient or non-square, so a trajectory is not fully
//! determined by the equations: the component of `x_{k+1}` in the null space
//! of `F_{k+1}` is a free input that the simulator takes from a user-supplied
//! schedule.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, LinalgError, ToleranceConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weight matrix {0} is not symmetric positive definite")]
    WeightNotSpd(String),
    #[error(
        "step {step}: right-hand side is outside the range of F_{} (residual {residual:.3e})",
        step
    )]
    InfeasibleStep { step: usize, residual: f64 },
    #[error(
        "free-component schedule at step {step} has length {got}, null space has dimension {want}"
    )]
    FreeScheduleMismatch {
        step: usize,
        got: usize,
        want: usize,
    },
    #[error("margin {0} must lie in (0, 1]")]
    BadMargin(f64),
    #[error("fixed q has weighted norm {q_cost} exceeding the requested margin {margin}")]
    QExceedsMargin { q_cost: f64, margin: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Time-indexed matrices and weights of the discrete descriptor model.
///
/// Sequence lengths: `f` and `h` carry `N+1` entries (`F_0..F_N`,
/// `H_0..H_N`), `c` and `s_seq` carry `N` (`C_0..C_{N-1}`, `S_0..S_{N-1}`),
/// `r_seq` carries `N+1`.
#[derive(Debug, Clone)]
pub struct DiscreteDescriptorModel {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
    pub f: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
    pub s: DMatrix<f64>,
    pub s_seq: Vec<DMatrix<f64>>,
    pub r_seq: Vec<DMatrix<f64>>,
}

impl DiscreteDescriptorModel {
    /// Validate dimensions and weight definiteness.
    pub fn new(
        f: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        h: Vec<DMatrix<f64>>,
        s: DMatrix<f64>,
        s_seq: Vec<DMatrix<f64>>,
        r_seq: Vec<DMatrix<f64>>,
        tol: &ToleranceConfig,
    ) -> Result<Self, ModelError> {
        if f.is_empty() || h.is_empty() {
            return Err(ModelError::Dimension("F and H must be non-empty".into()));
        }
        let horizon = f.len() - 1;
        let m = f[0].nrows();
        let n = f[0].ncols();
        let p = h[0].nrows();
        if c.len() != horizon
            || h.len() != horizon + 1
            || s_seq.len() != horizon
            || r_seq.len() != horizon + 1
        {
            return Err(ModelError::Dimension(format!(
                "sequence lengths inconsistent with horizon {horizon}: C {}, H {}, S_seq {}, R_seq {}",
                c.len(),
                h.len(),
                s_seq.len(),
                r_seq.len()
            )));
        }
        for (name, seq, rows, cols) in [("F", &f, m, n), ("C", &c, m, n), ("H", &h, p, n)] {
            for (k, mat) in seq.iter().enumerate() {
                if mat.nrows() != rows || mat.ncols() != cols {
                    return Err(ModelError::Dimension(format!(
                        "{name}[{k}] is {}x{}, expected {rows}x{cols}",
                        mat.nrows(),
                        mat.ncols()
                    )));
                }
            }
        }
        if !linalg::is_spd(&s, tol) {
            return Err(ModelError::WeightNotSpd("S".into()));
        }
        for (k, mat) in s_seq.iter().enumerate() {
            if mat.nrows() != m || !linalg::is_spd(mat, tol) {
                return Err(ModelError::WeightNotSpd(format!("S_{k}")));
            }
        }
        for (k, mat) in r_seq.iter().enumerate() {
            if mat.nrows() != p || !linalg::is_spd(mat, tol) {
                return Err(ModelError::WeightNotSpd(format!("R_{k}")));
            }
        }
        Ok(Self {
            n,
            m,
            p,
            horizon,
            f,
            c,
            h,
            s,
            s_seq,
            r_seq,
        })
    }
}

/// One admissible realization of the joint disturbance `(q, {f_k}, {g_k})`.
#[derive(Debug, Clone)]
pub struct DisturbanceRealization {
    pub q: DVector<f64>,
    pub f: Vec<DVector<f64>>,
    pub g: Vec<DVector<f64>>,
}

impl DisturbanceRealization {
    /// All-zero realization for a given model.
    pub fn zero(model: &DiscreteDescriptorModel) -> Self {
        Self {
            q: DVector::zeros(model.m),
            f: vec![DVector::zeros(model.m); model.horizon],
            g: vec![DVector::zeros(model.p); model.horizon + 1],
        }
    }

    /// Replace `q` by a fixed anchor and rescale `f`, `g` so the total cost
    /// returns to `margin`. Used by scenarios that pin part of the initial
    /// state exactly (the anchor must not already exhaust the budget).
    pub fn with_fixed_q(
        mut self,
        model: &DiscreteDescriptorModel,
        q: DVector<f64>,
        margin: f64,
    ) -> Result<Self, ModelError> {
        let q_cost = linalg::quad_form(&model.s, &q);
        if q_cost > margin {
            return Err(ModelError::QExceedsMargin { q_cost, margin });
        }
        self.q = q;
        let mut fg_cost = 0.0;
        for (k, fk) in self.f.iter().enumerate() {
            fg_cost += linalg::quad_form(&model.s_seq[k], fk);
        }
        for (k, gk) in self.g.iter().enumerate() {
            fg_cost += linalg::quad_form(&model.r_seq[k], gk);
        }
        if fg_cost > 0.0 {
            let scale = ((margin - q_cost) / fg_cost).sqrt();
            for fk in &mut self.f {
                *fk *= scale;
            }
            for gk in &mut self.g {
                *gk *= scale;
            }
        }
        Ok(self)
    }
}

/// A realized state/output path of the model.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

/// Quadratic disturbance cost accumulated up to step `tau`.
///
/// Counts `f_0..f_{tau-1}` and `g_0..g_tau`, matching the set of terms the
/// filter has seen once `y_tau` is processed; monotone nondecreasing in
/// `tau`.
pub fn psi_value(
    model: &DiscreteDescriptorModel,
    d: &DisturbanceRealization,
    tau: usize,
) -> Result<f64, ModelError> {
    if tau > model.horizon {
        return Err(ModelError::Dimension(format!(
            "tau {tau} exceeds horizon {}",
            model.horizon
        )));
    }
    if d.q.len() != model.m || d.f.len() != model.horizon || d.g.len() != model.horizon + 1 {
        return Err(ModelError::Dimension("realization shape".into()));
    }
    let mut total = linalg::quad_form(&model.s, &d.q);
    for k in 0..tau {
        total += linalg::quad_form(&model.s_seq[k], &d.f[k]);
    }
    for k in 0..=tau {
        total += linalg::quad_form(&model.r_seq[k], &d.g[k]);
    }
    Ok(total)
}

/// Sample a Gaussian realization and rescale it so the full-horizon cost
/// equals `margin`. Deterministic for a given seed.
pub fn sample_disturbance(
    model: &DiscreteDescriptorModel,
    seed: u64,
    margin: f64,
) -> Result<DisturbanceRealization, ModelError> {
    if !(margin > 0.0 && margin <= 1.0) {
        return Err(ModelError::BadMargin(margin));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal =
        |len: usize| DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut d = DisturbanceRealization {
        q: normal(model.m),
        f: (0..model.horizon).map(|_| normal(model.m)).collect(),
        g: (0..=model.horizon).map(|_| normal(model.p)).collect(),
    };
    let total = psi_value(model, &d, model.horizon)?;
    if total > 0.0 {
        let scale = (margin / total).sqrt();
        d.q *= scale;
        for fk in &mut d.f {
            *fk *= scale;
        }
        for gk in &mut d.g {
            *gk *= scale;
        }
    }
    Ok(d)
}

const FEASIBILITY_TOL: f64 = 1e-10;

/// Simulate a trajectory from a disturbance realization.
///
/// At every step the determined part of the state is
/// `pinv(F_{k+1}) (C_k x_k + f_k)` and the free part is `Z_{k+1} free[k+1]`,
/// where `Z_{k+1}` is the orthonormal null-space basis of `F_{k+1}`; the
/// initial state is built the same way from `F_0 x_0 = q`. `free` entries
/// beyond the slice are taken as zero; present entries must match the null
/// space dimension of their step.
pub fn propagate(
    model: &DiscreteDescriptorModel,
    d: &DisturbanceRealization,
    free: &[DVector<f64>],
) -> Result<Trajectory, ModelError> {
    let tol = ToleranceConfig::default();
    if d.q.len() != model.m || d.f.len() != model.horizon || d.g.len() != model.horizon + 1 {
        return Err(ModelError::Dimension("realization shape".into()));
    }
    let mut x = Vec::with_capacity(model.horizon + 1);
    for k in 0..=model.horizon {
        let rhs = if k == 0 {
            d.q.clone()
        } else {
            &model.c[k - 1] * &x[k - 1] + &d.f[k - 1]
        };
        let fk = &model.f[k];
        let determined = linalg::pinv(fk, &tol)? * &rhs;
        let basis = linalg::null_basis(fk, &tol)?;
        let nullity = basis.ncols();
        let free_k = match free.get(k) {
            Some(v) => {
                if v.len() != nullity {
                    return Err(ModelError::FreeScheduleMismatch {
                        step: k,
                        got: v.len(),
                        want: nullity,
                    });
                }
                v.clone()
            }
            None => DVector::zeros(nullity),
        };
        let xk = determined + &basis * free_k;
        let residual = (fk * &xk - &rhs).amax();
        if residual > FEASIBILITY_TOL * rhs.amax().max(1.0) {
            return Err(ModelError::InfeasibleStep { step: k, residual });
        }
        x.push(xk);
    }
    let y = (0..=model.horizon)
        .map(|k| &model.h[k] * &x[k] + &d.g[k])
        .collect();
    Ok(Trajectory { x, y })
}

/// A ready-to-run scenario: model, free-component schedule and the initial
/// anchor `q` that fixes the determined part of `x_0`.
#[derive(Debug, Clone)]
pub struct BuiltinScenario {
    pub model: DiscreteDescriptorModel,
    pub free: Vec<DVector<f64>>,
    pub q: DVector<f64>,
}

fn diag(entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(entries))
}

/// The built-in three-state, four-output scenario with alternating
/// observability.
///
/// State matrices: `F_k = [[1,0,0],[0,k,0]]` (third state never enters the
/// dynamics), constant `C = [[1/40,1/2,0],[1/10,1/4,3/10]]`; the output
/// coefficient schedules switch the third state in and out of the
/// measurements with period two, which makes the non-causality index
/// alternate. Weights: `R_k = diag(1/11,1/22,1/33,1/44)/(k+1)`,
/// `S_k = diag(1/(35(k+1)), 1/(70(k+1)))`, `S = diag(1/60, 1/120)`.
///
/// The first two components of the initial state are pinned to `(1, -3)`;
/// the third state is a free input and this generator uses the fixed
/// schedule `x_{3,k} = cos(0.4 k)`.
pub fn builtin_section3(horizon: usize) -> BuiltinScenario {
    let n = 3;
    let mut f = Vec::with_capacity(horizon + 1);
    let mut h = Vec::with_capacity(horizon + 1);
    let mut r_seq = Vec::with_capacity(horizon + 1);
    let mut s_seq = Vec::with_capacity(horizon);
    for k in 0..=horizon {
        let kf = k as f64;
        f.push(DMatrix::from_row_slice(
            2,
            n,
            &[1.0, 0.0, 0.0, 0.0, kf, 0.0],
        ));
        let (h1, h2, h4, h5, h6, h7, h8) = if k == 0 {
            (0.6, 0.96, 1000.0, 2.3, 0.0, 0.0, 1.0)
        } else {
            (0.6 * kf, kf, 100.0 * kf, kf / 100.0, 0.05, 10.0 * kf, 0.0)
        };
        let h3 = if k % 2 == 1 { 150.0 * kf } else { 0.0 };
        h.push(DMatrix::from_row_slice(
            4,
            n,
            &[h1, h2, 0.0, h4, h5, 0.0, h8, 0.005, h3, h6, h7, 0.0],
        ));
        let rk = 1.0 / (kf + 1.0);
        r_seq.push(diag(&[rk / 11.0, rk / 22.0, rk / 33.0, rk / 44.0]));
        if k < horizon {
            s_seq.push(diag(&[
                1.0 / (35.0 * (kf + 1.0)),
                1.0 / (70.0 * (kf + 1.0)),
            ]));
        }
    }
    let c = vec![DMatrix::from_row_slice(2, n, &[1.0 / 40.0, 0.5, 0.0, 0.1, 0.25, 0.3]); horizon];
    let s = diag(&[1.0 / 60.0, 1.0 / 120.0]);
    let model = DiscreteDescriptorModel::new(f, c, h, s, s_seq, r_seq, &ToleranceConfig::default())
        .expect("built-in model is well formed");

    // Free schedule: x_{2,0} = -3 together with the x3 path; for k >= 1 only
    // x3 is free. Coordinates are expressed in the computed null basis.
    let tol = ToleranceConfig::default();
    let x3 = |k: usize| (0.4 * k as f64).cos();
    let mut free = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let basis = linalg::null_basis(&model.f[k], &tol).expect("null basis");
        let target = if k == 0 {
            DVector::from_row_slice(&[0.0, -3.0, x3(0)])
        } else {
            DVector::from_row_slice(&[0.0, 0.0, x3(k)])
        };
        free.push(basis.transpose() * target);
    }
    let q = &model.f[0] * DVector::from_row_slice(&[1.0, -3.0, x3(0)]);
    BuiltinScenario { model, free, q }
}

/// The built-in scalar filtration problem embedded as a two-state
/// non-causal descriptor model.
///
/// A scalar plant `x_{k+1} = c_k x_k + v_k + f_k`, `y_k = h_k x_k + w_k`
/// with an unknown inner signal `v_k` becomes `F z_{k+1} = C_k z_k + f_k`,
/// `y_k = H_k z_k + w_k` with `F = (1, 0)`, `C_k = (c_k, 1)`,
/// `H_k = (h_k, 0)`: the second state carries the inner signal and is a
/// free input of the descriptor model.
pub fn builtin_scalar_example(horizon: usize) -> BuiltinScenario {
    let c_k = 0.8;
    let h_k = |k: usize| 1.0 + k as f64 / 10.0;
    let f: Vec<_> = (0..=horizon)
        .map(|_| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
        .collect();
    let c: Vec<_> = (0..horizon)
        .map(|_| DMatrix::from_row_slice(1, 2, &[c_k, 1.0]))
        .collect();
    let h: Vec<_> = (0..=horizon)
        .map(|k| DMatrix::from_row_slice(1, 2, &[h_k(k), 0.0]))
        .collect();
    let s = DMatrix::from_element(1, 1, 0.5);
    let s_seq = vec![DMatrix::from_element(1, 1, 0.7); horizon];
    let r_seq = vec![DMatrix::from_element(1, 1, 0.9); horizon + 1];
    let model = DiscreteDescriptorModel::new(f, c, h, s, s_seq, r_seq, &ToleranceConfig::default())
        .expect("built-in model is well formed");
    // Inner signal z_{2,k}; the null space of F = (1,0) is spanned by e2.
    let free = (0..=horizon)
        .map(|k| DVector::from_element(1, 0.5 * (0.5 * k as f64).sin()))
        .collect();
    let q = DVector::from_element(1, 0.4);
    BuiltinScenario { model, free, q }
}

//! Reduced-order continuous-time minimax filter.
//!
//! For `d/dt F x = C(t) x + f`, `y = H(t) x + eta` with constant `F`, an SVD
//! change of coordinates puts `F` into `[[I_r, 0], [0, 0]]` block form. The
//! differential part of the state then obeys a reduced-order filter
//!
//! ```text
//! dK/dt    = A K + K A' - K M K + G,          K(t0) = 0,
//! dx_hat/dt = (A - K M) x_hat + [K, Cbar'] H' R y(t),   x_hat(t0) = 0,
//! ```
//!
//! whose terminal value yields the worst-case quadratic error
//! `(l1, K(T) l1)` for the functional `(l, F x(T))`.
//!
//! The coefficients `A, M, G, Cbar` come from eliminating the algebraic
//! state block out of the underlying two-point boundary value problem; the
//! `Q`-blocks entering them are blocks of `Q^{-1}(t)` (the coupling between
//! differential and algebraic equation residuals acts through the inverse
//! weight). An uncorrected coefficient form with plain `Q`-blocks is kept
//! for side-by-side inspection, as is the mirrored Riccati sign convention;
//! the discretization oracle in the test suite adjudicates between the
//! conventions.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError, ToleranceConfig};

#[derive(Debug, Error)]
pub enum ContinuousError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("grid must be strictly increasing with at least 2 points")]
    BadGrid,
    #[error("weight matrix {0} is not symmetric positive definite")]
    WeightNotSpd(String),
    #[error("F is zero: no differential part to reduce")]
    DegenerateModel,
    #[error("step {step} does not divide grid interval [{left}, {right}]")]
    StepDoesNotDivide { step: f64, left: f64, right: f64 },
    #[error("assembled coefficient {name} is asymmetric by {asym:.3e} at grid index {index}")]
    AsymmetricCoefficient {
        name: &'static str,
        index: usize,
        asym: f64,
    },
    #[error("uncorrected coefficient forms require square blocks (r = n - r = m - r), got r = {r}, n = {n}, m = {m}")]
    VerbatimShape { r: usize, n: usize, m: usize },
    #[error("Riccati solution escaped: |K| exceeded {bound:.3e} at t = {t}")]
    FiniteEscape { t: f64, bound: f64 },
    #[error("K trajectory does not match the integration grid")]
    GridMismatch,
    #[error("eps_samples must be at least 3")]
    TooFewSamples,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Constant-`F` descriptor model with coefficients sampled on a time grid.
#[derive(Debug, Clone)]
pub struct ContinuousDescriptorModel {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub f: DMatrix<f64>,
    pub grid: Vec<f64>,
    pub c: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
}

impl ContinuousDescriptorModel {
    pub fn new(
        f: DMatrix<f64>,
        grid: Vec<f64>,
        c: Vec<DMatrix<f64>>,
        h: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
        tol: &ToleranceConfig,
    ) -> Result<Self, ContinuousError> {
        if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ContinuousError::BadGrid);
        }
        let (m, n) = (f.nrows(), f.ncols());
        if c.len() != grid.len()
            || h.len() != grid.len()
            || q.len() != grid.len()
            || r.len() != grid.len()
        {
            return Err(ContinuousError::Dimension(
                "one coefficient sample required per grid point".into(),
            ));
        }
        let p = h[0].nrows();
        for (i, mat) in c.iter().enumerate() {
            if mat.nrows() != m || mat.ncols() != n {
                return Err(ContinuousError::Dimension(format!("C[{i}] shape")));
            }
        }
        for (i, mat) in h.iter().enumerate() {
            if mat.nrows() != p || mat.ncols() != n {
                return Err(ContinuousError::Dimension(format!("H[{i}] shape")));
            }
        }
        for (i, mat) in q.iter().enumerate() {
            if mat.nrows() != m || !linalg::is_spd(mat, tol) {
                return Err(ContinuousError::WeightNotSpd(format!("Q[{i}]")));
            }
        }
        for (i, mat) in r.iter().enumerate() {
            if mat.nrows() != p || !linalg::is_spd(mat, tol) {
                return Err(ContinuousError::WeightNotSpd(format!("R[{i}]")));
            }
        }
        Ok(Self {
            n,
            m,
            p,
            f,
            grid,
            c,
            h,
            q,
            r,
        })
    }
}

/// The model rewritten in SVD coordinates with `F = [[I_r, 0], [0, 0]]`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// Rank of `F`: the dimension of the differential state block.
    pub rank: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Left orthogonal factor of `F` (m x m).
    pub u: DMatrix<f64>,
    /// Right orthogonal factor of `F` (n x n); the reduced state is `V' x`.
    pub v: DMatrix<f64>,
    /// Leading singular values of `F`, folded into the equation scaling.
    pub sigma: DVector<f64>,
    pub grid: Vec<f64>,
    /// Transformed coefficient samples.
    pub c_red: Vec<DMatrix<f64>>,
    pub h_red: Vec<DMatrix<f64>>,
    pub q_red: Vec<DMatrix<f64>>,
    pub r_samples: Vec<DMatrix<f64>>,
    /// `S(t) = H'(t) R(t) H(t)` in reduced coordinates.
    pub s_red: Vec<DMatrix<f64>>,
    /// `W(t) = Q(t)^{-1}` in reduced coordinates.
    pub w_red: Vec<DMatrix<f64>>,
}

fn complete_orthonormal(partial: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = partial.to_vec();
    for j in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut w = DVector::zeros(dim);
        w[j] = 1.0;
        for b in &basis {
            let proj = b.dot(&w);
            w -= b * proj;
        }
        // Re-orthogonalize once against accumulated rounding.
        for b in &basis {
            let proj = b.dot(&w);
            w -= b * proj;
        }
        let norm = w.norm();
        if norm > 1e-6 {
            basis.push(w / norm);
        }
    }
    assert_eq!(basis.len(), dim, "orthonormal completion failed");
    basis
}

fn canonical_sign(v: &DVector<f64>) -> f64 {
    let mut best = 0usize;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Convert the model into SVD coordinates: `F` becomes `[[I_r, 0], [0, 0]]`
/// and every sampled coefficient is transformed and re-weighted
/// consistently.
pub fn svd_reduce(
    model: &ContinuousDescriptorModel,
    tol: &ToleranceConfig,
) -> Result<ReducedModel, ContinuousError> {
    let f = &model.f;
    if f.amax() == 0.0 {
        return Err(ContinuousError::DegenerateModel);
    }
    let svd = linalg::svd(f)?;
    let sigma_max = svd.sigma_max();
    let cutoff = tol.rank_rel_tol * sigma_max;
    let rank = svd
        .singular_values()
        .iter()
        .filter(|&&s| s >= cutoff)
        .count();

    // Leading singular pairs with a canonical sign, then orthonormal
    // completion to full bases of the equation and state spaces.
    let mut u_cols = Vec::with_capacity(rank);
    let mut v_cols = Vec::with_capacity(rank);
    for i in 0..rank {
        let vi = svd.right_vectors().column(i).into_owned();
        let sign = canonical_sign(&vi);
        v_cols.push(vi * sign);
        u_cols.push(svd.left_vector(i) * sign);
    }
    let u_full = complete_orthonormal(&u_cols, model.m);
    let v_full = complete_orthonormal(&v_cols, model.n);
    let mut u = DMatrix::zeros(model.m, model.m);
    for (j, col) in u_full.iter().enumerate() {
        let sign = if j >= rank { canonical_sign(col) } else { 1.0 };
        u.column_mut(j).copy_from(&(col * sign));
    }
    let mut v = DMatrix::zeros(model.n, model.n);
    for (j, col) in v_full.iter().enumerate() {
        let sign = if j >= rank { canonical_sign(col) } else { 1.0 };
        v.column_mut(j).copy_from(&(col * sign));
    }
    let sigma = DVector::from_fn(rank, |i, _| svd.singular_values()[i]);

    // Equation rescaling diag(Sigma_r^{-1}, I) U' turns F into the unit
    // block; its inverse reweights Q.
    let mut left_scale = DMatrix::identity(model.m, model.m);
    let mut left_scale_inv = DMatrix::identity(model.m, model.m);
    for i in 0..rank {
        left_scale[(i, i)] = 1.0 / sigma[i];
        left_scale_inv[(i, i)] = sigma[i];
    }
    let t_left = &left_scale * u.transpose();
    let t_inv = &u * &left_scale_inv;

    let f_red = &t_left * f * &v;
    let mut f_expected = DMatrix::zeros(model.m, model.n);
    for i in 0..rank {
        f_expected[(i, i)] = 1.0;
    }
    if (f_red - f_expected).amax() > 1e-12 * sigma_max.max(1.0) {
        return Err(ContinuousError::Dimension(
            "SVD reduction failed to normalize F".into(),
        ));
    }

    let mut c_red = Vec::with_capacity(model.grid.len());
    let mut h_red = Vec::with_capacity(model.grid.len());
    let mut q_red = Vec::with_capacity(model.grid.len());
    let mut s_red = Vec::with_capacity(model.grid.len());
    let mut w_red = Vec::with_capacity(model.grid.len());
    for i in 0..model.grid.len() {
        let ci = &t_left * &model.c[i] * &v;
        let hi = &model.h[i] * &v;
        let qi = linalg::symmetrize(&(t_inv.transpose() * &model.q[i] * &t_inv));
        let si = linalg::symmetrize(&(hi.transpose() * &model.r[i] * &hi));
        let wi = linalg::inv_spd(&qi, tol)?;
        c_red.push(ci);
        h_red.push(hi);
        q_red.push(qi);
        s_red.push(si);
        w_red.push(wi);
    }
    Ok(ReducedModel {
        rank,
        n: model.n,
        m: model.m,
        p: model.p,
        u,
        v,
        sigma,
        grid: model.grid.clone(),
        c_red,
        h_red,
        q_red,
        r_samples: model.r.clone(),
        s_red,
        w_red,
    })
}

impl ReducedModel {
    /// Map an original-coordinates direction `l` to the reduced direction
    /// `l1` with `(l, F x(T)) = (l1, x1_red(T))`.
    pub fn reduce_direction(&self, l: &DVector<f64>) -> DVector<f64> {
        let ul = self.u.transpose() * l;
        DVector::from_fn(self.rank, |i, _| self.sigma[i] * ul[i])
    }

    /// Reconstruct the original coefficient samples from the reduced ones
    /// (inverse of the reduction transforms).
    pub fn reconstruct(&self, i: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut left_scale = DMatrix::identity(self.m, self.m);
        let mut left_scale_inv = DMatrix::identity(self.m, self.m);
        for k in 0..self.rank {
            left_scale[(k, k)] = 1.0 / self.sigma[k];
            left_scale_inv[(k, k)] = self.sigma[k];
        }
        let t_left = &left_scale * self.u.transpose();
        let c = &self.u * &left_scale_inv * &self.c_red[i] * self.v.transpose();
        let h = &self.h_red[i] * self.v.transpose();
        let q = t_left.transpose() * &self.q_red[i] * &t_left;
        (c, h, q)
    }
}

/// Which reading of the coefficient products to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientForm {
    /// Schur-complement-consistent reading: symmetric `M`, `G`, with the
    /// `Q`-blocks taken from `Q^{-1}`.
    #[default]
    Corrected,
    /// The products without the symmetry-restoring corrections, over plain
    /// `Q`-blocks; asymmetric in general, only defined for square block
    /// partitions, and kept for side-by-side inspection.
    Uncorrected,
}

/// Reduced-order filter coefficients at one grid point.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub a: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub g: DMatrix<f64>,
    s4_pinv: DMatrix<f64>,
    d_mat: DMatrix<f64>,
    n_mat: DMatrix<f64>,
    rank: usize,
    n: usize,
}

impl Coefficients {
    /// `Cbar(K) = S4~^+ (D' - N K)`: the map from the adjoint differential
    /// variable to the algebraic block, re-evaluated for the current `K`.
    pub fn c_bar(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.s4_pinv * (self.d_mat.transpose() - &self.n_mat * k)
    }

    /// Measurement injection `[K, Cbar(K)']` (r x n).
    pub fn data_injection(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.rank;
        let mut j = DMatrix::zeros(r, self.n);
        j.view_mut((0, 0), (r, r)).copy_from(k);
        if self.n > r {
            j.view_mut((0, r), (r, self.n - r))
                .copy_from(&self.c_bar(k).transpose());
        }
        j
    }

    fn lerp(a: &Coefficients, b: &Coefficients, w: f64) -> Coefficients {
        let mix = |x: &DMatrix<f64>, y: &DMatrix<f64>| x * (1.0 - w) + y * w;
        Coefficients {
            a: mix(&a.a, &b.a),
            m: mix(&a.m, &b.m),
            g: mix(&a.g, &b.g),
            s4_pinv: mix(&a.s4_pinv, &b.s4_pinv),
            d_mat: mix(&a.d_mat, &b.d_mat),
            n_mat: mix(&a.n_mat, &b.n_mat),
            rank: a.rank,
            n: a.n,
        }
    }
}

/// Assemble `A, M, G` (and the pieces of `Cbar`) at grid index `i`.
pub fn assemble_coefficients(
    red: &ReducedModel,
    i: usize,
    form: CoefficientForm,
    tol: &ToleranceConfig,
) -> Result<Coefficients, ContinuousError> {
    let r = red.rank;
    let (n, m) = (red.n, red.m);
    let c = &red.c_red[i];
    let s = &red.s_red[i];
    let c1 = c.view((0, 0), (r, r)).into_owned();
    let c2 = c.view((0, r), (r, n - r)).into_owned();
    let c3 = c.view((r, 0), (m - r, r)).into_owned();
    let c4 = c.view((r, r), (m - r, n - r)).into_owned();
    let s1 = s.view((0, 0), (r, r)).into_owned();
    let s2 = s.view((0, r), (r, n - r)).into_owned();
    let s3 = s.view((r, 0), (n - r, r)).into_owned();
    let s4 = s.view((r, r), (n - r, n - r)).into_owned();

    let (a, m_mat, g, s4_pinv, d_mat, n_mat) = match form {
        CoefficientForm::Corrected => {
            let w = &red.w_red[i];
            let w1 = w.view((0, 0), (r, r)).into_owned();
            let w2 = w.view((0, r), (r, m - r)).into_owned();
            let w3 = w.view((r, 0), (m - r, r)).into_owned();
            let w4 = w.view((r, r), (m - r, m - r)).into_owned();
            let w4_inv = linalg::inv_spd(&w4, tol)?;
            let s4t = linalg::symmetrize(&(&s4 + c4.transpose() * &w4_inv * &c4));
            let s4_pinv = linalg::symmetric_pinv(&s4t, tol)?.pinv;
            let n_mat = &s3 + c4.transpose() * &w4_inv * &c3;
            let d_mat = &c2 - &w2 * &w4_inv * &c4;
            let a = &c1 - &w2 * &w4_inv * &c3 - &d_mat * &s4_pinv * &n_mat;
            let m_mat =
                &s1 + c3.transpose() * &w4_inv * &c3 - n_mat.transpose() * &s4_pinv * &n_mat;
            let g = &w1 - &w2 * &w4_inv * &w3 + &d_mat * &s4_pinv * d_mat.transpose();
            (a, m_mat, g, s4_pinv, d_mat, n_mat)
        }
        CoefficientForm::Uncorrected => {
            if r != n - r || r != m - r {
                return Err(ContinuousError::VerbatimShape { r, n, m });
            }
            let q = &red.q_red[i];
            let q1 = q.view((0, 0), (r, r)).into_owned();
            let q2 = q.view((0, r), (r, m - r)).into_owned();
            let q3 = q.view((r, 0), (m - r, r)).into_owned();
            let q4 = q.view((r, r), (m - r, m - r)).into_owned();
            let q4_inv = linalg::inv_spd(&q4, tol)?;
            let q1_inv = linalg::inv_spd(&q1, tol)?;
            let s4t = &s4 + c4.transpose() * &q4_inv * &c4;
            let s4_pinv = linalg::pinv(&s4t, tol)?;
            let n_mat = &s3 + c4.transpose() * &q4_inv * &c3;
            let d_mat = &c2 - &q2 * &q4_inv * &c4;
            let a = &c1 - &q2 * &q4_inv * &c3 - &d_mat * &s4_pinv * &n_mat;
            // Literal middle factor: a product, not a sum.
            let m_mat = &s1 + c3.transpose() * &q4_inv * &c3
                - (&s2 * c3.transpose() * &q4_inv * &c4) * &s4_pinv * &n_mat;
            let g = &q1 - &q2 * &q1_inv * &q3 + &d_mat * &s4_pinv * d_mat.transpose();
            (a, m_mat, g, s4_pinv, d_mat, n_mat)
        }
    };

    if form == CoefficientForm::Corrected {
        let scale = m_mat.amax().max(1.0);
        let m_asym = (&m_mat - m_mat.transpose()).amax();
        if m_asym > 1e-10 * scale {
            return Err(ContinuousError::AsymmetricCoefficient {
                name: "M",
                index: i,
                asym: m_asym,
            });
        }
        let g_scale = g.amax().max(1.0);
        let g_asym = (&g - g.transpose()).amax();
        if g_asym > 1e-10 * g_scale {
            return Err(ContinuousError::AsymmetricCoefficient {
                name: "G",
                index: i,
                asym: g_asym,
            });
        }
    }
    Ok(Coefficients {
        a,
        m: linalg::symmetrize(&m_mat),
        g: linalg::symmetrize(&g),
        s4_pinv,
        d_mat,
        n_mat,
        rank: r,
        n,
    })
}

/// Sign convention of the Riccati quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiccatiConvention {
    /// `dK/dt = AK + KA' + KMK - G`: the mirrored-sign variant. Produces
    /// `K <= 0` from `K(t0) = 0` (exactly the negative of the dual
    /// solution).
    MirroredSign,
    /// `dK/dt = AK + KA' - KMK + G`; the convention consistent with a
    /// nonnegative terminal error form, selected by the discretization
    /// oracle.
    #[default]
    StandardDual,
}

/// Integration options shared by the Riccati and filter sweeps.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    /// Fixed RK4 step; must divide every grid interval.
    pub step: f64,
    pub convention: RiccatiConvention,
    pub form: CoefficientForm,
    /// Entry-magnitude bound beyond which the Riccati sweep reports finite
    /// escape.
    pub blowup_bound: f64,
}

impl IntegrationOptions {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            convention: RiccatiConvention::default(),
            form: CoefficientForm::default(),
            blowup_bound: 1e12,
        }
    }

    pub fn with_convention(mut self, convention: RiccatiConvention) -> Self {
        self.convention = convention;
        self
    }
}

/// `K(t)` sampled on the fine integration grid.
#[derive(Debug, Clone)]
pub struct KTrajectory {
    pub times: Vec<f64>,
    pub k: Vec<DMatrix<f64>>,
}

impl KTrajectory {
    pub fn terminal(&self) -> &DMatrix<f64> {
        self.k.last().expect("non-empty trajectory")
    }
}

fn fine_times(grid: &[f64], step: f64) -> Result<Vec<f64>, ContinuousError> {
    let mut times = Vec::new();
    for w in grid.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / step).round();
        if steps < 1.0 || (steps * step - span).abs() > 1e-9 * span.max(1.0) {
            return Err(ContinuousError::StepDoesNotDivide {
                step,
                left: w[0],
                right: w[1],
            });
        }
        let steps = steps as usize;
        for j in 0..steps {
            times.push(w[0] + j as f64 * step);
        }
    }
    times.push(*grid.last().unwrap());
    Ok(times)
}

struct CoefficientTable<'a> {
    grid: &'a [f64],
    at_grid: Vec<Coefficients>,
}

impl<'a> CoefficientTable<'a> {
    fn build(
        red: &ReducedModel,
        grid: &'a [f64],
        form: CoefficientForm,
        tol: &ToleranceConfig,
    ) -> Result<Self, ContinuousError> {
        let at_grid = (0..grid.len())
            .map(|i| assemble_coefficients(red, i, form, tol))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { grid, at_grid })
    }

    fn interval_of(&self, t: f64) -> usize {
        let last = self.grid.len() - 2;
        match self.grid.iter().rposition(|&g| g <= t + 1e-12) {
            Some(i) => i.min(last),
            None => 0,
        }
    }

    fn at(&self, t: f64) -> Coefficients {
        let i = self.interval_of(t);
        let span = self.grid[i + 1] - self.grid[i];
        let w = ((t - self.grid[i]) / span).clamp(0.0, 1.0);
        Coefficients::lerp(&self.at_grid[i], &self.at_grid[i + 1], w)
    }
}

/// Integrate the Riccati equation over the whole grid with classical RK4,
/// symmetrizing after every step. Coefficients are linearly interpolated
/// between grid samples.
pub fn riccati_integrate(
    red: &ReducedModel,
    opts: &IntegrationOptions,
    tol: &ToleranceConfig,
) -> Result<KTrajectory, ContinuousError> {
    let table = CoefficientTable::build(red, &red.grid, opts.form, tol)?;
    let times = fine_times(&red.grid, opts.step)?;
    let r = red.rank;
    let sign = match opts.convention {
        RiccatiConvention::MirroredSign => 1.0,
        RiccatiConvention::StandardDual => -1.0,
    };
    let rhs = |t: f64, k: &DMatrix<f64>| -> DMatrix<f64> {
        let co = table.at(t);
        &co.a * k + k * co.a.transpose() + (k * &co.m * k - &co.g) * sign
    };
    let mut k = DMatrix::zeros(r, r);
    let mut out = Vec::with_capacity(times.len());
    out.push(k.clone());
    for w in times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = rhs(t, &k);
        let k2 = rhs(t + h / 2.0, &(&k + &k1 * (h / 2.0)));
        let k3 = rhs(t + h / 2.0, &(&k + &k2 * (h / 2.0)));
        let k4 = rhs(t + h, &(&k + &k3 * h));
        k += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        k = linalg::symmetrize(&k);
        if k.amax() > opts.blowup_bound {
            return Err(ContinuousError::FiniteEscape {
                t: w[1],
                bound: opts.blowup_bound,
            });
        }
        out.push(k.clone());
    }
    Ok(KTrajectory { times, k: out })
}

/// Filter output: the reduced estimate on the fine grid plus the terminal
/// error form.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub times: Vec<f64>,
    pub x_hat: Vec<DVector<f64>>,
    k_terminal: DMatrix<f64>,
}

impl FilterRun {
    /// Worst-case quadratic error `(l1, K(T) l1)` of the terminal estimate
    /// in the reduced direction `l1`.
    pub fn minimax_error_form(&self, l1: &DVector<f64>) -> f64 {
        (&self.k_terminal * l1).dot(l1)
    }
}

/// Integrate the filter `dx/dt = (A - KM) x + [K, Cbar'] H'R y` from zero,
/// given a Riccati trajectory on the same fine grid and output samples `ys`
/// on the coarse grid.
pub fn filter_integrate(
    red: &ReducedModel,
    ktraj: &KTrajectory,
    ys: &[DVector<f64>],
    opts: &IntegrationOptions,
    tol: &ToleranceConfig,
) -> Result<FilterRun, ContinuousError> {
    if ys.len() != red.grid.len() {
        return Err(ContinuousError::Dimension(format!(
            "{} output samples for {} grid points",
            ys.len(),
            red.grid.len()
        )));
    }
    for y in ys {
        if y.len() != red.p {
            return Err(ContinuousError::Dimension("output sample length".into()));
        }
    }
    let times = fine_times(&red.grid, opts.step)?;
    if ktraj.times.len() != times.len()
        || ktraj
            .times
            .iter()
            .zip(&times)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(ContinuousError::GridMismatch);
    }
    let table = CoefficientTable::build(red, &red.grid, opts.form, tol)?;
    // Measurement injection weights H'R per coarse grid point.
    let hr: Vec<DMatrix<f64>> = (0..red.grid.len())
        .map(|i| red.h_red[i].transpose() * &red.r_samples[i])
        .collect();
    let lerp_mat = |samples: &[DMatrix<f64>], t: f64| -> DMatrix<f64> {
        let i = table.interval_of(t);
        let span = red.grid[i + 1] - red.grid[i];
        let w = ((t - red.grid[i]) / span).clamp(0.0, 1.0);
        &samples[i] * (1.0 - w) + &samples[i + 1] * w
    };
    let lerp_y = |t: f64| -> DVector<f64> {
        let i = table.interval_of(t);
        let span = red.grid[i + 1] - red.grid[i];
        let w = ((t - red.grid[i]) / span).clamp(0.0, 1.0);
        &ys[i] * (1.0 - w) + &ys[i + 1] * w
    };
    let k_at = |j: usize, frac: f64| -> DMatrix<f64> {
        if frac == 0.0 {
            ktraj.k[j].clone()
        } else if frac >= 1.0 {
            ktraj.k[j + 1].clone()
        } else {
            &ktraj.k[j] * (1.0 - frac) + &ktraj.k[j + 1] * frac
        }
    };
    let rhs = |t: f64, j: usize, frac: f64, x: &DVector<f64>| -> DVector<f64> {
        let co = table.at(t);
        let k = k_at(j, frac);
        let inject = co.data_injection(&k);
        let w = lerp_mat(&hr, t) * lerp_y(t);
        (&co.a - &k * &co.m) * x + inject * w
    };
    let mut x = DVector::zeros(red.rank);
    let mut out = Vec::with_capacity(times.len());
    out.push(x.clone());
    for (j, w) in times.windows(2).enumerate() {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = rhs(t, j, 0.0, &x);
        let k2 = rhs(t + h / 2.0, j, 0.5, &(&x + &k1 * (h / 2.0)));
        let k3 = rhs(t + h / 2.0, j, 0.5, &(&x + &k2 * (h / 2.0)));
        let k4 = rhs(t + h, j, 1.0, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(x.clone());
    }
    Ok(FilterRun {
        times,
        x_hat: out,
        k_terminal: ktraj.terminal().clone(),
    })
}

/// Closed-range diagnostic report.
#[derive(Debug, Clone, Copy)]
pub struct ClosedRangeReport {
    /// Largest sampled value of `|Q(eps) C2'|_mod`.
    pub sup_estimate: f64,
    /// Whether the value stabilizes as `eps -> 0` (ratio of the last two
    /// halvings below 2).
    pub bounded: bool,
}

fn mod_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// Evaluate `sup |(eps^2 I + C4'C4)^{-1} C2'|_mod` on a logarithmic grid of
/// `eps` in (0, 1) and report whether the supremum appears finite. A finite
/// value certifies that the range of the DAE operator is closed.
pub fn closed_range_diagnostic(
    c2: &DMatrix<f64>,
    c4: &DMatrix<f64>,
    eps_samples: usize,
) -> Result<ClosedRangeReport, ContinuousError> {
    if eps_samples < 3 {
        return Err(ContinuousError::TooFewSamples);
    }
    if c2.ncols() != c4.ncols() {
        return Err(ContinuousError::Dimension(format!(
            "C2 has {} columns, C4 has {}",
            c2.ncols(),
            c4.ncols()
        )));
    }
    let tol = ToleranceConfig::default();
    let gram = c4.transpose() * c4;
    let dim = gram.nrows();
    let value = |eps: f64| -> Result<f64, ContinuousError> {
        let shifted = &gram + DMatrix::identity(dim, dim) * eps * eps;
        let inv = linalg::inv_spd(&shifted, &tol)?;
        Ok(mod_norm(&(inv * c2.transpose())))
    };
    let (eps_hi, eps_lo) = (0.5f64, 1e-6f64);
    let ratio = (eps_lo / eps_hi).powf(1.0 / (eps_samples as f64 - 1.0));
    let mut sup = 0.0f64;
    let mut eps = eps_hi;
    for _ in 0..eps_samples {
        sup = sup.max(value(eps)?);
        eps *= ratio;
    }
    let v_last = value(eps_lo)?;
    let v_prev = value(2.0 * eps_lo)?;
    sup = sup.max(v_last).max(v_prev);
    let bounded = sup == 0.0 || v_last < 2.0 * v_prev;
    Ok(ClosedRangeReport {
        sup_estimate: sup,
        bounded,
    })
}

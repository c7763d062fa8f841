#![allow(clippy::needless_range_loop)]

//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with its runtime. Run with `cargo test -p dmx --test acceptance --
//! --nocapture` to see the lines for passing criteria too.

use std::time::Instant;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dmx::continuous::{
    closed_range_diagnostic, filter_integrate, riccati_integrate, svd_reduce,
    ContinuousDescriptorModel, IntegrationOptions, RiccatiConvention,
};
use dmx::discrete::{
    self, batch_oracle, directional_error, estimate, kalman_init, kalman_step, run_minimax,
    DirectionalError,
};
use dmx::linalg::{self, ToleranceConfig};
use dmx::model::{self, DiscreteDescriptorModel};

fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn pass(criterion: usize, name: &str, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_s,
        "ACCEPTANCE {criterion} ({name}): FAIL — runtime {elapsed:.3} s exceeds {budget_s} s"
    );
    println!("ACCEPTANCE {criterion} ({name}): PASS ({elapsed:.3} s)");
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    linalg::symmetrize(&(&g * g.transpose())) + DMatrix::identity(n, n) * 0.4
}

/// Random one-step transition scaled to spectral norm <= 0.9, so states and
/// information matrices stay bounded over long horizons and the filter
/// identities can be checked at tight tolerances.
fn random_stable_transition(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let smax = nalgebra::SVD::new(c.clone(), false, false)
        .singular_values
        .max();
    if smax > 0.9 {
        c * (0.9 / smax)
    } else {
        c
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    g.qr().q()
}

/// Criterion 1: the scalar filtration example reproduces its closed forms
/// to 1e-12.
#[test]
fn criterion_1_scalar_example_closed_forms() {
    let started = Instant::now();
    let cfg = tol();
    let horizon = 20;
    let (s, c0) = (0.7, 0.85);
    let h_sched = |k: usize| if k == 0 { 1.0 } else { 1.0 + k as f64 / 7.0 };
    let r_sched = |k: usize| 0.9 + 0.01 * k as f64;
    let s_sched = |k: usize| 1.3 - 0.02 * k as f64;
    let f = vec![dmatrix![1.0, 0.0]; horizon + 1];
    let c_mats = (0..horizon).map(|_| dmatrix![c0, 1.0]).collect();
    let h_mats = (0..=horizon).map(|k| dmatrix![h_sched(k), 0.0]).collect();
    let model = DiscreteDescriptorModel::new(
        f,
        c_mats,
        h_mats,
        DMatrix::from_element(1, 1, s),
        (0..horizon)
            .map(|k| DMatrix::from_element(1, 1, s_sched(k)))
            .collect(),
        (0..=horizon)
            .map(|k| DMatrix::from_element(1, 1, r_sched(k)))
            .collect(),
        &cfg,
    )
    .unwrap();
    let a: Vec<f64> = (0..=horizon).map(|k| 1.5 * (k as f64).sin()).collect();
    let ys: Vec<DVector<f64>> = a.iter().map(|&v| dvector![v]).collect();

    // P_0 = diag(S + R_0 h_0^2, 0) with h_0 = 1.
    let st0 = discrete::filter_init(&model, &ys[0], None).unwrap();
    let q0 = s + r_sched(0);
    assert!((st0.p.clone() - dmatrix![q0, 0.0; 0.0, 0.0]).amax() <= 1e-12);

    // B_0^+ equals the printed closed form.
    let s0 = s_sched(0);
    let b0 = &st0.p + dmatrix![c0, 1.0].transpose() * s0 * dmatrix![c0, 1.0];
    let b0_pinv = linalg::pinv(&b0, &cfg).unwrap();
    let b0_expected = dmatrix![
        1.0 / q0, -c0 / q0;
        -c0 / q0, c0 * c0 / q0 + 1.0 / s0
    ];
    assert!((b0_pinv.clone() - b0_expected).amax() <= 1e-12);
    let scb = dmatrix![c0, 1.0] * &b0_pinv * s0;
    assert!((scb - dmatrix![0.0, 1.0]).amax() <= 1e-12);

    // P_k = R_k H_k' H_k and r_k = R_k H_k' a_k for k = 1..20.
    let states = run_minimax(&model, &ys, None, &cfg).unwrap();
    for k in 1..=horizon {
        let (rk, hk) = (r_sched(k), h_sched(k));
        let p_expected = dmatrix![rk * hk * hk, 0.0; 0.0, 0.0];
        let r_expected = dvector![rk * hk * a[k], 0.0];
        assert!(
            (states[k].p.clone() - p_expected).amax() <= 1e-12,
            "P_{k} deviates by {:.3e}",
            (states[k].p.clone() - dmatrix![rk * hk * hk, 0.0; 0.0, 0.0]).amax()
        );
        assert!((states[k].r.clone() - r_expected).amax() <= 1e-12);
    }
    pass(1, "scalar-example closed forms", started, 0.1);
}

struct FullRankModel {
    model: DiscreteDescriptorModel,
    ys: Vec<DVector<f64>>,
}

fn random_full_rank_model(rng: &mut ChaCha8Rng) -> FullRankModel {
    let n: usize = rng.random_range(1..=5);
    let p: usize = rng.random_range(1..=4);
    let m = rng.random_range(1..=5).max(n.saturating_sub(p)).max(1);
    let horizon = rng.random_range(2..=30);
    let cfg = tol();
    let mut draw_pair = || loop {
        let f = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let h = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let mut stacked = DMatrix::zeros(m + p, n);
        stacked.rows_mut(0, m).copy_from(&f);
        stacked.rows_mut(m, p).copy_from(&h);
        let svd = nalgebra::SVD::new(stacked, false, false);
        let smin = svd.singular_values.min();
        let smax = svd.singular_values.max();
        // Enforce a comfortably full-rank stack so the rank precondition
        // is unambiguous.
        if smin > 0.05 * smax {
            return (f, h);
        }
    };
    let mut f = Vec::with_capacity(horizon + 1);
    let mut h = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let (fk, hk) = draw_pair();
        f.push(fk);
        h.push(hk);
    }
    let mut rng2 = ChaCha8Rng::seed_from_u64(rng.random());
    let c = (0..horizon)
        .map(|_| random_stable_transition(&mut rng2, m, n))
        .collect();
    let s = random_spd(&mut rng2, m);
    let s_seq = (0..horizon).map(|_| random_spd(&mut rng2, m)).collect();
    let r_seq = (0..=horizon).map(|_| random_spd(&mut rng2, p)).collect();
    let model = DiscreteDescriptorModel::new(f, c, h, s, s_seq, r_seq, &cfg).unwrap();
    let ys = (0..=horizon)
        .map(|_| DVector::from_fn(p, |_, _| rng2.random_range(-1.5..1.5)))
        .collect();
    FullRankModel { model, ys }
}

/// Criterion 2: on full-column-rank models the minimax filter has index 0
/// and coincides with the explicit-inverse Kalman recursion.
#[test]
fn criterion_2_full_rank_equivalence() {
    let started = Instant::now();
    let cfg = tol();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let case = random_full_rank_model(&mut rng);
        let states = run_minimax(&case.model, &case.ys, None, &cfg).unwrap();
        let mut kalman = kalman_init(&case.model, &case.ys[0], None, &cfg).unwrap();
        for k in 0..=case.model.horizon {
            if k > 0 {
                kalman =
                    kalman_step(&kalman, &case.model.step_matrices(k), &case.ys[k], &cfg).unwrap();
            }
            let rep = estimate(&states[k], &cfg).unwrap();
            assert_eq!(rep.index, 0, "seed {seed} step {k}: nonzero index");
            let dev = (&rep.x_hat - &kalman.x_filt).norm();
            let bound = 1e-8 * (1.0 + kalman.x_filt.norm());
            assert!(
                dev <= bound,
                "seed {seed} step {k}: deviation {dev:.3e} > {bound:.3e}"
            );
        }
    }
    pass(2, "full-rank equivalence", started, 5.0);
}

/// Spectrum hygiene for the identity checks: every nonzero singular value
/// of the information matrices must sit well above the rank cutoff.
/// Models wandering at the boundary make the compared quantities
/// numerically ill-defined (the filter flags them via
/// `near_rank_boundary`), so the generator redraws them.
fn spectra_well_separated(model: &DiscreteDescriptorModel, ys: &[DVector<f64>]) -> bool {
    let cfg = tol();
    let states = match run_minimax(model, ys, None, &cfg) {
        Ok(s) => s,
        Err(_) => return false,
    };
    for (k, st) in states.iter().enumerate() {
        let b = if k < model.horizon {
            &st.p + model.c[k].transpose() * &model.s_seq[k] * &model.c[k]
        } else {
            st.p.clone()
        };
        for mat in [&st.p, &b] {
            let sv = nalgebra::SVD::new(mat.clone(), false, false).singular_values;
            let smax = sv.max();
            if smax <= 0.0 {
                continue;
            }
            for &s in sv.iter() {
                let rel = s / smax;
                if rel > 1e-10 && rel < 1e-5 {
                    return false;
                }
            }
        }
    }
    true
}

/// Criterion 3: the recursive filter agrees with the batch least-squares
/// oracle at the final step, including rank-deficient dynamics. Even seeds
/// knock a state out of both the dynamics and the outputs, which makes the
/// information matrix exactly singular at every step.
#[test]
fn criterion_3_batch_oracle_consistency() {
    let started = Instant::now();
    let cfg = tol();
    for seed in 0..100u64 {
        let (model, ys) = 'draw: {
            for attempt in 0..50u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed * 100 + attempt);
                let n: usize = rng.random_range(1..=5);
                let p = rng.random_range(1..=4);
                let m = rng.random_range(1..=5);
                let horizon = rng.random_range(2..=20);
                let rank_deficient = seed % 2 == 0;
                let f: Vec<DMatrix<f64>> = (0..=horizon)
                    .map(|_| {
                        let mut fk = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
                        if rank_deficient {
                            fk.column_mut(n - 1).fill(0.0);
                        }
                        fk
                    })
                    .collect();
                let c = (0..horizon)
                    .map(|_| random_stable_transition(&mut rng, m, n))
                    .collect();
                let h: Vec<DMatrix<f64>> = (0..=horizon)
                    .map(|_| {
                        let mut hk = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
                        if rank_deficient && n > 1 {
                            // The last state stays coupled through C but is
                            // never measured: exact singularity, not a
                            // boundary case.
                            hk.column_mut(n - 1).fill(0.0);
                        }
                        hk
                    })
                    .collect();
                let s = random_spd(&mut rng, m);
                let s_seq = (0..horizon).map(|_| random_spd(&mut rng, m)).collect();
                let r_seq = (0..=horizon).map(|_| random_spd(&mut rng, p)).collect();
                let model = DiscreteDescriptorModel::new(f, c, h, s, s_seq, r_seq, &cfg).unwrap();
                let ys: Vec<DVector<f64>> = (0..=horizon)
                    .map(|_| DVector::from_fn(p, |_, _| rng.random_range(-1.5..1.5)))
                    .collect();
                if spectra_well_separated(&model, &ys) {
                    break 'draw (model, ys);
                }
            }
            panic!("seed {seed}: no well-separated model in 50 attempts");
        };
        let horizon = model.horizon;
        let states = run_minimax(&model, &ys, None, &cfg).unwrap();
        let rep = estimate(&states[horizon], &cfg).unwrap();
        if seed % 2 == 0 && model.n > 1 {
            assert!(rep.index >= 1, "seed {seed}: expected a singular step");
        }
        let (x_batch, psi_min) = batch_oracle(&model, &ys, horizon, &cfg).unwrap();
        let proj_dev = (&rep.projector * &x_batch - &rep.x_hat).amax();
        assert!(
            proj_dev <= 1e-6,
            "seed {seed}: projected batch solution deviates by {proj_dev:.3e}"
        );
        let beta_dev = (1.0 - psi_min - rep.beta_hat).abs();
        assert!(
            beta_dev <= 1e-6,
            "seed {seed}: beta mismatch {beta_dev:.3e}"
        );
    }
    pass(3, "batch-oracle consistency", started, 10.0);
}

/// Criterion 4: simulated admissible trajectories stay inside the reported
/// ellipsoid at every step; zero violations over 1000 seeded trials.
#[test]
fn criterion_4_guaranteed_membership() {
    let started = Instant::now();
    let cfg = tol();
    let horizon = 40;
    let scenario = model::builtin_section3(horizon);
    let mut violations = 0usize;
    for seed in 0..1000u64 {
        let margin = if seed % 2 == 0 {
            1.0
        } else {
            0.2 + 0.7 * (seed as f64 / 1000.0)
        };
        let d = model::sample_disturbance(&scenario.model, seed, margin)
            .unwrap()
            .with_fixed_q(&scenario.model, scenario.q.clone(), margin)
            .unwrap();
        let traj = model::propagate(&scenario.model, &d, &scenario.free).unwrap();
        let states = run_minimax(&scenario.model, &traj.y, None, &cfg).unwrap();
        for k in 0..=horizon {
            let rep = estimate(&states[k], &cfg).unwrap();
            if !discrete::membership(&rep, &states[k], &traj.x[k]) {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0, "membership violations observed");
    pass(4, "guaranteed membership", started, 30.0);
}

/// Criterion 5: the built-in alternating-observability scenario reproduces
/// the published qualitative structure and emits plot-ready CSVs.
#[test]
fn criterion_5_section3_reproduction() {
    let started = Instant::now();
    let cfg = tol();
    let horizon = 40;
    let scenario = model::builtin_section3(horizon);
    let margin = 0.9;
    let d = model::sample_disturbance(&scenario.model, 7, margin)
        .unwrap()
        .with_fixed_q(&scenario.model, scenario.q.clone(), margin)
        .unwrap();
    let traj = model::propagate(&scenario.model, &d, &scenario.free).unwrap();
    let states = run_minimax(&scenario.model, &traj.y, None, &cfg).unwrap();
    let l = dvector![0.0, 0.0, 1.0];
    for k in 0..=horizon {
        let rep = estimate(&states[k], &cfg).unwrap();
        let expected_index = if k % 2 == 0 { 1 } else { 0 };
        assert_eq!(rep.index, expected_index, "step {k}: index");
        let rho = directional_error(&rep, &l, &cfg);
        if k % 2 == 0 {
            // Non-causal parity: infinite error, vanishing quadratic form
            // and no third-state estimate.
            assert_eq!(rho, DirectionalError::Infinite, "step {k}");
            assert!((&rep.p_pinv * &l).dot(&l).abs() <= 1e-12, "step {k}");
            assert!(rep.x_hat[2].abs() <= 1e-12, "step {k}");
        } else {
            let rho = rho.value().expect("finite at causal parity");
            let real_err = (traj.x[k][2] - rep.x_hat[2]).abs();
            assert!(
                real_err <= rho + 1e-9,
                "step {k}: real error {real_err:.3e} exceeds minimax bound {rho:.3e}"
            );
        }
    }
    // Figures 2-3 analogues via the filter pipeline.
    let out = std::env::temp_dir().join("dmx_acceptance").join("section3");
    let _ = std::fs::remove_dir_all(&out);
    let mut cfg_run = dmx::cli::RunConfig::new(dmx::cli::Command::Filter, "builtin:section3", &out);
    cfg_run.seed = 7;
    cfg_run.horizon = Some(horizon);
    cfg_run.simulate_inline = true;
    cfg_run.margin = margin;
    cfg_run.directions = vec![dvector![0.0, 0.0, 1.0], dvector![0.0, 1.0, 0.0]];
    dmx::cli::run(&cfg_run).unwrap();
    let text = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(text.lines().count(), horizon + 2);
    assert!(text.lines().nth(1).unwrap().split(',').nth(6).unwrap() == "inf");
    pass(5, "numerical-example reproduction", started, 1.0);
}

fn conditioned_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    drop_rank: bool,
    log_cond: f64,
) -> DMatrix<f64> {
    let k = rows.min(cols);
    let u = random_orthogonal(rng, rows);
    let v = random_orthogonal(rng, cols);
    let mut sigma = DMatrix::zeros(rows, cols);
    let kept = if drop_rank && k > 1 {
        rng.random_range(1..k)
    } else {
        k
    };
    for i in 0..kept {
        let expo = if kept == 1 {
            0.0
        } else {
            -log_cond * i as f64 / (kept as f64 - 1.0)
        };
        sigma[(i, i)] = 10f64.powf(expo);
    }
    u * sigma * v.transpose()
}

/// Criterion 6: pseudoinverse property suite over 1000 random matrices with
/// condition number at most 1e6.
#[test]
fn criterion_6_penrose_property_suite() {
    let started = Instant::now();
    let cfg = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(6000);
    for trial in 0..1000 {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(1..=8);
        let drop_rank = trial % 3 == 0;
        let log_cond = rng.random_range(0.0..6.0);
        let a = conditioned_matrix(&mut rng, rows, cols, drop_rank, log_cond);
        let ap = linalg::pinv(&a, &cfg).unwrap();
        let scale = a.amax().max(1e-30);
        let pscale = ap.amax().max(1e-30);
        assert!(
            (&a * &ap * &a - &a).amax() <= 1e-8 * scale,
            "trial {trial}: A A+ A"
        );
        assert!(
            (&ap * &a * &ap - &ap).amax() <= 1e-8 * pscale,
            "trial {trial}: A+ A A+"
        );
        let aap = &a * &ap;
        assert!(
            (aap.transpose() - &aap).amax() <= 1e-8,
            "trial {trial}: (A A+)'"
        );
        let apa = &ap * &a;
        assert!(
            (apa.transpose() - &apa).amax() <= 1e-8,
            "trial {trial}: (A+ A)'"
        );

        // Projector properties on the symmetric PSD gram matrix.
        let gram = linalg::symmetrize(&(&a * a.transpose()));
        let pi = linalg::range_projector(&gram, &cfg).unwrap();
        assert!(
            (&pi * &pi - &pi).amax() <= 1e-10,
            "trial {trial}: projector idempotent"
        );
        assert!(
            (pi.transpose() - &pi).amax() <= 1e-10,
            "trial {trial}: projector symmetric"
        );

        // Rank is transpose-invariant.
        assert_eq!(
            linalg::numeric_rank(&a, &cfg).unwrap(),
            linalg::numeric_rank(&a.transpose(), &cfg).unwrap(),
            "trial {trial}: rank under transpose"
        );

        // Involution on well-conditioned full-rank inputs.
        if !drop_rank && log_cond < 3.0 {
            let back = linalg::pinv(&ap, &cfg).unwrap();
            assert!(
                (back - &a).amax() <= 1e-8 * scale,
                "trial {trial}: pinv involution"
            );
        }
    }
    pass(6, "pseudoinverse property suite", started, 5.0);
}

/// Constant-coefficient continuous model on a grid fine enough to carry the
/// interpolated output signal.
fn ode_continuous_model(
    c: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    t_end: f64,
    points: usize,
) -> ContinuousDescriptorModel {
    let grid: Vec<f64> = (0..points)
        .map(|i| t_end * i as f64 / (points - 1) as f64)
        .collect();
    let len = grid.len();
    ContinuousDescriptorModel::new(
        DMatrix::identity(c.nrows(), c.ncols()),
        grid,
        vec![c.clone(); len],
        vec![h.clone(); len],
        vec![q.clone(); len],
        vec![r.clone(); len],
        &tol(),
    )
    .unwrap()
}

/// Euler discretization of the same estimation problem, fed through the
/// discrete minimax filter: the independent oracle for the continuous
/// filter.
fn discretized_minimax_estimate(
    c: &DMatrix<f64>,
    h_mat: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y_of_t: &dyn Fn(f64) -> DVector<f64>,
    t_end: f64,
    step: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let cfg = tol();
    let n = c.nrows();
    let steps = (t_end / step).round() as usize;
    let f = vec![DMatrix::identity(n, n); steps + 1];
    let c_seq = vec![DMatrix::identity(n, n) + c * step; steps];
    let h_seq = vec![h_mat.clone(); steps + 1];
    // Hard initial pin F x(0) = 0 via a stiff anchor weight.
    let s = DMatrix::identity(n, n) * 1e10;
    let s_seq = vec![q / step; steps];
    let r_seq = vec![r * step; steps + 1];
    let model = DiscreteDescriptorModel::new(f, c_seq, h_seq, s, s_seq, r_seq, &cfg).unwrap();
    let ys: Vec<DVector<f64>> = (0..=steps).map(|k| y_of_t(k as f64 * step)).collect();
    let states = run_minimax(&model, &ys, None, &cfg).unwrap();
    let rep = estimate(&states[steps], &cfg).unwrap();
    (rep.x_hat, rep.p_pinv)
}

/// Criterion 7: scalar Riccati closed forms, fourth-order convergence, and
/// the discretization oracle agreeing with exactly one sign convention.
#[test]
fn criterion_7_continuous_riccati() {
    let started = Instant::now();
    let cfg = tol();

    // (a) tanh closed forms at h = 1e-3, tolerance 1e-6.
    let scalar = ode_continuous_model(
        &DMatrix::zeros(1, 1),
        &DMatrix::from_element(1, 1, 1.0),
        &DMatrix::from_element(1, 1, 1.0),
        &DMatrix::from_element(1, 1, 1.0),
        1.0,
        2,
    );
    let red = svd_reduce(&scalar, &cfg).unwrap();
    let opts = IntegrationOptions::new(1e-3);
    let dual = riccati_integrate(&red, &opts, &cfg).unwrap();
    assert!((dual.terminal()[(0, 0)] - 1.0f64.tanh()).abs() <= 1e-6);
    let mirrored = riccati_integrate(
        &red,
        &opts.with_convention(RiccatiConvention::MirroredSign),
        &cfg,
    )
    .unwrap();
    assert!((mirrored.terminal()[(0, 0)] + 1.0f64.tanh()).abs() <= 1e-6);

    // (b) step-halving confirms fourth-order convergence.
    let c = dmatrix![0.0, 1.0; -2.0, -0.3];
    let h_mat = dmatrix![1.0, 0.4];
    let q = dmatrix![2.0, 0.0; 0.0, 1.5];
    let r = DMatrix::from_element(1, 1, 1.2);
    let model2 = ode_continuous_model(&c, &h_mat, &q, &r, 1.0, 2);
    let red2 = svd_reduce(&model2, &cfg).unwrap();
    let run_k = |h: f64| {
        riccati_integrate(&red2, &IntegrationOptions::new(h), &cfg)
            .unwrap()
            .terminal()
            .clone()
    };
    let (k1, k2, k4) = (run_k(0.05), run_k(0.025), run_k(0.0125));
    let ratio = (&k1 - &k2).amax() / (&k2 - &k4).amax();
    assert!(ratio >= 8.0, "refinement ratio {ratio:.2} below 8");

    // (c) discretization oracle: the Euler-discretized minimax filter must
    // converge (order >= 1) to the continuous filter under exactly one sign
    // convention.
    let t_end = 1.0;
    let y_fn = |t: f64| dvector![(2.0 * t).sin() + 0.3 * (5.0 * t).cos()];
    let fine_model = ode_continuous_model(&c, &h_mat, &q, &r, t_end, 201);
    let red_fine = svd_reduce(&fine_model, &cfg).unwrap();
    let ys_grid: Vec<DVector<f64>> = fine_model.grid.iter().map(|&t| y_fn(t)).collect();
    let reference = |convention: RiccatiConvention| {
        let opts = IntegrationOptions::new(5e-4).with_convention(convention);
        let ktraj = riccati_integrate(&red_fine, &opts, &cfg).unwrap();
        filter_integrate(&red_fine, &ktraj, &ys_grid, &opts, &cfg).unwrap()
    };
    let ref_dual = reference(RiccatiConvention::StandardDual);
    let ref_mirrored = reference(RiccatiConvention::MirroredSign);
    let steps = [0.04, 0.02, 0.01];
    let mut err_dual = Vec::new();
    let mut err_mirrored = Vec::new();
    for &h in &steps {
        let (x_d, p_pinv) = discretized_minimax_estimate(&c, &h_mat, &q, &r, &y_fn, t_end, h);
        err_dual.push((&x_d - ref_dual.x_hat.last().unwrap()).norm());
        err_mirrored.push((&x_d - ref_mirrored.x_hat.last().unwrap()).norm());
        if h == steps[2] {
            // The a priori error form agrees too: P^+ approaches K(T).
            let k_term = {
                let opts = IntegrationOptions::new(5e-4);
                riccati_integrate(&red_fine, &opts, &cfg)
                    .unwrap()
                    .terminal()
                    .clone()
            };
            let dev = (&p_pinv - &k_term).amax() / k_term.amax();
            assert!(dev < 0.1, "a priori error form deviates by {dev:.3}");
        }
    }
    let order1 = (err_dual[0] / err_dual[1]).log2();
    let order2 = (err_dual[1] / err_dual[2]).log2();
    let dual_consistent = order1 >= 0.8 && order2 >= 0.8 && err_dual[2] < 5e-2;
    let mirrored_consistent = err_mirrored[2] < err_mirrored[0] / 2.0 && err_mirrored[2] < 5e-2;
    println!(
        "  oracle errors dual = {err_dual:?} (orders {order1:.2}, {order2:.2}), mirrored = {err_mirrored:?}",
    );
    println!(
        "  convention consistent with the discretization oracle: {}",
        if dual_consistent && !mirrored_consistent {
            "StandardDual (-KMK + G)"
        } else {
            "UNRESOLVED"
        }
    );
    assert!(dual_consistent, "dual convention failed to converge");
    assert!(!mirrored_consistent, "mirrored sign unexpectedly converged");
    pass(7, "continuous-time Riccati filter", started, 20.0);
}

/// Criterion 8: closed-range diagnostic verdicts on the analytic families.
#[test]
fn criterion_8_closed_range_diagnostic() {
    let started = Instant::now();
    let rep =
        closed_range_diagnostic(&DMatrix::zeros(3, 2), &dmatrix![1.0, 0.0; 0.3, 2.0], 15).unwrap();
    assert!(rep.bounded && rep.sup_estimate == 0.0);
    let rep = closed_range_diagnostic(
        &dmatrix![0.5, -1.0; 2.0, 0.1],
        &dmatrix![1.5, 0.2; 0.0, 0.8],
        15,
    )
    .unwrap();
    assert!(rep.bounded && rep.sup_estimate > 0.0);
    let rep =
        closed_range_diagnostic(&dmatrix![1.0, 2.0; 0.5, 0.1], &DMatrix::zeros(2, 2), 15).unwrap();
    assert!(!rep.bounded);
    pass(8, "closed-range diagnostic", started, 1.0);
}

/// Criterion 9: every CLI command is byte-deterministic for a fixed seed.
#[test]
fn criterion_9_cli_determinism() {
    let started = Instant::now();
    let bin = env!("CARGO_BIN_EXE_dmx");
    let base = std::env::temp_dir()
        .join("dmx_acceptance")
        .join("determinism");
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();

    let directions = base.join("directions.txt");
    std::fs::write(&directions, "0,0,1\n1,0,0\n").unwrap();
    let continuous_json = base.join("continuous.json");
    std::fs::write(
        &continuous_json,
        r#"{
            "F": [[1,0],[0,1]],
            "grid": [0.0, 0.25, 0.5, 0.75, 1.0],
            "C": [[[0,1],[-2,-0.3]],[[0,1],[-2,-0.3]],[[0,1],[-2,-0.3]],[[0,1],[-2,-0.3]],[[0,1],[-2,-0.3]]],
            "H": [[[1,0.4]],[[1,0.4]],[[1,0.4]],[[1,0.4]],[[1,0.4]]],
            "Q": [[[2,0],[0,1.5]],[[2,0],[0,1.5]],[[2,0],[0,1.5]],[[2,0],[0,1.5]],[[2,0],[0,1.5]]],
            "R": [[[1.2]],[[1.2]],[[1.2]],[[1.2]],[[1.2]]]
        }"#,
    )
    .unwrap();
    let y_csv = base.join("y.csv");
    std::fs::write(&y_csv, "y1\n0.1\n0.3\n-0.2\n0.4\n0.0\n").unwrap();

    let dirs_arg = directions.to_str().unwrap().to_string();
    let cases: Vec<(&str, Vec<String>)> = vec![
        (
            "simulate",
            vec![
                "simulate".into(),
                "--model".into(),
                "builtin:section3".into(),
                "--seed".into(),
                "7".into(),
                "--horizon".into(),
                "20".into(),
            ],
        ),
        (
            "filter",
            vec![
                "filter".into(),
                "--model".into(),
                "builtin:section3".into(),
                "--seed".into(),
                "7".into(),
                "--horizon".into(),
                "20".into(),
                "--simulate-inline".into(),
                "--directions".into(),
                dirs_arg.clone(),
            ],
        ),
        (
            "observability",
            vec![
                "observability".into(),
                "--model".into(),
                "builtin:section3".into(),
                "--horizon".into(),
                "16".into(),
                "--directions".into(),
                dirs_arg,
            ],
        ),
        (
            "compare",
            vec![
                "compare".into(),
                "--model".into(),
                "builtin:scalar-example".into(),
                "--seed".into(),
                "3".into(),
                "--horizon".into(),
                "15".into(),
            ],
        ),
        (
            "riccati",
            vec![
                "riccati".into(),
                "--model".into(),
                continuous_json.to_str().unwrap().into(),
                "--step".into(),
                "0.0125".into(),
                "--measurements".into(),
                y_csv.to_str().unwrap().into(),
            ],
        ),
    ];

    for (name, args) in &cases {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out_dir = base.join(format!("{name}_{run}"));
            let status = std::process::Command::new(bin)
                .args(args)
                .arg("--out")
                .arg(&out_dir)
                .status()
                .unwrap();
            assert!(status.success(), "{name} run {run} failed");
            let mut files: Vec<_> = std::fs::read_dir(&out_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            let blob: Vec<(String, Vec<u8>)> = files
                .into_iter()
                .map(|p| {
                    (
                        p.file_name().unwrap().to_string_lossy().into_owned(),
                        std::fs::read(&p).unwrap(),
                    )
                })
                .collect();
            assert!(!blob.is_empty(), "{name} produced no files");
            outputs.push(blob);
        }
        assert_eq!(
            outputs[0], outputs[1],
            "{name}: outputs differ between runs"
        );
    }
    pass(9, "CLI determinism", started, 60.0);
}

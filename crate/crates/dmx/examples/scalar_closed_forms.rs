#![allow(clippy::needless_range_loop)]

//! Scalar filtration through a non-causal descriptor embedding.
//!
//! A scalar plant `x_{k+1} = c x_k + v_k(x_k) + f_k`, `y_k = h_k x_k + w_k`
//! with an unknown inner signal `v_k` becomes the two-state descriptor model
//! `F z_{k+1} = C_k z_k + f_k` with `F = (1, 0)`, `C_k = (c_k, 1)`,
//! `H_k = (h_k, 0)`: the second state carries `v_k` and is never determined
//! by the equations. This example checks the closed forms of the filter
//! recursion on that embedding and demonstrates the estimate tracking a
//! genuinely nonlinear plant.
//!
//! Run with: `cargo run --example scalar_closed_forms`

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use dmx::discrete::{directional_error, estimate, filter_init, filter_step, DirectionalError};
use dmx::linalg::ToleranceConfig;
use dmx::model::DiscreteDescriptorModel;

fn main() {
    let tol = ToleranceConfig::default();
    let horizon = 12;
    let c0 = 0.9;
    let h = |k: usize| if k == 0 { 1.0 } else { 1.0 + 0.1 * k as f64 };
    let (s, s_k, r_k) = (0.6, 1.1, 0.8);

    let model = DiscreteDescriptorModel::new(
        vec![dmatrix![1.0, 0.0]; horizon + 1],
        vec![dmatrix![c0, 1.0]; horizon],
        (0..=horizon).map(|k| dmatrix![h(k), 0.0]).collect(),
        DMatrix::from_element(1, 1, s),
        vec![DMatrix::from_element(1, 1, s_k); horizon],
        vec![DMatrix::from_element(1, 1, r_k); horizon + 1],
        &tol,
    )
    .unwrap();

    // Nonlinear truth: v(x) = 0.3 sin(x), small admissible noises.
    let v = |x: f64| 0.3 * x.sin();
    let mut x_true = vec![0.8f64];
    for k in 0..horizon {
        let f_k = 0.02 * ((k as f64) * 1.7).sin();
        x_true.push(c0 * x_true[k] + v(x_true[k]) + f_k);
    }
    let ys: Vec<DVector<f64>> = (0..=horizon)
        .map(|k| dvector![h(k) * x_true[k] + 0.01 * ((k as f64) * 2.3).cos()])
        .collect();

    println!("closed-form checks (worst deviation over k = 1..{horizon}):");
    let mut state = filter_init(&model, &ys[0], None).unwrap();
    let q0 = s + r_k;
    println!(
        "  P_0 = diag(S + R_0, 0)            dev {:.2e}",
        (&state.p - dmatrix![q0, 0.0; 0.0, 0.0]).amax()
    );
    let mut worst_p = 0.0f64;
    let mut worst_r = 0.0f64;
    for k in 1..=horizon {
        state = filter_step(&state, &model.step_matrices(k), &ys[k], &tol).unwrap();
        let hk = h(k);
        worst_p = worst_p.max((&state.p - dmatrix![r_k * hk * hk, 0.0; 0.0, 0.0]).amax());
        worst_r = worst_r.max((&state.r - dvector![r_k * hk * ys[k][0], 0.0]).amax());
    }
    println!("  P_k = R_k H_k' H_k                dev {worst_p:.2e}");
    println!("  r_k = R_k H_k' y_k                dev {worst_r:.2e}");

    let report = estimate(&state, &tol).unwrap();
    println!("\nfinal step tau = {horizon}:");
    println!(
        "  index of non-causality  = {} (inner signal never observable)",
        report.index
    );
    println!(
        "  estimate (l, x_hat) for l = e1 = {:.6}   truth x_tau = {:.6}",
        report.x_hat[0], x_true[horizon]
    );
    match directional_error(&report, &dvector![1.0, 0.0], &tol) {
        DirectionalError::Finite(rho) => {
            let bound = (1.0 / (r_k * h(horizon).powi(2))).sqrt();
            println!("  minimax error rho(e1)   = {rho:.6} (a priori bound {bound:.6})");
            println!(
                "  real error |x - x_hat|  = {:.6}",
                (x_true[horizon] - report.x_hat[0]).abs()
            );
        }
        DirectionalError::Infinite => println!("  unexpected: e1 unobservable"),
    }
    match directional_error(&report, &dvector![0.0, 1.0], &tol) {
        DirectionalError::Infinite => {
            println!("  minimax error rho(e2)   = inf (non-causal direction)")
        }
        DirectionalError::Finite(v) => println!("  unexpected finite rho(e2) = {v}"),
    }
}

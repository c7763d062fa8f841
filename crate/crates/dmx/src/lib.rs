//! Minimax set-membership state estimation for linear descriptor (DAE) systems.
//!
//! Descriptor models `F_{k+1} x_{k+1} - C_k x_k = f_k`, `y_k = H_k x_k + g_k`
//! may be non-causal: when `F` is rank deficient some state directions are
//! never determined by the equations. This crate estimates such systems under
//! deterministic, jointly ellipsoid-bounded disturbances and reports, per
//! step, the guaranteed ellipsoid of states consistent with the data, the
//! observable subspace, the non-causality index and worst-case directional
//! errors.
//!
//! Modules:
//!
//! - [`linalg`] — SVD-backed pseudoinverse, rank, projector and SPD kernels.
//! - [`model`] — discrete descriptor models, admissible-disturbance sampling
//!   and trajectory simulation (including the built-in demo scenarios).
//! - [`discrete`] — the recursive minimax filter, observability diagnostics,
//!   the full-column-rank Kalman recursion and a batch verification oracle.
//! - [`continuous`] — the reduced-order continuous-time filter: SVD
//!   coordinates, Riccati integration and the closed-range diagnostic.
//! - [`io`] — JSON model ingestion and CSV emission.
//! - [`cli`] — the pipelines behind the `dmx` binary.
//!
//! Each major capability has a runnable demonstration under `examples/`.
//!
//! ```
//! use dmx::{linalg::ToleranceConfig, model, discrete};
//!
//! let tol = ToleranceConfig::default();
//! let scenario = model::builtin_section3(8);
//! let d = model::sample_disturbance(&scenario.model, 7, 0.9)
//!     .unwrap()
//!     .with_fixed_q(&scenario.model, scenario.q.clone(), 0.9)
//!     .unwrap();
//! let traj = model::propagate(&scenario.model, &d, &scenario.free).unwrap();
//! let states = discrete::run_minimax(&scenario.model, &traj.y, None, &tol).unwrap();
//! let report = discrete::estimate(states.last().unwrap(), &tol).unwrap();
//! assert!(discrete::membership(&report, states.last().unwrap(), &traj.x[8]));
//! ```

pub mod cli;
pub mod continuous;
pub mod discrete;
pub mod io;
pub mod linalg;
pub mod model;

pub use linalg::ToleranceConfig;

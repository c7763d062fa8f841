//! Model ingestion (JSON) and result serialization (CSV).
//!
//! Discrete models are JSON documents with fields `n, m, p, N` and arrays of
//! row-major matrices `F, C, H, S, S_seq, R_seq` (each matrix an array of
//! rows); `{"builtin": "section3"}` or `{"builtin": "scalar-example"}`
//! selects a generator instead. Continuous models carry a constant `F`, a
//! `grid` and per-grid-point arrays `C, H, Q, R`.
//!
//! CSV files use a fixed documented column order, render floats in shortest
//! round-trip form and spell infinite directional errors as the literal
//! `inf` (IEEE infinities never appear in files).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::continuous::{ContinuousDescriptorModel, ContinuousError};
use crate::discrete::DirectionalError;
use crate::linalg::ToleranceConfig;
use crate::model::{
    builtin_scalar_example, builtin_section3, BuiltinScenario, DiscreteDescriptorModel,
    DisturbanceRealization, ModelError, Trajectory,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model document: {0}")]
    Schema(String),
    #[error("unknown builtin scenario '{0}' (expected 'section3' or 'scalar-example')")]
    UnknownBuiltin(String),
    #[error("CSV {path}, line {line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Continuous(#[from] ContinuousError),
}

fn read_file(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

type MatrixRows = Vec<Vec<f64>>;

fn to_matrix(rows: &MatrixRows, what: &str) -> Result<DMatrix<f64>, IoError> {
    if rows.is_empty() {
        return Err(IoError::Schema(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(IoError::Schema(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(IoError::Schema(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn to_matrix_seq(seqs: &[MatrixRows], what: &str) -> Result<Vec<DMatrix<f64>>, IoError> {
    seqs.iter()
        .enumerate()
        .map(|(k, rows)| to_matrix(rows, &format!("{what}[{k}]")))
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteModelFile {
    builtin: Option<String>,
    #[serde(rename = "N")]
    horizon: Option<usize>,
    n: Option<usize>,
    m: Option<usize>,
    p: Option<usize>,
    #[serde(rename = "F")]
    f: Option<Vec<MatrixRows>>,
    #[serde(rename = "C")]
    c: Option<Vec<MatrixRows>>,
    #[serde(rename = "H")]
    h: Option<Vec<MatrixRows>>,
    #[serde(rename = "S")]
    s: Option<MatrixRows>,
    #[serde(rename = "S_seq")]
    s_seq: Option<Vec<MatrixRows>>,
    #[serde(rename = "R_seq")]
    r_seq: Option<Vec<MatrixRows>>,
}

/// Build one of the shipped scenarios by name.
pub fn builtin_scenario(name: &str, horizon: usize) -> Result<BuiltinScenario, IoError> {
    match name {
        "section3" => Ok(builtin_section3(horizon)),
        "scalar-example" => Ok(builtin_scalar_example(horizon)),
        other => Err(IoError::UnknownBuiltin(other.to_string())),
    }
}

/// A parsed discrete model: either a plain model (zero free schedule) or a
/// builtin scenario with its schedule and anchor.
pub fn load_discrete_model(
    json: &str,
    horizon_override: Option<usize>,
    tol: &ToleranceConfig,
) -> Result<BuiltinScenario, IoError> {
    let doc: DiscreteModelFile = serde_json::from_str(json)?;
    if let Some(name) = &doc.builtin {
        let horizon = horizon_override.or(doc.horizon).unwrap_or(40);
        return builtin_scenario(name, horizon);
    }
    let missing = |what: &str| IoError::Schema(format!("missing field {what}"));
    let f = to_matrix_seq(doc.f.as_ref().ok_or_else(|| missing("F"))?, "F")?;
    let c = to_matrix_seq(doc.c.as_ref().ok_or_else(|| missing("C"))?, "C")?;
    let h = to_matrix_seq(doc.h.as_ref().ok_or_else(|| missing("H"))?, "H")?;
    let s = to_matrix(doc.s.as_ref().ok_or_else(|| missing("S"))?, "S")?;
    let s_seq = to_matrix_seq(doc.s_seq.as_ref().ok_or_else(|| missing("S_seq"))?, "S_seq")?;
    let r_seq = to_matrix_seq(doc.r_seq.as_ref().ok_or_else(|| missing("R_seq"))?, "R_seq")?;
    let mut model = DiscreteDescriptorModel::new(f, c, h, s, s_seq, r_seq, tol)?;
    for (name, want, got) in [
        ("n", model.n, doc.n),
        ("m", model.m, doc.m),
        ("p", model.p, doc.p),
        ("N", model.horizon, doc.horizon),
    ] {
        if let Some(v) = got {
            if v != want {
                return Err(IoError::Schema(format!(
                    "declared {name} = {v} does not match matrices ({want})"
                )));
            }
        }
    }
    if let Some(n) = horizon_override {
        if n > model.horizon {
            return Err(IoError::Schema(format!(
                "horizon override {n} exceeds model horizon {}",
                model.horizon
            )));
        }
        model.f.truncate(n + 1);
        model.c.truncate(n);
        model.h.truncate(n + 1);
        model.s_seq.truncate(n);
        model.r_seq.truncate(n + 1);
        model.horizon = n;
    }
    let q = DVector::zeros(model.m);
    Ok(BuiltinScenario {
        model,
        free: Vec::new(),
        q,
    })
}

/// Load a discrete model from a path or a `builtin:NAME` reference.
pub fn load_discrete_source(
    source: &str,
    horizon_override: Option<usize>,
    tol: &ToleranceConfig,
) -> Result<BuiltinScenario, IoError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin_scenario(name, horizon_override.unwrap_or(40));
    }
    let json = read_file(Path::new(source))?;
    load_discrete_model(&json, horizon_override, tol)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContinuousModelFile {
    n: Option<usize>,
    m: Option<usize>,
    p: Option<usize>,
    #[serde(rename = "F")]
    f: MatrixRows,
    grid: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<MatrixRows>,
    #[serde(rename = "H")]
    h: Vec<MatrixRows>,
    #[serde(rename = "Q")]
    q: Vec<MatrixRows>,
    #[serde(rename = "R")]
    r: Vec<MatrixRows>,
}

/// Parse a continuous model document.
pub fn load_continuous_model(
    json: &str,
    tol: &ToleranceConfig,
) -> Result<ContinuousDescriptorModel, IoError> {
    let doc: ContinuousModelFile = serde_json::from_str(json)?;
    let f = to_matrix(&doc.f, "F")?;
    let c = to_matrix_seq(&doc.c, "C")?;
    let h = to_matrix_seq(&doc.h, "H")?;
    let q = to_matrix_seq(&doc.q, "Q")?;
    let r = to_matrix_seq(&doc.r, "R")?;
    let model = ContinuousDescriptorModel::new(f, doc.grid, c, h, q, r, tol)?;
    for (name, want, got) in [
        ("n", model.n, doc.n),
        ("m", model.m, doc.m),
        ("p", model.p, doc.p),
    ] {
        if let Some(v) = got {
            if v != want {
                return Err(IoError::Schema(format!(
                    "declared {name} = {v} does not match matrices ({want})"
                )));
            }
        }
    }
    Ok(model)
}

pub fn load_continuous_source(
    source: &str,
    tol: &ToleranceConfig,
) -> Result<ContinuousDescriptorModel, IoError> {
    let json = read_file(Path::new(source))?;
    load_continuous_model(&json, tol)
}

fn push_float(buf: &mut String, v: f64) {
    // `{}` renders the shortest digit string that round-trips, so emitted
    // files can be re-ingested bit-exactly.
    write!(buf, "{v}").expect("string write");
}

fn csv_line(buf: &mut String, fields: impl IntoIterator<Item = String>) {
    let mut first = true;
    for field in fields {
        if !first {
            buf.push(',');
        }
        buf.push_str(&field);
        first = false;
    }
    buf.push('\n');
}

/// `x1..xn,y1..yp`, one row per step.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let n = traj.x[0].len();
    let p = traj.y[0].len();
    let mut buf = String::new();
    csv_line(
        &mut buf,
        (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=p).map(|i| format!("y{i}"))),
    );
    for k in 0..traj.x.len() {
        let mut row = String::new();
        for (i, v) in traj.x[k].iter().chain(traj.y[k].iter()).enumerate() {
            if i > 0 {
                row.push(',');
            }
            push_float(&mut row, *v);
        }
        buf.push_str(&row);
        buf.push('\n');
    }
    write_file(path, &buf)
}

/// `k,q1..qm,f1..fm,g1..gp`: `q` appears in row 0 only, the `f` columns of
/// the final row are zero (no `f_N` exists).
pub fn write_realization_csv(path: &Path, d: &DisturbanceRealization) -> Result<(), IoError> {
    let m = d.q.len();
    let p = d.g[0].len();
    let steps = d.g.len();
    let mut buf = String::new();
    csv_line(
        &mut buf,
        std::iter::once("k".to_string())
            .chain((1..=m).map(|i| format!("q{i}")))
            .chain((1..=m).map(|i| format!("f{i}")))
            .chain((1..=p).map(|i| format!("g{i}"))),
    );
    for k in 0..steps {
        let mut row = k.to_string();
        for i in 0..m {
            row.push(',');
            push_float(&mut row, if k == 0 { d.q[i] } else { 0.0 });
        }
        for i in 0..m {
            row.push(',');
            push_float(&mut row, if k < d.f.len() { d.f[k][i] } else { 0.0 });
        }
        for i in 0..p {
            row.push(',');
            push_float(&mut row, d.g[k][i]);
        }
        buf.push_str(&row);
        buf.push('\n');
    }
    write_file(path, &buf)
}

/// One row of the filter output file.
#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub k: usize,
    pub x_hat: DVector<f64>,
    pub beta_hat: f64,
    pub index: usize,
    pub rho: Vec<DirectionalError>,
    /// `|x_i - x_hat_i|` when the true state is known (inline simulation).
    pub abs_err: Option<DVector<f64>>,
}

/// `k,x_hat_1..n,beta_hat,index,rho_1..d[,abs_err_1..n]`.
pub fn write_estimates_csv(path: &Path, rows: &[EstimateRow]) -> Result<(), IoError> {
    if rows.is_empty() {
        return write_file(path, "");
    }
    let n = rows[0].x_hat.len();
    let d = rows[0].rho.len();
    let with_err = rows[0].abs_err.is_some();
    let mut buf = String::new();
    let mut header: Vec<String> = vec!["k".into()];
    header.extend((1..=n).map(|i| format!("x_hat_{i}")));
    header.push("beta_hat".into());
    header.push("index".into());
    header.extend((1..=d).map(|i| format!("rho_{i}")));
    if with_err {
        header.extend((1..=n).map(|i| format!("abs_err_{i}")));
    }
    csv_line(&mut buf, header);
    for row in rows {
        let mut line = row.k.to_string();
        for v in row.x_hat.iter() {
            line.push(',');
            push_float(&mut line, *v);
        }
        line.push(',');
        push_float(&mut line, row.beta_hat);
        line.push(',');
        line.push_str(&row.index.to_string());
        for rho in &row.rho {
            line.push(',');
            line.push_str(&rho.to_string());
        }
        if let Some(err) = &row.abs_err {
            for v in err.iter() {
                line.push(',');
                push_float(&mut line, *v);
            }
        }
        buf.push_str(&line);
        buf.push('\n');
    }
    write_file(path, &buf)
}

/// `k,index,rank[,obs_1..obs_d]` with 1/0 flags for directions inside the
/// observable subspace.
pub fn write_observability_csv(
    path: &Path,
    rows: &[(usize, usize, usize, Vec<bool>)],
) -> Result<(), IoError> {
    let d = rows.first().map_or(0, |r| r.3.len());
    let mut buf = String::new();
    csv_line(
        &mut buf,
        ["k", "index", "rank"]
            .into_iter()
            .map(String::from)
            .chain((1..=d).map(|i| format!("obs_{i}"))),
    );
    for (k, index, rank, flags) in rows {
        let mut line = format!("{k},{index},{rank}");
        for flag in flags {
            line.push(',');
            line.push_str(if *flag { "1" } else { "0" });
        }
        buf.push_str(&line);
        buf.push('\n');
    }
    write_file(path, &buf)
}

/// `k,deviation,rank_ok`: deviation between the minimax estimate and the
/// full-rank recursion, `inf` once the rank precondition has failed.
pub fn write_compare_csv(path: &Path, rows: &[(usize, Option<f64>, bool)]) -> Result<(), IoError> {
    let mut buf = String::new();
    csv_line(&mut buf, ["k", "deviation", "rank_ok"].map(String::from));
    for (k, dev, ok) in rows {
        let dev_str = match dev {
            Some(v) => format!("{v}"),
            None => "inf".to_string(),
        };
        buf.push_str(&format!("{k},{dev_str},{}\n", if *ok { 1 } else { 0 }));
    }
    write_file(path, &buf)
}

/// `t,K_11..K_rr[,x_hat_1..r]`; `K` entries in row-major order.
pub fn write_riccati_csv(
    path: &Path,
    times: &[f64],
    ks: &[DMatrix<f64>],
    x_hat: Option<&[DVector<f64>]>,
) -> Result<(), IoError> {
    let r = ks.first().map_or(0, |k| k.nrows());
    let mut buf = String::new();
    let mut header: Vec<String> = vec!["t".into()];
    for i in 1..=r {
        for j in 1..=r {
            header.push(format!("K_{i}{j}"));
        }
    }
    if x_hat.is_some() {
        header.extend((1..=r).map(|i| format!("x_hat_{i}")));
    }
    csv_line(&mut buf, header);
    for (idx, t) in times.iter().enumerate() {
        let mut line = String::new();
        push_float(&mut line, *t);
        for i in 0..r {
            for j in 0..r {
                line.push(',');
                push_float(&mut line, ks[idx][(i, j)]);
            }
        }
        if let Some(xs) = x_hat {
            for v in xs[idx].iter() {
                line.push(',');
                push_float(&mut line, *v);
            }
        }
        buf.push_str(&line);
        buf.push('\n');
    }
    write_file(path, &buf)
}

fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.split(',').map(|s| s.trim().to_string()).collect(),
        None => {
            return Err(IoError::Csv {
                path: path.display().to_string(),
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(|s| s.trim().to_string()).collect());
        let _ = idx;
    }
    Ok((header, rows))
}

/// Read measurements from a CSV with columns `y1..yp` (other columns, e.g.
/// states of a simulated trajectory, are ignored).
pub fn read_measurements_csv(path: &Path, p: usize) -> Result<Vec<DVector<f64>>, IoError> {
    let (header, rows) = parse_csv(path)?;
    let mut cols = Vec::with_capacity(p);
    for i in 1..=p {
        let name = format!("y{i}");
        let pos = header
            .iter()
            .position(|h| h == &name)
            .ok_or_else(|| IoError::Csv {
                path: path.display().to_string(),
                line: 1,
                message: format!("missing column {name}"),
            })?;
        cols.push(pos);
    }
    let mut out = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let mut y = DVector::zeros(p);
        for (i, &pos) in cols.iter().enumerate() {
            let field = row.get(pos).ok_or_else(|| IoError::Csv {
                path: path.display().to_string(),
                line: idx + 2,
                message: "short row".into(),
            })?;
            y[i] = field.parse::<f64>().map_err(|e| IoError::Csv {
                path: path.display().to_string(),
                line: idx + 2,
                message: format!("bad float '{field}': {e}"),
            })?;
        }
        out.push(y);
    }
    Ok(out)
}

/// Read direction vectors, one comma-separated vector per line; `#` starts
/// a comment.
pub fn read_directions(path: &Path, n: usize) -> Result<Vec<DVector<f64>>, IoError> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| IoError::Csv {
            path: path.display().to_string(),
            line: idx + 1,
            message: format!("bad float: {e}"),
        })?;
        if vals.len() != n {
            return Err(IoError::Csv {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("direction has {} components, state has {n}", vals.len()),
            });
        }
        out.push(DVector::from_vec(vals));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn discrete_model_round_trip_from_json() {
        let json = r#"{
            "n": 2, "m": 2, "p": 1, "N": 1,
            "F": [[[1,0],[0,1]], [[1,0],[0,1]]],
            "C": [[[0.5,0],[0,0.5]]],
            "H": [[[1,0]], [[1,0]]],
            "S": [[1,0],[0,1]],
            "S_seq": [[[1,0],[0,1]]],
            "R_seq": [[[2]], [[2]]]
        }"#;
        let tol = ToleranceConfig::default();
        let scenario = load_discrete_model(json, None, &tol).unwrap();
        assert_eq!(scenario.model.n, 2);
        assert_eq!(scenario.model.horizon, 1);
        assert_abs_diff_eq!(scenario.model.r_seq[0][(0, 0)], 2.0);
    }

    #[test]
    fn builtin_reference_and_overrides() {
        let tol = ToleranceConfig::default();
        let scenario =
            load_discrete_model(r#"{"builtin": "section3", "N": 6}"#, None, &tol).unwrap();
        assert_eq!(scenario.model.horizon, 6);
        let scenario = load_discrete_source("builtin:scalar-example", Some(5), &tol).unwrap();
        assert_eq!(scenario.model.horizon, 5);
        assert!(matches!(
            load_discrete_model(r#"{"builtin": "nope"}"#, None, &tol),
            Err(IoError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn schema_errors_are_reported() {
        let tol = ToleranceConfig::default();
        assert!(matches!(
            load_discrete_model("{not json", None, &tol),
            Err(IoError::Json(_))
        ));
        assert!(matches!(
            load_discrete_model(r#"{"n": 1}"#, None, &tol),
            Err(IoError::Schema(_))
        ));
    }

    #[test]
    fn trajectory_csv_round_trips_measurements() {
        let dir = std::env::temp_dir().join("dmx_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("traj.csv");
        let traj = Trajectory {
            x: vec![
                nalgebra::dvector![1.0, -0.25],
                nalgebra::dvector![0.1, 2.0e-17],
            ],
            y: vec![
                nalgebra::dvector![0.30000000000000004],
                nalgebra::dvector![-7.125],
            ],
        };
        write_trajectory_csv(&path, &traj).unwrap();
        let ys = read_measurements_csv(&path, 1).unwrap();
        assert_eq!(ys.len(), 2);
        // Bit-exact round trip through the shortest-form rendering.
        assert_eq!(ys[0][0], 0.30000000000000004);
        assert_eq!(ys[1][0], -7.125);
    }

    #[test]
    fn directions_file_parsing() {
        let dir = std::env::temp_dir().join("dmx_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("directions.txt");
        std::fs::write(&path, "# comment\n0,0,1\n1, 0, 0 # axis\n").unwrap();
        let dirs = read_directions(&path, 3).unwrap();
        assert_eq!(dirs.len(), 2);
        assert_eq!(dirs[0], nalgebra::dvector![0.0, 0.0, 1.0]);
        assert!(read_directions(&path, 2).is_err());
    }

    #[test]
    fn continuous_model_from_json() {
        let json = r#"{
            "F": [[1,0],[0,0]],
            "grid": [0.0, 0.5, 1.0],
            "C": [[[0.1,0.2],[0.3,0.4]], [[0.1,0.2],[0.3,0.4]], [[0.1,0.2],[0.3,0.4]]],
            "H": [[[1,0]], [[1,0]], [[1,0]]],
            "Q": [[[1,0],[0,1]], [[1,0],[0,1]], [[1,0],[0,1]]],
            "R": [[[1]], [[1]], [[1]]]
        }"#;
        let model = load_continuous_model(json, &ToleranceConfig::default()).unwrap();
        assert_eq!((model.n, model.m, model.p), (2, 2, 1));
        assert_eq!(model.grid.len(), 3);
    }
}

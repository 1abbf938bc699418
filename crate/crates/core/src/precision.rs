// SPDX-License-Identifier: MIT OR Apache-2.0

//! Node-wise lasso surrogate for the inverse covariance of the design rows.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, SubGroup};
use crate::error::{Error, Result};
use crate::lasso::{self, SolverOptions};

/// Default multiplier grid for the node-wise penalties.
pub const DEFAULT_NODE_GRID: [f64; 6] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0];

const COLLINEAR_TAU_SQ: f64 = 1e-12;

/// Node-wise fits run with a tighter KKT slack than the change-point scans so
/// that the transfer bound on `Σ̂Θ̂ⱼ − eⱼ` holds with room to spare.
const NODE_OPTS: SolverOptions = SolverOptions {
    tol: 1e-9,
    max_sweeps: 10_000,
    kkt_tol: 1e-9,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NodeTuning {
    /// One multiplier, chosen by cross-validating the regression of column 1.
    SharedCv {
        grid: Vec<f64>,
    },
    /// A separate cross-validated multiplier for every column.
    PerColumnCv {
        grid: Vec<f64>,
    },
    Fixed {
        c: f64,
    },
}

impl Default for NodeTuning {
    fn default() -> Self {
        NodeTuning::SharedCv {
            grid: DEFAULT_NODE_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodewiseConfig {
    pub tuning: NodeTuning,
    pub folds: usize,
    pub seed: u64,
}

impl Default for NodewiseConfig {
    fn default() -> Self {
        Self {
            tuning: NodeTuning::default(),
            folds: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionEstimate {
    /// Row `j` is `Θ̂ⱼᵀ`.
    pub theta: DMatrix<f64>,
    pub tau_sq: DVector<f64>,
    pub lambda_node: DVector<f64>,
    /// `Θ̂ⱼᵀ Σ̂ₙ Θ̂ⱼ` with `Σ̂ₙ = XᵀX/n`.
    pub omega_diag: DVector<f64>,
}

impl PrecisionEstimate {
    pub fn p(&self) -> usize {
        self.tau_sq.len()
    }

    /// Largest slack of the bound `‖Σ̂ₙΘ̂ⱼ − eⱼ‖∞ ≤ λ_(j)/τ̂ⱼ²` over all `j`
    /// (positive when the bound is exceeded).
    pub fn kkt_transfer_excess(&self, data: &Dataset) -> f64 {
        let sigma = data.view(0, data.n()).expect("full view").covariance();
        let prod = &sigma * self.theta.transpose();
        let p = self.p();
        (0..p)
            .map(|j| {
                let col = prod.column(j);
                let dev = (0..p)
                    .map(|k| (col[k] - if k == j { 1.0 } else { 0.0 }).abs())
                    .fold(0.0, f64::max);
                dev - self.lambda_node[j] / self.tau_sq[j]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Fits `Θ̂` with one cross-validated multiplier shared by all columns.
pub fn fit_nodewise(data: &Dataset, c_node_grid: &[f64], folds: usize, seed: u64) -> Result<PrecisionEstimate> {
    fit_nodewise_with(
        data,
        &NodewiseConfig {
            tuning: NodeTuning::SharedCv {
                grid: c_node_grid.to_vec(),
            },
            folds,
            seed,
        },
    )
}

pub fn fit_nodewise_with(data: &Dataset, cfg: &NodewiseConfig) -> Result<PrecisionEstimate> {
    let (n, p) = (data.n(), data.p());
    let x = data.x();
    if p == 1 {
        let ss = x.column(0).norm_squared();
        if ss / (n as f64) <= COLLINEAR_TAU_SQ {
            return Err(Error::Collinear {
                column: 1,
                tau_sq: ss / n as f64,
            });
        }
        let theta = n as f64 / ss;
        return Ok(PrecisionEstimate {
            theta: DMatrix::from_element(1, 1, theta),
            tau_sq: DVector::from_element(1, ss / n as f64),
            lambda_node: DVector::zeros(1),
            omega_diag: DVector::from_element(1, theta),
        });
    }
    if n < 6 {
        return Err(Error::Data(format!(
            "node-wise regression needs at least 6 rows, got {n}"
        )));
    }
    let full = data.view(0, n)?;
    let gram = full.gram();
    let log_p = lasso::log_p(p);
    let rate = (log_p / n as f64).sqrt();

    let column_c = |j: usize, grid: &[f64]| -> Result<f64> {
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let xo = x.select_columns(others.iter());
        let curve = lasso::cv_curve(
            &xo.as_view(),
            &x.column(j),
            grid,
            cfg.folds,
            crate::rng::derive(cfg.seed, j as u64),
            log_p,
            &SolverOptions::default(),
        )?;
        Ok(grid[lasso::argmin_curve(grid, &curve)])
    };
    let multipliers: Vec<f64> = match &cfg.tuning {
        NodeTuning::Fixed { c } => {
            if !(*c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("node-wise multiplier {c} must be positive")));
            }
            vec![*c; p]
        }
        NodeTuning::SharedCv { grid } => vec![column_c(0, grid)?; p],
        NodeTuning::PerColumnCv { grid } => (0..p)
            .into_par_iter()
            .map(|j| column_c(j, grid))
            .collect::<Result<_>>()?,
    };

    let rows: Vec<(DVector<f64>, f64, f64)> = (0..p)
        .into_par_iter()
        .map(|j| {
            let lambda = multipliers[j] * rate;
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let q = p - 1;
            let mut sub = vec![0.0; q * q];
            for (a, &ka) in others.iter().enumerate() {
                for (b, &kb) in others.iter().enumerate() {
                    sub[a * q + b] = gram[(ka, kb)];
                }
            }
            let xty: Vec<f64> = others.iter().map(|&k| gram[(k, j)]).collect();
            let mut gamma = vec![0.0; q];
            let mut grad = vec![0.0; q];
            let outcome = lasso::solve_gram(&sub, &xty, n as f64, lambda, &mut gamma, &mut grad, &NODE_OPTS, None);
            if !outcome.converged {
                return Err(Error::NodewiseDiverged { column: j + 1 });
            }
            let mut resid = x.column(j).clone_owned();
            let mut l1 = 0.0;
            for (a, &k) in others.iter().enumerate() {
                if gamma[a] != 0.0 {
                    resid.axpy(-gamma[a], &x.column(k), 1.0);
                    l1 += gamma[a].abs();
                }
            }
            let tau_sq = resid.norm_squared() / n as f64 + lambda * l1;
            if !(tau_sq > COLLINEAR_TAU_SQ) {
                return Err(Error::Collinear { column: j + 1, tau_sq });
            }
            let mut row = DVector::zeros(p);
            row[j] = 1.0 / tau_sq;
            for (a, &k) in others.iter().enumerate() {
                row[k] = -gamma[a] / tau_sq;
            }
            Ok((row, tau_sq, lambda))
        })
        .collect::<Result<_>>()?;

    let mut theta = DMatrix::zeros(p, p);
    let mut tau_sq = DVector::zeros(p);
    let mut lambda_node = DVector::zeros(p);
    for (j, (row, t, l)) in rows.into_iter().enumerate() {
        theta.set_row(j, &row.transpose());
        tau_sq[j] = t;
        lambda_node[j] = l;
    }
    let omega_diag = omega_from_theta(data, &theta);
    Ok(PrecisionEstimate {
        theta,
        tau_sq,
        lambda_node,
        omega_diag,
    })
}

/// `ω̂ⱼⱼ = ‖X Θ̂ⱼ‖²/n`, which equals `Θ̂ⱼᵀ Σ̂ₙ Θ̂ⱼ`.
fn omega_from_theta(data: &Dataset, theta: &DMatrix<f64>) -> DVector<f64> {
    let scores = data.x() * theta.transpose();
    let n = data.n() as f64;
    DVector::from_iterator(theta.nrows(), scores.column_iter().map(|c| c.norm_squared() / n))
}

/// `ω̂ⱼⱼ` for the coordinates of `g`, in the order of `g`.
pub fn omega_for_group(est: &PrecisionEstimate, g: &SubGroup) -> Result<Vec<f64>> {
    g.check(est.p())?;
    Ok(g.indices().iter().map(|&j| est.omega_diag[j]).collect())
}

/// Content key for the cache: the design bytes plus the tuning that produced the fit.
pub fn cache_key(data: &Dataset, cfg: &NodewiseConfig) -> String {
    let mut h = Sha256::new();
    h.update((data.n() as u64).to_le_bytes());
    h.update((data.p() as u64).to_le_bytes());
    for v in data.x().iter() {
        h.update(v.to_le_bytes());
    }
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    hex::encode(h.finalize())
}

const CACHE_MAGIC: &str = "regcpt-precision-cache,1";

fn write_row<'a>(out: &mut String, vals: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(',');
        }
        first = false;
        // `{:?}` prints the shortest representation that round-trips exactly.
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

/// Writes the estimate as CSV blocks (`theta`, `tau_sq`, `lambda_node`, `omega_diag`).
pub fn save_cache(path: &Path, key: &str, est: &PrecisionEstimate) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CACHE_MAGIC}\nkey,{key}\np,{}", est.p()).unwrap();
    out.push_str("[theta]\n");
    for row in est.theta.row_iter() {
        write_row(&mut out, row.iter());
    }
    for (name, v) in [
        ("tau_sq", &est.tau_sq),
        ("lambda_node", &est.lambda_node),
        ("omega_diag", &est.omega_diag),
    ] {
        writeln!(out, "[{name}]").unwrap();
        write_row(&mut out, v.iter());
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a cache file. Returns `Ok(None)` when the file is absent or was
/// written for a different key.
pub fn load_cache(path: &Path, key: &str) -> Result<Option<PrecisionEstimate>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(source) => {
            return Err(Error::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let bad = |msg: &str| Error::Data(format!("precision cache {}: {msg}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some(CACHE_MAGIC) {
        return Err(bad("unrecognized header"));
    }
    match lines.next().and_then(|l| l.strip_prefix("key,")) {
        Some(k) if k == key => {}
        Some(_) => return Ok(None),
        None => return Err(bad("missing key")),
    }
    let p: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("p,"))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing dimension"))?;
    let parse_row = |line: Option<&str>| -> Result<Vec<f64>> {
        let line = line.ok_or_else(|| bad("truncated"))?;
        let vals = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("non-numeric entry"))?;
        if vals.len() != p {
            return Err(bad("row length mismatch"));
        }
        Ok(vals)
    };
    let expect = |lines: &mut std::str::Lines<'_>, name: &str| -> Result<()> {
        if lines.next() == Some(&format!("[{name}]")[..]) {
            Ok(())
        } else {
            Err(bad(&format!("missing block {name}")))
        }
    };
    expect(&mut lines, "theta")?;
    let mut theta = DMatrix::zeros(p, p);
    for j in 0..p {
        let row = parse_row(lines.next())?;
        for (k, v) in row.into_iter().enumerate() {
            theta[(j, k)] = v;
        }
    }
    let mut vecs = Vec::new();
    for name in ["tau_sq", "lambda_node", "omega_diag"] {
        expect(&mut lines, name)?;
        vecs.push(DVector::from_vec(parse_row(lines.next())?));
    }
    let omega_diag = vecs.pop().unwrap();
    let lambda_node = vecs.pop().unwrap();
    let tau_sq = vecs.pop().unwrap();
    Ok(Some(PrecisionEstimate {
        theta,
        tau_sq,
        lambda_node,
        omega_diag,
    }))
}

/// Fits through an on-disk cache keyed by [`cache_key`].
pub fn fit_nodewise_cached(data: &Dataset, cfg: &NodewiseConfig, path: &Path) -> Result<PrecisionEstimate> {
    let key = cache_key(data, cfg);
    if let Some(est) = load_cache(path, &key)? {
        if est.p() == data.p() {
            return Ok(est);
        }
    }
    let est = fit_nodewise_with(data, cfg)?;
    save_cache(path, &key, &est)?;
    Ok(est)
}

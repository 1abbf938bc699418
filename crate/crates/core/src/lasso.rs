// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lasso by cyclic coordinate descent on the covariance (Gram) form, and
//! K-fold selection of the penalty multiplier.
//!
//! Objective for a segment of length `m`:
//! `(1/(2m))·‖y − Xβ‖² + λ‖β‖₁`.
//!
//! The solver works from `G = XᵀX` and `Xᵀy` and maintains the unnormalized
//! gradient `c = Xᵀy − Gβ`. A coordinate update costs `O(1)` when the
//! coefficient does not move and `O(p)` when it does.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use serde::Serialize;

use crate::data::SegmentView;
use crate::error::{Error, Result};
use crate::rng;

/// `sign(z)·max(|z| − γ, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Stopping rule for coordinate descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Sweeps stop once the largest coefficient move is below `tol·max(1, ‖β‖∞)`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// KKT slack required before a fit is reported as converged.
    pub kkt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 10_000,
            kkt_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct CdOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// `grad = xty − G·β`, touching only the nonzero coefficients.
pub(crate) fn refresh_gradient(gram: &[f64], xty: &[f64], beta: &[f64], grad: &mut [f64]) {
    let p = xty.len();
    grad.copy_from_slice(xty);
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            let row = &gram[j * p..(j + 1) * p];
            for (g, &r) in grad.iter_mut().zip(row) {
                *g -= b * r;
            }
        }
    }
}

pub(crate) fn kkt_satisfied(grad: &[f64], beta: &[f64], m: f64, lambda: f64, tol: f64) -> bool {
    grad.iter().zip(beta).all(|(&g, &b)| {
        let g = g / m;
        if b > 0.0 {
            (g - lambda).abs() <= tol
        } else if b < 0.0 {
            (g + lambda).abs() <= tol
        } else {
            g.abs() <= lambda + tol
        }
    })
}

/// Objective from Gram quantities: `(yᵀy − βᵀXᵀy − βᵀc)/(2m) + λ‖β‖₁`.
fn gram_objective(yty: f64, xty: &[f64], beta: &[f64], grad: &[f64], m: f64, lambda: f64) -> f64 {
    let mut rss = yty;
    let mut l1 = 0.0;
    for ((&b, &xy), &g) in beta.iter().zip(xty).zip(grad) {
        rss -= b * (xy + g);
        l1 += b.abs();
    }
    rss / (2.0 * m) + lambda * l1
}

/// Cyclic coordinate descent. `gram` is the symmetric `p×p` matrix in row-major
/// order; `beta` holds the warm start on entry and the solution on exit, `grad`
/// receives `xty − G·β` for the returned `beta`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_gram(
    gram: &[f64],
    xty: &[f64],
    m: f64,
    lambda: f64,
    beta: &mut [f64],
    grad: &mut [f64],
    opts: &SolverOptions,
    mut trace: Option<(&mut Vec<f64>, f64)>,
) -> CdOutcome {
    let p = xty.len();
    debug_assert_eq!(gram.len(), p * p);
    let threshold = m * lambda;
    refresh_gradient(gram, xty, beta, grad);
    if let Some((t, yty)) = trace.as_mut() {
        t.push(gram_objective(*yty, xty, beta, grad, m, lambda));
    }
    for sweep in 1..=opts.max_sweeps {
        let mut max_change: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[j * p + j];
            let old = beta[j];
            let new = if gjj > 0.0 {
                soft_threshold(grad[j] + gjj * old, threshold) / gjj
            } else {
                0.0
            };
            if new != old {
                let delta = new - old;
                let row = &gram[j * p..(j + 1) * p];
                for (g, &r) in grad.iter_mut().zip(row) {
                    *g -= delta * r;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
            max_abs = max_abs.max(new.abs());
        }
        if let Some((t, yty)) = trace.as_mut() {
            t.push(gram_objective(*yty, xty, beta, grad, m, lambda));
        }
        if max_change < opts.tol * max_abs.max(1.0) {
            refresh_gradient(gram, xty, beta, grad);
            if kkt_satisfied(grad, beta, m, lambda, opts.kkt_tol) {
                return CdOutcome {
                    iterations: sweep,
                    converged: true,
                };
            }
        }
    }
    refresh_gradient(gram, xty, beta, grad);
    CdOutcome {
        iterations: opts.max_sweeps,
        converged: false,
    }
}

/// Row-major symmetric `XᵀX` and `Xᵀy`.
pub(crate) fn gram_parts(x: &DMatrixView<'_, f64>, y: &DVectorView<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let p = x.ncols();
    let mut gram = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let v = x.column(i).dot(&x.column(j));
            gram[i * p + j] = v;
            gram[j * p + i] = v;
        }
    }
    let xty = (0..p).map(|j| x.column(j).dot(y)).collect();
    (gram, xty)
}

/// `(1/(2m))·‖y − Xβ‖² + λ‖β‖₁` evaluated from explicit residuals.
pub fn lasso_objective(x: &DMatrixView<'_, f64>, y: &DVectorView<'_, f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * beta;
    r.norm_squared() / (2.0 * y.len() as f64) + lambda * beta.lp_norm(1)
}

/// Largest KKT violation of `beta` for the lasso problem on `(x, y)`.
pub fn kkt_violation(x: &DMatrixView<'_, f64>, y: &DVectorView<'_, f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let m = y.len() as f64;
    let r = y - x * beta;
    let g = x.transpose() * r / m;
    g.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            if b > 0.0 {
                (g - lambda).abs()
            } else if b < 0.0 {
                (g + lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lasso on an arbitrary `(x, y)` pair.
pub fn fit_lasso_xy(
    x: &DMatrixView<'_, f64>,
    y: &DVectorView<'_, f64>,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    fit_inner(x, y, lambda, warm_start, opts, None)
}

fn fit_inner(
    x: &DMatrixView<'_, f64>,
    y: &DVectorView<'_, f64>,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
    opts: &SolverOptions,
    trace: Option<&mut Vec<f64>>,
) -> Result<LassoFit> {
    let (m, p) = (x.nrows(), x.ncols());
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda = {lambda} must be finite and >= 0")));
    }
    if lambda == 0.0 && m < p {
        return Err(Error::Config(format!(
            "lambda = 0 needs at least as many rows as columns (m = {m}, p = {p})"
        )));
    }
    if m < 2 {
        return Err(Error::Data(format!("segment of length {m} is too short")));
    }
    let (gram, xty) = gram_parts(x, y);
    let mut beta: Vec<f64> = match warm_start {
        Some(w) if w.len() == p => w.iter().copied().collect(),
        Some(w) => {
            return Err(Error::Config(format!(
                "warm start has length {}, expected {p}",
                w.len()
            )))
        }
        None => vec![0.0; p],
    };
    let mut grad = vec![0.0; p];
    let yty = y.norm_squared();
    let outcome = solve_gram(
        &gram,
        &xty,
        m as f64,
        lambda,
        &mut beta,
        &mut grad,
        opts,
        trace.map(|t| (t, yty)),
    );
    let beta = DVector::from_vec(beta);
    let objective = lasso_objective(x, y, &beta, lambda);
    Ok(LassoFit {
        beta,
        lambda,
        iterations: outcome.iterations,
        converged: outcome.converged,
        objective,
    })
}

/// Lasso on one segment of a dataset.
pub fn fit_lasso(seg: &SegmentView<'_>, lambda: f64, warm_start: Option<&DVector<f64>>) -> Result<LassoFit> {
    fit_lasso_with(seg, lambda, warm_start, &SolverOptions::default())
}

pub fn fit_lasso_with(
    seg: &SegmentView<'_>,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    fit_inner(&seg.x(), &seg.y(), lambda, warm_start, opts, None)
}

/// Like [`fit_lasso`], also returning the objective after every sweep
/// (entry 0 is the objective at the starting point).
pub fn fit_lasso_traced(
    seg: &SegmentView<'_>,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
) -> Result<(LassoFit, Vec<f64>)> {
    let mut trace = Vec::new();
    let fit = fit_inner(
        &seg.x(),
        &seg.y(),
        lambda,
        warm_start,
        &SolverOptions::default(),
        Some(&mut trace),
    )?;
    Ok((fit, trace))
}

/// `log(p)` floored at `log 2` so single-predictor problems stay penalized.
pub fn log_p(p: usize) -> f64 {
    (p.max(2) as f64).ln()
}

/// Penalty rule `λ(m) = C·sqrt(log(p)/m)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltySchedule {
    pub c: f64,
}

impl PenaltySchedule {
    /// `c = 0` is accepted and yields unpenalized fits (only valid where `m ≥ p`).
    pub fn new(c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("penalty multiplier {c} must be >= 0")));
        }
        Ok(Self { c })
    }

    pub fn lambda(&self, p: usize, m: usize) -> f64 {
        self.c * (log_p(p) / m as f64).sqrt()
    }

    /// Same rule with the multiplier scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { c: self.c * factor }
    }
}

/// Default multiplier grid `{1, …, 8}`.
pub fn default_c_grid() -> Vec<f64> {
    (1..=8).map(f64::from).collect()
}

/// Mean held-out squared error for each multiplier in `grid`, with
/// `λ = C·sqrt(log_p / m_train)` on each training split. Folds come from a
/// seeded permutation of the rows: row `perm[i]` lands in fold `i mod folds`.
pub(crate) fn cv_curve(
    x: &DMatrixView<'_, f64>,
    y: &DVectorView<'_, f64>,
    grid: &[f64],
    folds: usize,
    seed: u64,
    log_p: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let (m, p) = (x.nrows(), x.ncols());
    if grid.is_empty() {
        return Err(Error::Config("penalty grid is empty".into()));
    }
    if grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::Config("penalty grid entries must be positive".into()));
    }
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if m < 2 * folds {
        return Err(Error::Data(format!(
            "segment of length {m} is too short for {folds}-fold cross-validation"
        )));
    }
    let perm = rng::stream(seed, 0).permutation(m);
    let mut fold_of = vec![0usize; m];
    for (i, &row) in perm.iter().enumerate() {
        fold_of[row] = i % folds;
    }
    // Largest penalty first so each fit warm-starts from a sparser one.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let mut total = vec![0.0; grid.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..m).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..m).filter(|&i| fold_of[i] == f).collect();
        let xt = x.select_rows(train.iter());
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let xv = x.select_rows(test.iter());
        let yv = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
        let (gram, xty) = gram_parts(&xt.as_view(), &yt.as_view());
        let mt = train.len() as f64;
        let mut beta = vec![0.0; p];
        let mut grad = vec![0.0; p];
        for &gi in &order {
            let lambda = grid[gi] * (log_p / mt).sqrt();
            solve_gram(&gram, &xty, mt, lambda, &mut beta, &mut grad, opts, None);
            let b = DVector::from_column_slice(&beta);
            let resid = &yv - &xv * &b;
            total[gi] += resid.norm_squared() / test.len() as f64;
        }
    }
    Ok(total.into_iter().map(|t| t / folds as f64).collect())
}

/// Index of the smallest curve value; exact ties go to the smaller multiplier.
pub(crate) fn argmin_curve(grid: &[f64], curve: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..grid.len() {
        if curve[i] < curve[best] || (curve[i] == curve[best] && grid[i] < grid[best]) {
            best = i;
        }
    }
    best
}

/// Picks `C` from `grid` by `folds`-fold cross-validation on one segment.
pub fn cv_select_c(seg: &SegmentView<'_>, grid: &[f64], folds: usize, seed: u64) -> Result<PenaltySchedule> {
    let curve = cv_curve(
        &seg.x(),
        &seg.y(),
        grid,
        folds,
        seed,
        log_p(seg.p()),
        &SolverOptions::default(),
    )?;
    PenaltySchedule::new(grid[argmin_curve(grid, &curve)])
}

/// Dense helper for tests and small problems: `XᵀX/m` as a matrix.
pub fn normalized_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x / x.nrows() as f64
}

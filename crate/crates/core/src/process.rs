// SPDX-License-Identifier: MIT OR Apache-2.0

//! De-biased lasso difference process over a search grid, the aggregated
//! surface `H_G`, the argmax estimator and the pooled residual variance.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{Dataset, SearchGrid, SegmentView, SubGroup};
use crate::error::{Error, Result};
use crate::lasso::{self, LassoFit, PenaltySchedule, SolverOptions};
use crate::precision::PrecisionEstimate;

/// Snapshots of the per-split Gram matrices are kept in memory up to this size;
/// beyond it every scan rebuilds them incrementally.
pub const DEFAULT_GRAM_BUDGET: usize = 1 << 30;

const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Lasso fits and gradients for one pass over the grid.
pub(crate) struct Scan {
    pub p: usize,
    /// Row-major `|grid| × p`.
    pub beta_left: Vec<f64>,
    pub beta_right: Vec<f64>,
    /// `X_segᵀ(y_seg − X_seg β̂)`, unnormalized.
    pub grad_left: Vec<f64>,
    pub grad_right: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl Scan {
    fn row(v: &[f64], idx: usize, p: usize) -> &[f64] {
        &v[idx * p..(idx + 1) * p]
    }
}

enum GramStore {
    Snapshots { left: Vec<Vec<f64>>, right: Vec<Vec<f64>> },
    Streaming,
}

/// Shared, read-only state for repeated scans over one design: row-major `X`,
/// `Θ̂`, the penalty schedule and (when they fit the budget) Gram snapshots.
pub(crate) struct Engine {
    n: usize,
    p: usize,
    x_rows: Vec<f64>,
    points: Vec<usize>,
    theta: DMatrix<f64>,
    lambda_left: Vec<f64>,
    lambda_right: Vec<f64>,
    opts: SolverOptions,
    grams: GramStore,
}

fn add_outer(gram: &mut [f64], xi: &[f64]) {
    let p = xi.len();
    for (a, &xa) in xi.iter().enumerate() {
        let row = &mut gram[a * p..(a + 1) * p];
        for (g, &xb) in row.iter_mut().zip(xi) {
            *g += xa * xb;
        }
    }
}

impl Engine {
    pub fn new(
        data: &Dataset,
        theta: &DMatrix<f64>,
        grid: &SearchGrid,
        schedule: PenaltySchedule,
        opts: SolverOptions,
        gram_budget: usize,
    ) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        if grid.n != n {
            return Err(Error::Config(format!(
                "grid built for n = {} used on data with n = {n}",
                grid.n
            )));
        }
        if theta.nrows() != p || theta.ncols() != p {
            return Err(Error::Config(format!(
                "precision estimate is {}x{}, data has p = {p}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        let points = grid.points.clone();
        let lambda_left = points.iter().map(|&k| schedule.lambda(p, k)).collect();
        let lambda_right = points.iter().map(|&k| schedule.lambda(p, n - k)).collect();
        let mut engine = Engine {
            n,
            p,
            x_rows: data.x_row_major(),
            points,
            theta: theta.clone(),
            lambda_left,
            lambda_right,
            opts,
            grams: GramStore::Streaming,
        };
        let bytes = 2usize
            .saturating_mul(engine.points.len())
            .saturating_mul(p * p)
            .saturating_mul(std::mem::size_of::<f64>());
        if bytes <= gram_budget {
            engine.grams = engine.snapshots();
        }
        Ok(engine)
    }

    fn snapshots(&self) -> GramStore {
        let p = self.p;
        let mut running = vec![0.0; p * p];
        let mut left = Vec::with_capacity(self.points.len());
        let mut row = 0;
        for &k in &self.points {
            while row < k {
                add_outer(&mut running, self.x_row(row));
                row += 1;
            }
            left.push(running.clone());
        }
        running.iter_mut().for_each(|v| *v = 0.0);
        let mut right = vec![Vec::new(); self.points.len()];
        let mut row = self.n;
        for (idx, &k) in self.points.iter().enumerate().rev() {
            while row > k {
                row -= 1;
                add_outer(&mut running, self.x_row(row));
            }
            right[idx] = running.clone();
        }
        GramStore::Snapshots { left, right }
    }

    fn x_row(&self, i: usize) -> &[f64] {
        &self.x_rows[i * self.p..(i + 1) * self.p]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One warm-started chain. `ascending` walks the left segments `[0, k)`,
    /// otherwise the right segments `[k, n)` from the last grid point down.
    fn chain(&self, y: &[f64], ascending: bool) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let (p, g) = (self.p, self.points.len());
        let mut betas = vec![0.0; g * p];
        let mut grads = vec![0.0; g * p];
        let mut ok = vec![true; g];
        let mut xty = vec![0.0; p];
        let mut beta = vec![0.0; p];
        let mut grad = vec![0.0; p];
        let mut running = match self.grams {
            GramStore::Streaming => vec![0.0; p * p],
            GramStore::Snapshots { .. } => Vec::new(),
        };
        let order: Box<dyn Iterator<Item = usize>> = if ascending {
            Box::new(0..g)
        } else {
            Box::new((0..g).rev())
        };
        let mut row = if ascending { 0 } else { self.n };
        for idx in order {
            let k = self.points[idx];
            let mut absorb = |i: usize, running: &mut Vec<f64>| {
                let xi = self.x_row(i);
                for (t, &v) in xty.iter_mut().zip(xi) {
                    *t += v * y[i];
                }
                if !running.is_empty() {
                    add_outer(running, xi);
                }
            };
            let (m, lambda) = if ascending {
                while row < k {
                    absorb(row, &mut running);
                    row += 1;
                }
                (k, self.lambda_left[idx])
            } else {
                while row > k {
                    row -= 1;
                    absorb(row, &mut running);
                }
                (self.n - k, self.lambda_right[idx])
            };
            let gram: &[f64] = match &self.grams {
                GramStore::Snapshots { left, right } => {
                    if ascending {
                        &left[idx]
                    } else {
                        &right[idx]
                    }
                }
                GramStore::Streaming => &running,
            };
            let out = lasso::solve_gram(gram, &xty, m as f64, lambda, &mut beta, &mut grad, &self.opts, None);
            ok[idx] = out.converged;
            betas[idx * p..(idx + 1) * p].copy_from_slice(&beta);
            grads[idx * p..(idx + 1) * p].copy_from_slice(&grad);
        }
        (betas, grads, ok)
    }

    /// Fits every split of the grid for response `y`.
    pub fn scan(&self, y: &[f64]) -> Scan {
        debug_assert_eq!(y.len(), self.n);
        let ((beta_left, grad_left, ok_l), (beta_right, grad_right, ok_r)) =
            rayon::join(|| self.chain(y, true), || self.chain(y, false));
        let flagged = ok_l.iter().zip(&ok_r).map(|(a, b)| !(a & b)).collect();
        Scan {
            p: self.p,
            beta_left,
            beta_right,
            grad_left,
            grad_right,
            flagged,
        }
    }

    /// `β̆ᴸ − β̆ᴿ` at grid index `idx`, using one product with `Θ̂`.
    pub fn debiased_difference(&self, scan: &Scan, idx: usize) -> DVector<f64> {
        let (p, k) = (self.p, self.points[idx]);
        let (kl, kr) = (k as f64, (self.n - k) as f64);
        let gl = Scan::row(&scan.grad_left, idx, p);
        let gr = Scan::row(&scan.grad_right, idx, p);
        let v = DVector::from_iterator(p, gl.iter().zip(gr).map(|(a, b)| a / kl - b / kr));
        let mut d = &self.theta * v;
        let bl = Scan::row(&scan.beta_left, idx, p);
        let br = Scan::row(&scan.beta_right, idx, p);
        for j in 0..p {
            d[j] += bl[j] - br[j];
        }
        d
    }

    fn debias(&self, beta: &[f64], grad: &[f64], m: usize) -> DVector<f64> {
        let v = DVector::from_iterator(self.p, grad.iter().map(|g| g / m as f64));
        &self.theta * v + DVector::from_column_slice(beta)
    }
}

/// `sqrt(n)·(k/n)·(1 − k/n)`.
#[inline]
pub fn process_weight(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    n.sqrt() * (k / n) * (1.0 - k / n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CptProcess {
    pub n: usize,
    pub grid: SearchGrid,
    /// `|grid| × p`; row `i` holds `Z(k)` at `k = grid.points[i]`.
    pub z: DMatrix<f64>,
    pub debiased_left: DMatrix<f64>,
    pub debiased_right: DMatrix<f64>,
    pub lasso_left: DMatrix<f64>,
    pub lasso_right: DMatrix<f64>,
    /// Grid points where either lasso fit failed to converge.
    pub flagged: Vec<bool>,
    pub schedule: PenaltySchedule,
}

impl CptProcess {
    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    pub(crate) fn from_scan(engine: &Engine, scan: &Scan, grid: &SearchGrid, schedule: PenaltySchedule) -> Self {
        let (n, p, g) = (engine.n(), scan.p, grid.len());
        let mut z = DMatrix::zeros(g, p);
        let mut dl = DMatrix::zeros(g, p);
        let mut dr = DMatrix::zeros(g, p);
        let mut ll = DMatrix::zeros(g, p);
        let mut lr = DMatrix::zeros(g, p);
        for (idx, &k) in grid.points.iter().enumerate() {
            let bl = Scan::row(&scan.beta_left, idx, p);
            let br = Scan::row(&scan.beta_right, idx, p);
            let left = engine.debias(bl, Scan::row(&scan.grad_left, idx, p), k);
            let right = engine.debias(br, Scan::row(&scan.grad_right, idx, p), n - k);
            let w = process_weight(n, k);
            for j in 0..p {
                dl[(idx, j)] = left[j];
                dr[(idx, j)] = right[j];
                ll[(idx, j)] = bl[j];
                lr[(idx, j)] = br[j];
                z[(idx, j)] = w * (left[j] - right[j]);
            }
        }
        CptProcess {
            n,
            grid: grid.clone(),
            z,
            debiased_left: dl,
            debiased_right: dr,
            lasso_left: ll,
            lasso_right: lr,
            flagged: scan.flagged.clone(),
            schedule,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CptEstimate {
    pub t_hat: f64,
    pub k_hat: usize,
    pub h_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub sigma_eps_sq: f64,
    pub t_hat_full: f64,
    #[serde(skip)]
    pub k_hat_full: usize,
}

/// De-biased coefficient pair at split `k`, fitted directly on the two
/// segments (no caching). `warm` seeds the left and right fits.
pub fn debiased_pair(
    data: &Dataset,
    prec: &PrecisionEstimate,
    k: usize,
    schedule: &PenaltySchedule,
    warm: (Option<&DVector<f64>>, Option<&DVector<f64>>),
) -> Result<(DVector<f64>, DVector<f64>)> {
    debiased_pair_with(data, prec, k, schedule, warm, &SolverOptions::default())
}

pub fn debiased_pair_with(
    data: &Dataset,
    prec: &PrecisionEstimate,
    k: usize,
    schedule: &PenaltySchedule,
    warm: (Option<&DVector<f64>>, Option<&DVector<f64>>),
    opts: &SolverOptions,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = data.n();
    if k < 2 || n - k.min(n) < 2 {
        return Err(Error::Config(format!("split {k} leaves a segment shorter than 2")));
    }
    let one = |seg: SegmentView<'_>, warm: Option<&DVector<f64>>| -> Result<DVector<f64>> {
        let lambda = schedule.lambda(data.p(), seg.len());
        let fit: LassoFit = lasso::fit_lasso_with(&seg, lambda, warm, opts)?;
        if !fit.converged {
            return Err(Error::Lasso {
                k,
                message: "coordinate descent did not converge".into(),
            });
        }
        let resid = seg.y() - seg.x() * &fit.beta;
        let score = seg.x().transpose() * resid / seg.len() as f64;
        Ok(&fit.beta + &prec.theta * score)
    };
    let left = one(data.view(0, k)?, warm.0)?;
    let right = one(data.view(k, n)?, warm.1)?;
    Ok((left, right))
}

/// Builds the process at every grid point.
pub fn build_process(
    data: &Dataset,
    prec: &PrecisionEstimate,
    grid: &SearchGrid,
    schedule: &PenaltySchedule,
) -> Result<CptProcess> {
    build_process_with(data, prec, grid, schedule, SolverOptions::default())
}

pub fn build_process_with(
    data: &Dataset,
    prec: &PrecisionEstimate,
    grid: &SearchGrid,
    schedule: &PenaltySchedule,
    opts: SolverOptions,
) -> Result<CptProcess> {
    let engine = Engine::new(data, &prec.theta, grid, *schedule, opts, DEFAULT_GRAM_BUDGET)?;
    let scan = engine.scan(data.y().as_slice());
    Ok(CptProcess::from_scan(&engine, &scan, grid, *schedule))
}

/// `H_G(k) = max_{j∈G} |Z_j(k)|/sqrt(n)` at each grid point.
pub fn h_surface(proc: &CptProcess, g: &SubGroup) -> Result<Vec<f64>> {
    g.check(proc.p())?;
    let scale = (proc.n as f64).sqrt();
    Ok((0..proc.grid.len())
        .map(|i| {
            g.indices()
                .iter()
                .map(|&j| proc.z[(i, j)].abs() / scale)
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Smallest unflagged grid point attaining the maximum of `H_G`.
pub fn argmax_cpt(proc: &CptProcess, g: &SubGroup) -> Result<CptEstimate> {
    let h = h_surface(proc, g)?;
    argmax_surface(&h, &proc.flagged, &proc.grid.points, proc.n)
}

pub(crate) fn argmax_surface(h: &[f64], flagged: &[bool], points: &[usize], n: usize) -> Result<CptEstimate> {
    let mut best: Option<usize> = None;
    for i in 0..h.len() {
        if flagged[i] {
            continue;
        }
        if best.is_none_or(|b| h[i] > h[b]) {
            best = Some(i);
        }
    }
    let i = best.ok_or_else(|| Error::Lasso {
        k: points.first().copied().unwrap_or(0),
        message: "lasso fits failed at every grid point".into(),
    })?;
    Ok(CptEstimate {
        t_hat: points[i] as f64 / n as f64,
        k_hat: points[i],
        h_max: h[i],
    })
}

/// Pooled residual variance after splitting at the full-group argmax.
pub fn weighted_variance(data: &Dataset, proc: &CptProcess, _schedule: &PenaltySchedule) -> Result<VarianceEstimate> {
    let cpt = argmax_cpt(proc, &SubGroup::full(proc.p()))?;
    let idx = proc
        .grid
        .points
        .iter()
        .position(|&k| k == cpt.k_hat)
        .expect("argmax lies on the grid");
    let n = data.n();
    let k = cpt.k_hat;
    let bl = proc.lasso_left.row(idx).transpose();
    let br = proc.lasso_right.row(idx).transpose();
    let left = data.view(0, k)?;
    let right = data.view(k, n)?;
    let rss = (left.y() - left.x() * bl).norm_squared() + (right.y() - right.x() * br).norm_squared();
    let sigma_eps_sq = rss / n as f64;
    if !(sigma_eps_sq > DEGENERATE_VARIANCE) {
        return Err(Error::DegenerateVariance(sigma_eps_sq));
    }
    Ok(VarianceEstimate {
        sigma_eps_sq,
        t_hat_full: cpt.t_hat,
        k_hat_full: k,
    })
}

/// Population drift of the process at split `k` for a single change at `k_star`:
/// `sqrt(n)·(k/n)·((n−k)/n)·(β^(0,t) − β^(t,1))` with segment-averaged coefficients.
pub fn signal_function(beta1: &DVector<f64>, beta2: &DVector<f64>, k_star: usize, n: usize, k: usize) -> DVector<f64> {
    assert!(0 < k && k < n && k_star <= n);
    let (nf, kf, ks) = (n as f64, k as f64, k_star as f64);
    let diff = beta1 - beta2;
    let factor = if k <= k_star {
        kf * (nf - ks) / (nf * nf)
    } else {
        ks * (nf - kf) / (nf * nf)
    };
    diff * (nf.sqrt() * factor)
}

/// One row per grid point: `k, t, flagged, H` and optionally every `Z_j`.
pub fn write_process_csv<W: Write>(proc: &CptProcess, g: &SubGroup, wide: bool, out: W) -> Result<()> {
    let h = h_surface(proc, g)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string(), "t".into(), "flagged".into(), "h".into()];
    if wide {
        header.extend((1..=proc.p()).map(|j| format!("z{j}")));
    }
    let io = |e: csv::Error| Error::Data(format!("writing process table: {e}"));
    w.write_record(&header).map_err(io)?;
    for (i, &k) in proc.grid.points.iter().enumerate() {
        let mut rec = vec![
            k.to_string(),
            format!("{:?}", k as f64 / proc.n as f64),
            u8::from(proc.flagged[i]).to_string(),
            format!("{:?}", h[i]),
        ];
        if wide {
            rec.extend(proc.z.row(i).iter().map(|v| format!("{v:?}")));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Data(format!("writing process table: {e}")))?;
    Ok(())
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Studentized sup statistic, the two multiplier bootstraps and the
//! single change-point decision.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_grid, Dataset, SearchGrid, SubGroup};
use crate::error::{Error, Result};
use crate::lasso::{self, PenaltySchedule, SolverOptions};
use crate::precision::{self, NodeTuning, NodewiseConfig, PrecisionEstimate};
use crate::process::{
    argmax_cpt, process_weight, weighted_variance, CptEstimate, CptProcess, Engine, VarianceEstimate,
    DEFAULT_GRAM_BUDGET,
};
use crate::rng;

const VARIANCE_FLOOR: f64 = 1e-12;

/// Share of Bootstrap-II replicates allowed to contain non-converged fits.
pub const MAX_FLAGGED_SHARE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Boot1,
    Boot2,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boot1" => Ok(Method::Boot1),
            "boot2" => Ok(Method::Boot2),
            other => Err(Error::Config(format!("unknown bootstrap method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Boot1 => "boot1",
            Method::Boot2 => "boot2",
        })
    }
}

/// Penalty tuning shared by every stage of an analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    /// Candidate multipliers for the scan penalty.
    pub c_grid: Vec<f64>,
    /// Skip cross-validation and use this multiplier.
    pub fixed_c: Option<f64>,
    pub folds: usize,
    pub node: NodeTuning,
    /// Memory allowed for cached Gram snapshots, in bytes.
    pub gram_budget: usize,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            c_grid: lasso::default_c_grid(),
            fixed_c: None,
            folds: 3,
            node: NodeTuning::default(),
            gram_budget: DEFAULT_GRAM_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub alpha: f64,
    pub tau0: f64,
    #[serde(rename = "B")]
    pub b: usize,
    /// `None` tests every coordinate.
    pub group: Option<SubGroup>,
    pub seed: u64,
    pub method: Method,
    pub stride: usize,
    pub tuning: Tuning,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            tau0: 0.1,
            b: 100,
            group: None,
            seed: 0,
            method: Method::Boot2,
            stride: 1,
            tuning: Tuning::default(),
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.b == 0 {
            return Err(Error::Config(
                "the number of bootstrap replicates must be at least 1".into(),
            ));
        }
        if !(self.tau0 > 0.0 && self.tau0 < 0.5) {
            return Err(Error::Config(format!("tau0 = {} must lie in (0, 0.5)", self.tau0)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.tuning.folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        if self.tuning.fixed_c.is_none() && self.tuning.c_grid.is_empty() {
            return Err(Error::Config("penalty grid is empty".into()));
        }
        Ok(())
    }

    pub fn group_for(&self, p: usize) -> Result<SubGroup> {
        match &self.group {
            Some(g) => {
                g.check(p)?;
                Ok(g.clone())
            }
            None => Ok(SubGroup::full(p)),
        }
    }
}

/// Cross-validation curves behind a schedule choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCv {
    pub c_grid: Vec<f64>,
    /// Split between the two halves.
    pub split: usize,
    pub folds: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub mean: Vec<f64>,
    pub c: f64,
}

/// Cross-validates the scan multiplier on the two halves split at the middle
/// grid point; the averaged curve is minimized.
pub fn schedule_cv(data: &Dataset, grid: &SearchGrid, tuning: &Tuning, seed: u64) -> Result<ScheduleCv> {
    if grid.is_empty() {
        return Err(Error::Config("search grid is empty".into()));
    }
    let mid = grid.points[grid.len() / 2];
    let log_p = lasso::log_p(data.p());
    let opts = SolverOptions::default();
    let left = data.view(0, mid)?;
    let right = data.view(mid, data.n())?;
    let cl = lasso::cv_curve(
        &left.x(),
        &left.y(),
        &tuning.c_grid,
        tuning.folds,
        rng::derive(seed, 0),
        log_p,
        &opts,
    )?;
    let cr = lasso::cv_curve(
        &right.x(),
        &right.y(),
        &tuning.c_grid,
        tuning.folds,
        rng::derive(seed, 1),
        log_p,
        &opts,
    )?;
    let mean: Vec<f64> = cl.iter().zip(&cr).map(|(a, b)| 0.5 * (a + b)).collect();
    let c = tuning.c_grid[lasso::argmin_curve(&tuning.c_grid, &mean)];
    Ok(ScheduleCv {
        c_grid: tuning.c_grid.clone(),
        split: mid,
        folds: tuning.folds,
        left: cl,
        right: cr,
        mean,
        c,
    })
}

/// Picks the scan multiplier: `tuning.fixed_c` when set, otherwise [`schedule_cv`].
pub fn select_schedule(data: &Dataset, grid: &SearchGrid, tuning: &Tuning, seed: u64) -> Result<PenaltySchedule> {
    if let Some(c) = tuning.fixed_c {
        return PenaltySchedule::new(c);
    }
    PenaltySchedule::new(schedule_cv(data, grid, tuning, seed)?.c)
}

/// Seed of the schedule cross-validation for a detection run keyed by `seed`.
pub fn schedule_seed(seed: u64) -> u64 {
    rng::derive(seed, 2)
}

/// `T_G = max_k max_{j∈G} |Z_j(k)| / sqrt(σ̂²·ω̂_jj)` over unflagged grid points.
pub fn t_statistic(proc: &CptProcess, var: &VarianceEstimate, prec: &PrecisionEstimate, g: &SubGroup) -> Result<f64> {
    let scale = studentizer(var.sigma_eps_sq, prec, g)?;
    let mut t: f64 = 0.0;
    for i in 0..proc.grid.len() {
        if proc.flagged[i] {
            continue;
        }
        for (&j, &s) in g.indices().iter().zip(&scale) {
            t = t.max(proc.z[(i, j)].abs() / s);
        }
    }
    Ok(t)
}

/// `sqrt(σ²·ω̂_jj)` for `j ∈ g`, enforcing the variance floor.
fn studentizer(sigma_sq: f64, prec: &PrecisionEstimate, g: &SubGroup) -> Result<Vec<f64>> {
    let omega = precision::omega_for_group(prec, g)?;
    g.indices()
        .iter()
        .zip(omega)
        .map(|(&j, w)| {
            let v = sigma_sq * w;
            if v > VARIANCE_FLOOR {
                Ok(v.sqrt())
            } else {
                Err(Error::VarianceFloor {
                    column: j + 1,
                    value: v,
                })
            }
        })
        .collect()
}

/// The `⌈(1−α)(B+1)⌉`-th order statistic, or `+∞` when that rank exceeds `B`.
pub fn critical_value(samples: &[f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("no bootstrap samples".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let b = samples.len();
    // The small offset keeps products such as 0.95·100 from rounding up a rank.
    let rank = (((1.0 - alpha) * (b + 1) as f64) - 1e-9).ceil().max(1.0) as usize;
    if rank > b {
        return Ok(f64::INFINITY);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// `(1 + #{b : T_b ≥ t}) / (B + 1)`.
pub fn p_value(samples: &[f64], t: f64) -> f64 {
    let exceed = samples.iter().filter(|&&s| s >= t).count();
    (1 + exceed) as f64 / (samples.len() + 1) as f64
}

/// Estimated drift of the Bootstrap-II process at split `k` given the
/// coefficient difference `diff` at the fitted change `k_hat`.
pub fn drift_estimate(diff: &DVector<f64>, n: usize, k_hat: usize, k: usize) -> DVector<f64> {
    let factor = if k <= k_hat {
        (n - k_hat) as f64 / (n - k) as f64
    } else {
        k_hat as f64 / k as f64
    };
    diff * factor
}

/// Raw bootstrap maxima per coordinate, before studentization.
#[derive(Clone, Debug, PartialEq)]
pub struct BootDraws {
    pub method: Method,
    /// `sups[b][j] = max_k` of the weighted absolute gap for coordinate `j`.
    pub sups: Vec<Vec<f64>>,
    /// Replicates in which some lasso fit failed to converge.
    pub flagged: Vec<bool>,
}

impl BootDraws {
    pub fn len(&self) -> usize {
        self.sups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sups.is_empty()
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    /// Bootstrap statistics for group `g`, studentized by `scale[i]` for `g`'s i-th index.
    pub fn samples(&self, g: &SubGroup, scale: &[f64]) -> Vec<f64> {
        self.sups
            .iter()
            .map(|s| {
                g.indices()
                    .iter()
                    .zip(scale)
                    .map(|(&j, &sc)| s[j] / sc)
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Everything derived from one dataset that the tests and bootstraps share.
pub struct Analysis {
    pub data: Dataset,
    pub grid: SearchGrid,
    pub prec: PrecisionEstimate,
    pub schedule: PenaltySchedule,
    pub process: CptProcess,
    pub variance: VarianceEstimate,
    engine: Engine,
    /// `X_i β̂` using the left fit for rows before the full-group argmax and the right fit after.
    fitted: DVector<f64>,
    /// `β̂^(0,k̂) − β̂^(k̂,1)`.
    jump: DVector<f64>,
}

impl Analysis {
    pub fn prepare(data: Dataset, cfg: &TestConfig) -> Result<Self> {
        Self::prepare_with(data, cfg, None)
    }

    /// As [`Analysis::prepare`], reusing `prec` when given.
    pub fn prepare_with(data: Dataset, cfg: &TestConfig, prec: Option<PrecisionEstimate>) -> Result<Self> {
        cfg.validate()?;
        let grid = build_grid(data.n(), cfg.tau0, cfg.stride).map_err(|e| e.at("search grid"))?;
        Self::prepare_on_grid(data, cfg, grid, prec)
    }

    /// As [`Analysis::prepare_with`] on an explicit search grid.
    pub fn prepare_on_grid(
        data: Dataset,
        cfg: &TestConfig,
        grid: SearchGrid,
        prec: Option<PrecisionEstimate>,
    ) -> Result<Self> {
        cfg.validate()?;
        if grid.n != data.n() || grid.is_empty() {
            return Err(Error::Config("search grid does not match the data".into()));
        }
        let prec = match prec {
            Some(p) => p,
            None => precision::fit_nodewise_with(&data, &nodewise_config(cfg)).map_err(|e| e.at("precision"))?,
        };
        let schedule = select_schedule(&data, &grid, &cfg.tuning, schedule_seed(cfg.seed))
            .map_err(|e| e.at("penalty selection"))?;
        let engine = Engine::new(
            &data,
            &prec.theta,
            &grid,
            schedule,
            SolverOptions::default(),
            cfg.tuning.gram_budget,
        )?;
        let scan = engine.scan(data.y().as_slice());
        let process = CptProcess::from_scan(&engine, &scan, &grid, schedule);
        let variance = weighted_variance(&data, &process, &schedule).map_err(|e| e.at("variance"))?;
        let idx = grid
            .points
            .iter()
            .position(|&k| k == variance.k_hat_full)
            .expect("argmax lies on the grid");
        let bl = process.lasso_left.row(idx).transpose();
        let br = process.lasso_right.row(idx).transpose();
        let k = variance.k_hat_full;
        let x = data.x();
        let fitted = DVector::from_fn(data.n(), |i, _| {
            let b = if i < k { &bl } else { &br };
            x.row(i).dot(&b.transpose())
        });
        let jump = &bl - &br;
        Ok(Analysis {
            data,
            grid,
            prec,
            schedule,
            process,
            variance,
            engine,
            fitted,
            jump,
        })
    }

    pub fn t_statistic(&self, g: &SubGroup) -> Result<f64> {
        t_statistic(&self.process, &self.variance, &self.prec, g)
    }

    pub fn argmax(&self, g: &SubGroup) -> Result<CptEstimate> {
        argmax_cpt(&self.process, g)
    }

    /// Bootstrap maxima for `b` replicates; replicate `r` draws from `stream(master, r)`.
    pub fn bootstrap(&self, method: Method, b: usize, master: u64) -> Result<BootDraws> {
        match method {
            Method::Boot1 => Ok(self.bootstrap_one(b, master)),
            Method::Boot2 => self.bootstrap_two(b, master),
        }
    }

    fn bootstrap_one(&self, b: usize, master: u64) -> BootDraws {
        let scores = self.data.x() * self.prec.theta.transpose();
        let sups = boot1_sups(&scores, &self.grid.points, &self.process.flagged, b, master);
        BootDraws {
            method: Method::Boot1,
            sups,
            flagged: vec![false; b],
        }
    }

    fn bootstrap_two(&self, b: usize, master: u64) -> Result<BootDraws> {
        let n = self.data.n();
        let sigma = self.variance.sigma_eps_sq.sqrt();
        let k_hat = self.variance.k_hat_full;
        let results: Vec<(Vec<f64>, bool)> = (0..b)
            .into_par_iter()
            .map(|r| {
                let mut s = rng::stream(master, r as u64);
                let y: Vec<f64> = (0..n).map(|i| self.fitted[i] + sigma * s.normal()).collect();
                let scan = self.engine.scan(&y);
                let mut sup = vec![0.0; self.data.p()];
                let mut flagged = false;
                for (idx, &k) in self.grid.points.iter().enumerate() {
                    if scan.flagged[idx] {
                        flagged = true;
                        continue;
                    }
                    if self.process.flagged[idx] {
                        continue;
                    }
                    let d = self.engine.debiased_difference(&scan, idx);
                    let drift = drift_estimate(&self.jump, n, k_hat, k);
                    let w = process_weight(n, k);
                    for (j, v) in sup.iter_mut().enumerate() {
                        *v = f64::max(*v, w * (d[j] - drift[j]).abs());
                    }
                }
                (sup, flagged)
            })
            .collect();
        let (sups, flagged): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let draws = BootDraws {
            method: Method::Boot2,
            sups,
            flagged,
        };
        let count = draws.flagged_count();
        if count as f64 > MAX_FLAGGED_SHARE * b as f64 {
            return Err(Error::TooManyFlagged {
                flagged: count,
                total: b,
            });
        }
        Ok(draws)
    }

    /// Per-coordinate studentizer of `method` for the indices of `g`.
    pub fn scale(&self, method: Method, g: &SubGroup) -> Result<Vec<f64>> {
        let sigma_sq = match method {
            Method::Boot1 => 1.0,
            Method::Boot2 => self.variance.sigma_eps_sq,
        };
        studentizer(sigma_sq, &self.prec, g)
    }

    /// Test decision for `g` against precomputed draws.
    pub fn decide(&self, g: &SubGroup, alpha: f64, draws: &BootDraws) -> Result<Decision> {
        let t_stat = self.t_statistic(g)?;
        let samples = draws.samples(g, &self.scale(draws.method, g)?);
        let crit = critical_value(&samples, alpha)?;
        let p_value = p_value(&samples, t_stat);
        let argmax = self.argmax(g)?;
        Ok(Decision {
            t_stat,
            crit,
            p_value,
            reject: t_stat >= crit,
            argmax,
            samples,
        })
    }
}

/// Node-wise settings an analysis under `cfg` uses.
pub fn nodewise_config(cfg: &TestConfig) -> NodewiseConfig {
    NodewiseConfig {
        tuning: cfg.tuning.node.clone(),
        folds: cfg.tuning.folds,
        seed: rng::derive(cfg.seed, 1),
    }
}

/// Seed of replicate streams for a detection run keyed by `seed`.
pub fn bootstrap_master(seed: u64) -> u64 {
    rng::derive(seed, 3)
}

fn boot1_sups(scores: &DMatrix<f64>, points: &[usize], skip: &[bool], b: usize, master: u64) -> Vec<Vec<f64>> {
    let (n, p) = scores.shape();
    (0..b)
        .into_par_iter()
        .map(|r| {
            let mut s = rng::stream(master, r as u64);
            let eps: Vec<f64> = (0..n).map(|_| s.normal()).collect();
            let mut prefix = vec![0.0; p];
            let mut at_points = Vec::with_capacity(points.len());
            let mut row = 0;
            for &k in points {
                while row < k {
                    for (j, v) in prefix.iter_mut().enumerate() {
                        *v += scores[(row, j)] * eps[row];
                    }
                    row += 1;
                }
                at_points.push(prefix.clone());
            }
            let mut total = prefix;
            while row < n {
                for (j, v) in total.iter_mut().enumerate() {
                    *v += scores[(row, j)] * eps[row];
                }
                row += 1;
            }
            let mut sup = vec![0.0; p];
            for (idx, &k) in points.iter().enumerate() {
                if skip[idx] {
                    continue;
                }
                let w = process_weight(n, k);
                let (kl, kr) = (k as f64, (n - k) as f64);
                for j in 0..p {
                    let left = at_points[idx][j] / kl;
                    let right = (total[j] - at_points[idx][j]) / kr;
                    sup[j] = f64::max(sup[j], w * (left - right).abs());
                }
            }
            sup
        })
        .collect()
}

/// Bootstrap-I maxima `W_G^b`, `b = 0..B`, replicate `b` drawing from `stream(seed, b)`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_one(
    data: &Dataset,
    prec: &PrecisionEstimate,
    grid: &SearchGrid,
    _schedule: &PenaltySchedule,
    _var: &VarianceEstimate,
    g: &SubGroup,
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let scale = studentizer(1.0, prec, g)?;
    let scores = data.x() * prec.theta.transpose();
    let skip = vec![false; grid.len()];
    let draws = BootDraws {
        method: Method::Boot1,
        sups: boot1_sups(&scores, &grid.points, &skip, b, seed),
        flagged: vec![false; b],
    };
    Ok(draws.samples(g, &scale))
}

/// Bootstrap-II statistics `T_G^b`, `b = 0..B`, replicate `b` drawing from `stream(seed, b)`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_two(
    data: &Dataset,
    prec: &PrecisionEstimate,
    grid: &SearchGrid,
    schedule: &PenaltySchedule,
    proc: &CptProcess,
    var: &VarianceEstimate,
    g: &SubGroup,
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let engine = Engine::new(
        data,
        &prec.theta,
        grid,
        *schedule,
        SolverOptions::default(),
        DEFAULT_GRAM_BUDGET,
    )?;
    let idx = grid
        .points
        .iter()
        .position(|&k| k == var.k_hat_full)
        .ok_or_else(|| Error::Config("variance split is not on the grid".into()))?;
    let bl = proc.lasso_left.row(idx).transpose();
    let br = proc.lasso_right.row(idx).transpose();
    let k = var.k_hat_full;
    let x = data.x();
    let fitted = DVector::from_fn(data.n(), |i, _| {
        let b = if i < k { &bl } else { &br };
        x.row(i).dot(&b.transpose())
    });
    let analysis = Analysis {
        data: data.clone(),
        grid: grid.clone(),
        prec: prec.clone(),
        schedule: *schedule,
        process: proc.clone(),
        variance: *var,
        engine,
        fitted,
        jump: &bl - &br,
    };
    let draws = analysis.bootstrap_two(b, seed)?;
    Ok(draws.samples(g, &analysis.scale(Method::Boot2, g)?))
}

/// Outcome of one test of a group.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub t_stat: f64,
    pub crit: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Argmax of `H_G`, reported whether or not the test rejects.
    pub argmax: CptEstimate,
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub t_stat: f64,
    pub crit: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Present only when the test rejects.
    pub cpt: Option<CptEstimate>,
    pub sigma: VarianceEstimate,
    pub boot_samples: Vec<f64>,
    pub flagged_replicates: usize,
    pub flagged_points: usize,
    pub schedule: PenaltySchedule,
    pub group: SubGroup,
    pub alpha: f64,
    pub tau0: f64,
    pub b: usize,
    pub seed: u64,
}

/// JSON document emitted for a detection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub t_stat: f64,
    /// `null` when the critical value is infinite.
    pub crit: Option<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub t_hat: Option<f64>,
    pub k_hat: Option<usize>,
    pub sigma_eps_sq: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub tau0: f64,
    pub group: Vec<usize>,
    pub seed: u64,
    pub flagged_replicates: usize,
}

impl DetectionResult {
    pub fn report(&self) -> DetectionReport {
        DetectionReport {
            t_stat: self.t_stat,
            crit: self.crit.is_finite().then_some(self.crit),
            p_value: self.p_value,
            reject: self.reject,
            t_hat: self.cpt.map(|c| c.t_hat),
            k_hat: self.cpt.map(|c| c.k_hat),
            sigma_eps_sq: self.sigma.sigma_eps_sq,
            b: self.b,
            alpha: self.alpha,
            tau0: self.tau0,
            group: self.group.one_based(),
            seed: self.seed,
            flagged_replicates: self.flagged_replicates,
        }
    }
}

/// Full single change-point test of `cfg.group` on `data`.
pub fn detect(data: &Dataset, cfg: &TestConfig) -> Result<DetectionResult> {
    detect_with(data, cfg, None)
}

/// As [`detect`], reusing a precision estimate when given.
pub fn detect_with(data: &Dataset, cfg: &TestConfig, prec: Option<PrecisionEstimate>) -> Result<DetectionResult> {
    cfg.validate()?;
    let grid = build_grid(data.n(), cfg.tau0, cfg.stride).map_err(|e| e.at("search grid"))?;
    detect_on_grid(data, cfg, grid, prec)
}

/// As [`detect_with`] on an explicit search grid.
pub fn detect_on_grid(
    data: &Dataset,
    cfg: &TestConfig,
    grid: SearchGrid,
    prec: Option<PrecisionEstimate>,
) -> Result<DetectionResult> {
    cfg.validate()?;
    let g = cfg.group_for(data.p())?;
    let analysis = Analysis::prepare_on_grid(data.clone(), cfg, grid, prec)?;
    let draws = analysis
        .bootstrap(cfg.method, cfg.b, bootstrap_master(cfg.seed))
        .map_err(|e| e.at("bootstrap"))?;
    let d = analysis.decide(&g, cfg.alpha, &draws).map_err(|e| e.at("decision"))?;
    Ok(DetectionResult {
        t_stat: d.t_stat,
        crit: d.crit,
        p_value: d.p_value,
        reject: d.reject,
        cpt: d.reject.then_some(d.argmax),
        sigma: analysis.variance,
        boot_samples: d.samples,
        flagged_replicates: draws.flagged_count(),
        flagged_points: analysis.process.flagged_count(),
        schedule: analysis.schedule,
        group: g,
        alpha: cfg.alpha,
        tau0: cfg.tau0,
        b: cfg.b,
        seed: cfg.seed,
    })
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::log_p;
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovModel {
    Identity,
    /// `Σ_ij = rho^|i−j|`.
    Toeplitz {
        rho: f64,
    },
}

impl CovModel {
    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        match *self {
            CovModel::Identity => DMatrix::identity(p, p),
            CovModel::Toeplitz { rho } => DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Normal,
    /// `(Gamma(4, 1) − 4)/2`.
    Gamma41Std,
    /// `t₅/sqrt(5/3)`.
    T5Std,
}

impl ErrorLaw {
    pub fn draw(&self, s: &mut Stream) -> f64 {
        match self {
            ErrorLaw::Normal => s.normal(),
            ErrorLaw::Gamma41Std => (s.gamma_int(4) - 4.0) / 2.0,
            ErrorLaw::T5Std => s.student_t(5) / (5.0f64 / 3.0).sqrt(),
        }
    }
}

/// A change after row `k`: `delta` is added to the active coordinates in
/// increasing index order (shorter `delta` leaves the rest unchanged).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    pub k: usize,
    pub delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub cov_model: CovModel,
    pub s: usize,
    /// One-based inclusive range the active coordinates are drawn from.
    pub active_pool: (usize, usize),
    /// Nonzero coefficients are uniform on this interval.
    pub coef_range: (f64, f64),
    pub error_law: ErrorLaw,
    pub cpts: Vec<ChangePoint>,
    pub seed: u64,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            n: 200,
            p: 100,
            cov_model: CovModel::Identity,
            s: 5,
            active_pool: (1, 50),
            coef_range: (0.0, 2.0),
            error_law: ErrorLaw::Normal,
            cpts: Vec::new(),
            seed: 0,
        }
    }
}

/// `c·sqrt(log p / n)·pattern`.
pub fn scaled_jump(c: f64, n: usize, p: usize, pattern: &[f64]) -> Vec<f64> {
    let scale = c * (log_p(p) / n as f64).sqrt();
    pattern.iter().map(|v| v * scale).collect()
}

/// Jump pattern for a single change point, `(8, 4, 2, 1, 0.5)`.
pub const SINGLE_PATTERN: [f64; 5] = [8.0, 4.0, 2.0, 1.0, 0.5];
/// Jump pattern for the multiple change-point designs, `(16, 8, 4, 2, 1)`.
pub const MULTI_PATTERN: [f64; 5] = [16.0, 8.0, 4.0, 2.0, 1.0];

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.active_pool;
        if self.n < 4 || self.p == 0 {
            return Err(Error::Config(format!(
                "design needs n >= 4 and p >= 1 (n = {}, p = {})",
                self.n, self.p
            )));
        }
        if lo == 0 || lo > hi || hi > self.p {
            return Err(Error::Config(format!(
                "active pool {lo}..{hi} must lie within 1..{}",
                self.p
            )));
        }
        if self.s > hi - lo + 1 {
            return Err(Error::Config(format!(
                "sparsity {} exceeds the active pool size {}",
                self.s,
                hi - lo + 1
            )));
        }
        let mut prev = 0;
        for c in &self.cpts {
            if c.k <= prev || c.k >= self.n {
                return Err(Error::Config(
                    "change points must be strictly increasing inside (0, n)".into(),
                ));
            }
            if c.delta.len() > self.s {
                return Err(Error::Config(format!(
                    "jump of length {} exceeds the sparsity {}",
                    c.delta.len(),
                    self.s
                )));
            }
            prev = c.k;
        }
        if !(self.coef_range.0 <= self.coef_range.1) {
            return Err(Error::Config("coefficient range is empty".into()));
        }
        Ok(())
    }

    /// Same design with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Generator truth carried alongside a simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    /// Zero-based active coordinates, increasing.
    pub active: Vec<usize>,
    /// `β^(1), …, β^(m+1)`.
    pub betas: Vec<DVector<f64>>,
    pub cpts: Vec<usize>,
    pub sigma: DMatrix<f64>,
    pub errors: DVector<f64>,
}

impl Truth {
    /// Regime (segment ordinal) of each row.
    pub fn labels(&self, n: usize) -> Vec<usize> {
        super::ari::labels_from_cuts(&self.cpts, n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimData {
    pub data: Dataset,
    pub truth: Truth,
}

/// Draws one dataset. Coefficients, design rows and errors use streams 0, 1 and 2
/// of the design seed.
pub fn gen_dataset(d: &SimDesign) -> Result<SimData> {
    d.validate()?;
    let (n, p) = (d.n, d.p);
    let mut coef = stream(d.seed, 0);
    let (lo, hi) = d.active_pool;
    let pool: Vec<usize> = (lo - 1..hi).collect();
    let perm = coef.permutation(pool.len());
    let mut active: Vec<usize> = perm[..d.s].iter().map(|&i| pool[i]).collect();
    active.sort_unstable();
    let mut beta = DVector::zeros(p);
    let (a, b) = d.coef_range;
    for &j in &active {
        beta[j] = a + (b - a) * coef.uniform();
    }
    let mut betas = vec![beta];
    for c in &d.cpts {
        let mut next = betas.last().expect("non-empty").clone();
        for (&j, &v) in active.iter().zip(&c.delta) {
            next[j] += v;
        }
        betas.push(next);
    }

    let sigma = d.cov_model.matrix(p);
    let chol = match d.cov_model {
        CovModel::Identity => None,
        CovModel::Toeplitz { .. } => Some(
            sigma
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Config("covariance is not positive definite".into()))?
                .unpack(),
        ),
    };
    let mut xs = stream(d.seed, 1);
    let mut x = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    for i in 0..n {
        xs.fill_normal(z.as_mut_slice());
        match &chol {
            None => x.set_row(i, &z.transpose()),
            Some(l) => x.set_row(i, &(l * &z).transpose()),
        }
    }
    let mut es = stream(d.seed, 2);
    let errors = DVector::from_fn(n, |_, _| d.error_law.draw(&mut es));
    let cpts: Vec<usize> = d.cpts.iter().map(|c| c.k).collect();
    let y = DVector::from_fn(n, |i, _| {
        let regime = cpts.iter().filter(|&&k| i >= k).count();
        x.row(i).dot(&betas[regime].transpose()) + errors[i]
    });
    Ok(SimData {
        data: Dataset::new(y, x)?,
        truth: Truth {
            active,
            betas,
            cpts,
            sigma,
            errors,
        },
    })
}

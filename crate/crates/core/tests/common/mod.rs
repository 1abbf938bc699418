// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use regcpt::lasso::{fit_lasso_xy, kkt_violation, lasso_objective, SolverOptions};
use regcpt::rng::stream;

/// Exhaustive lasso solution: for every sign pattern `s ∈ {−1, 0, 1}^p`, solve the
/// stationarity equations on the active block and keep the candidate with the
/// smallest objective. Exact when `X` has full column rank.
pub fn enumeration_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let (m, p) = x.shape();
    let mf = m as f64;
    let mut best = DVector::zeros(p);
    let mut best_obj = lasso_objective(&x.as_view(), &y.as_view(), &best, lambda);
    for code in 0..3usize.pow(p as u32) {
        let mut signs = vec![0.0; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        if active.is_empty() {
            continue;
        }
        let xa = x.select_columns(&active);
        let lhs = xa.transpose() * &xa / mf;
        let rhs =
            xa.transpose() * y / mf - DVector::from_iterator(active.len(), active.iter().map(|&j| lambda * signs[j]));
        let Some(sol) = lhs.lu().solve(&rhs) else {
            continue;
        };
        let mut beta = DVector::zeros(p);
        for (i, &j) in active.iter().enumerate() {
            beta[j] = sol[i];
        }
        let obj = lasso_objective(&x.as_view(), &y.as_view(), &beta, lambda);
        if obj < best_obj {
            best_obj = obj;
            best = beta;
        }
    }
    best
}

/// Random instance `(X, y, λ)` with λ a uniform fraction of `λ_max`.
pub fn oracle_instance(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>, f64) {
    let mut s = stream(seed, 0);
    let x = DMatrix::from_fn(n, p, |_, _| s.normal());
    let beta = DVector::from_fn(p, |_, _| if s.uniform() < 0.5 { 0.0 } else { 2.0 * s.normal() });
    let y = &x * beta + DVector::from_fn(n, |_, _| s.normal());
    let lambda_max = (x.transpose() * &y / n as f64).amax();
    let lambda = lambda_max * (0.02 + 0.9 * s.uniform());
    (x, y, lambda)
}

/// Largest coordinate gap between coordinate descent and the oracle, and the
/// KKT violation of the coordinate-descent fit, over `count` instances.
pub fn oracle_gap(count: u64, n: usize, p: usize) -> (f64, f64) {
    let mut gap: f64 = 0.0;
    let mut kkt: f64 = 0.0;
    for seed in 0..count {
        let (x, y, lambda) = oracle_instance(seed, n, p);
        let fit = fit_lasso_xy(&x.as_view(), &y.as_view(), lambda, None, &SolverOptions::default()).unwrap();
        let exact = enumeration_oracle(&x, &y, lambda);
        gap = gap.max((&fit.beta - &exact).amax());
        kkt = kkt.max(kkt_violation(&x.as_view(), &y.as_view(), &fit.beta, lambda));
    }
    (gap, kkt)
}

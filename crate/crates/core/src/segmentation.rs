// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary segmentation driven by the bootstrap test.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SearchGrid};
use crate::detection::{detect_on_grid, TestConfig};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MIN_LEN: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentOptions {
    /// Shortest segment the procedure may create. Intervals shorter than
    /// `2·min_len` are not tested.
    pub min_len: usize,
    /// Test at level `α/2^depth` instead of `α`.
    pub bonferroni: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            min_len: DEFAULT_MIN_LEN,
            bonferroni: false,
        }
    }
}

/// One tested interval `(s, e]`, in processing order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub s: usize,
    pub e: usize,
    pub depth: usize,
    pub seed: u64,
    /// `None` only when the interval could not be tested at all.
    pub p_value: Option<f64>,
    pub reject: bool,
    /// Global split index, present when the test rejected.
    pub k_hat: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub change_points: Vec<usize>,
    pub boundaries: Vec<usize>,
    pub m_hat: usize,
    pub trace: Vec<TraceEntry>,
}

impl SegmentationResult {
    /// True when the full sample was too short to test.
    pub fn infeasible(&self) -> bool {
        self.trace.first().is_some_and(|t| t.p_value.is_none())
    }
}

/// Seed of the test on `(s, e]`, a function of the interval alone.
pub fn interval_seed(master: u64, s: usize, e: usize) -> u64 {
    let fingerprint = ((s as u64) << 32) ^ (e as u64);
    rng::derive(master, fingerprint)
}

/// Trimmed grid for an interval of length `len`: at least `min_len` rows on each side.
pub fn interval_grid(len: usize, tau0: f64, stride: usize, min_len: usize) -> Result<SearchGrid> {
    let trim = ((len as f64 * tau0).floor() as usize).max(min_len);
    SearchGrid::with_trim(len, trim, stride, tau0)
}

pub fn segment(data: &Dataset, cfg: &TestConfig, min_len: usize) -> Result<SegmentationResult> {
    segment_with(
        data,
        cfg,
        &SegmentOptions {
            min_len,
            ..SegmentOptions::default()
        },
    )
}

pub fn segment_with(data: &Dataset, cfg: &TestConfig, opts: &SegmentOptions) -> Result<SegmentationResult> {
    cfg.validate()?;
    let min_len = opts.min_len;
    if min_len < 2 * cfg.tuning.folds.max(2) {
        return Err(Error::Config(format!(
            "min_len = {min_len} is too small; need at least {}",
            2 * cfg.tuning.folds.max(2)
        )));
    }
    let n = data.n();
    if n < 2 * min_len {
        return Ok(SegmentationResult {
            change_points: Vec::new(),
            boundaries: vec![0, n],
            m_hat: 0,
            trace: vec![TraceEntry {
                s: 0,
                e: n,
                depth: 0,
                seed: interval_seed(cfg.seed, 0, n),
                p_value: None,
                reject: false,
                k_hat: None,
                note: Some(format!("n = {n} is shorter than 2 * min_len = {}", 2 * min_len)),
            }],
        });
    }

    let mut trace = Vec::new();
    let mut change_points = Vec::new();
    let mut level = vec![(0usize, n)];
    let mut depth = 0;
    while !level.is_empty() {
        let outcomes: Vec<TraceEntry> = level
            .par_iter()
            .map(|&(s, e)| test_interval(data, cfg, opts, s, e, depth))
            .collect::<Result<_>>()?;
        let mut next = Vec::new();
        for t in outcomes {
            if let Some(b) = t.k_hat {
                change_points.push(b);
                for (lo, hi) in [(t.s, b), (b, t.e)] {
                    if hi - lo >= 2 * min_len {
                        next.push((lo, hi));
                    }
                }
            }
            trace.push(t);
        }
        level = next;
        depth += 1;
    }
    change_points.sort_unstable();
    let mut boundaries = vec![0];
    boundaries.extend(&change_points);
    boundaries.push(n);
    Ok(SegmentationResult {
        m_hat: change_points.len(),
        change_points,
        boundaries,
        trace,
    })
}

fn test_interval(
    data: &Dataset,
    cfg: &TestConfig,
    opts: &SegmentOptions,
    s: usize,
    e: usize,
    depth: usize,
) -> Result<TraceEntry> {
    let wrap = |err: Error| Error::Interval {
        s,
        e,
        source: Box::new(err),
    };
    let seed = interval_seed(cfg.seed, s, e);
    let sub = data.rows(s, e).map_err(wrap)?;
    let grid = interval_grid(e - s, cfg.tau0, cfg.stride, opts.min_len).map_err(wrap)?;
    let mut local = cfg.clone();
    local.seed = seed;
    if opts.bonferroni {
        local.alpha = cfg.alpha / 2f64.powi(depth as i32);
    }
    let r = detect_on_grid(&sub, &local, grid, None).map_err(wrap)?;
    Ok(TraceEntry {
        s,
        e,
        depth,
        seed,
        p_value: Some(r.p_value),
        reject: r.reject,
        k_hat: r.cpt.map(|c| s + c.k_hat),
        note: None,
    })
}

/// Half-open row ranges `[lo, hi)` of the fitted segments.
pub fn refine_boundaries(result: &SegmentationResult, n: usize) -> Vec<(usize, usize)> {
    let mut cuts = vec![0];
    cuts.extend(result.change_points.iter().copied().filter(|&c| c > 0 && c < n));
    cuts.push(n);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Trace as CSV, one row per test; missing values are written as -1.
pub fn write_trace_csv<W: Write>(result: &SegmentationResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Data(format!("writing trace: {e}"));
    w.write_record(["s", "e", "depth", "seed", "p_value", "reject", "k_hat"])
        .map_err(io)?;
    for t in &result.trace {
        w.write_record([
            t.s.to_string(),
            t.e.to_string(),
            t.depth.to_string(),
            t.seed.to_string(),
            t.p_value.map_or("-1".into(), |p| format!("{p:?}")),
            u8::from(t.reject).to_string(),
            t.k_hat.map_or("-1".into(), |k| k.to_string()),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing trace: {e}")))?;
    Ok(())
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Adjusted Rand index between two partitions of the same rows.

use std::collections::HashMap;

use crate::error::{Error, Result};

fn choose2(m: u64) -> i128 {
    let m = i128::from(m);
    m * (m - 1).max(0) / 2
}

/// Hubert–Arabie adjusted Rand index of two labelings. Labels are arbitrary
/// identifiers; only the induced partitions matter.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data(format!(
            "partitions cover {} and {} rows",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as u64;
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: i128 = cells.values().map(|&c| choose2(c)).sum();
    let sum_a: i128 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: i128 = cols.values().map(|&c| choose2(c)).sum();
    let pairs = choose2(n);
    // (Index − Expected)/(Max − Expected), scaled through by 2·C(n,2) so that only
    // the final division rounds.
    let num = 2 * index * pairs - 2 * sum_a * sum_b;
    let den = (sum_a + sum_b) * pairs - 2 * sum_a * sum_b;
    if den == 0 {
        // Both partitions are a single block (or both all singletons).
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// Segment ordinal of each row for change points `cuts` (row `i` belongs to
/// segment `#{c ∈ cuts : i ≥ c}`).
pub fn labels_from_cuts(cuts: &[usize], n: usize) -> Vec<usize> {
    (0..n).map(|i| cuts.iter().filter(|&&c| i >= c).count()).collect()
}

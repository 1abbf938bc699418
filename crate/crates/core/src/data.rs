// SPDX-License-Identifier: MIT OR Apache-2.0

//! Datasets, coordinate groups, split grids and CSV ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response vector and design matrix. Row order is observation order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Data(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if y.len() < 4 {
            return Err(Error::Data(format!("need at least 4 observations, got {}", y.len())));
        }
        if x.ncols() == 0 {
            return Err(Error::Data("design has no columns".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("response row {} is not finite", i + 1)));
        }
        for j in 0..x.ncols() {
            if let Some(i) = x.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "design entry ({}, {}) is not finite",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(Self { y, x })
    }

    /// Builds from row-major design data.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Data("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(DVector::from_vec(y), x)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Design in row-major order, `n * p` values.
    pub fn x_row_major(&self) -> Vec<f64> {
        let (n, p) = (self.n(), self.p());
        let mut out = vec![0.0; n * p];
        for j in 0..p {
            for (i, v) in self.x.column(j).iter().enumerate() {
                out[i * p + j] = *v;
            }
        }
        out
    }

    /// Same design with a different response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(y, self.x.clone())
    }

    /// Owned copy of rows `lo+1..=hi` (zero-based half-open `lo..hi`).
    pub fn rows(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo >= hi || hi > self.n() {
            return Err(Error::Data(format!("row range ({lo}, {hi}] outside 0..{}", self.n())));
        }
        Self::new(
            self.y.rows(lo, hi - lo).into_owned(),
            self.x.rows(lo, hi - lo).into_owned(),
        )
    }

    pub fn view(&self, lo: usize, hi: usize) -> Result<SegmentView<'_>> {
        SegmentView::new(self, lo, hi)
    }
}

/// Rows `lo+1..=hi` of a dataset, borrowed.
#[derive(Clone, Copy, Debug)]
pub struct SegmentView<'a> {
    parent: &'a Dataset,
    lo: usize,
    hi: usize,
}

impl<'a> SegmentView<'a> {
    pub fn new(parent: &'a Dataset, lo: usize, hi: usize) -> Result<Self> {
        if hi > parent.n() || lo >= hi || hi - lo < 2 {
            return Err(Error::Data(format!(
                "segment ({lo}, {hi}] must satisfy 0 <= lo, hi <= {}, hi - lo >= 2",
                parent.n()
            )));
        }
        Ok(Self { parent, lo, hi })
    }

    pub fn parent(&self) -> &'a Dataset {
        self.parent
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn p(&self) -> usize {
        self.parent.p()
    }

    pub fn y(&self) -> nalgebra::DVectorView<'a, f64> {
        self.parent.y.rows(self.lo, self.len())
    }

    pub fn x(&self) -> nalgebra::DMatrixView<'a, f64> {
        self.parent.x.rows(self.lo, self.len())
    }

    /// Unnormalized Gram matrix `X_segᵀ X_seg`.
    pub fn gram(&self) -> DMatrix<f64> {
        let x = self.x();
        let p = x.ncols();
        let mut g = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = x.column(i).dot(&x.column(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Sample second-moment matrix `(1/len) Σ X_i X_iᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.gram() / self.len() as f64
    }
}

/// Coordinate subset, stored zero-based and strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubGroup {
    indices: Vec<usize>,
}

impl SubGroup {
    /// From one-based indices in `1..=p`. Order does not matter; duplicates are rejected.
    pub fn from_one_based(indices: &[usize], p: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Config("group is empty".into()));
        }
        let mut idx: Vec<usize> = indices.to_vec();
        idx.sort_unstable();
        for w in idx.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Config(format!("group lists {} twice", w[0])));
            }
        }
        if idx[0] == 0 || *idx.last().unwrap() > p {
            return Err(Error::Config(format!("group indices must lie in 1..={p}")));
        }
        Ok(Self {
            indices: idx.into_iter().map(|i| i - 1).collect(),
        })
    }

    pub fn full(p: usize) -> Self {
        Self {
            indices: (0..p).collect(),
        }
    }

    /// One-based inclusive range `first..=last`.
    pub fn range(first: usize, last: usize, p: usize) -> Result<Self> {
        let v: Vec<usize> = (first..=last).collect();
        Self::from_one_based(&v, p)
    }

    /// Parses `"1,2,5-9"` style lists (one-based, inclusive ranges).
    pub fn parse(spec: &str, p: usize) -> Result<Self> {
        let mut out = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || Error::Config(format!("cannot parse group element '{part}'"));
            match part.split_once('-') {
                Some((a, b)) => {
                    let a: usize = a.trim().parse().map_err(|_| bad())?;
                    let b: usize = b.trim().parse().map_err(|_| bad())?;
                    if a > b {
                        return Err(bad());
                    }
                    out.extend(a..=b);
                }
                None => out.push(part.parse().map_err(|_| bad())?),
            }
        }
        Self::from_one_based(&out, p)
    }

    /// Zero-based indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_index(&self) -> usize {
        *self.indices.last().expect("non-empty")
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Checks the group fits a design with `p` columns.
    pub fn check(&self, p: usize) -> Result<()> {
        if self.max_index() >= p {
            return Err(Error::Config(format!(
                "group index {} exceeds p = {p}",
                self.max_index() + 1
            )));
        }
        Ok(())
    }
}

impl Serialize for SubGroup {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

/// One-based list; the upper bound is checked against `p` when the group is used.
impl<'de> Deserialize<'de> for SubGroup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        Self::from_one_based(&v, usize::MAX).map_err(serde::de::Error::custom)
    }
}

/// Candidate split indices `k` (left segment = rows `1..=k`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchGrid {
    pub n: usize,
    pub tau0: f64,
    pub stride: usize,
    pub points: Vec<usize>,
}

impl SearchGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid with an explicit number of trimmed rows at each end.
    pub fn with_trim(n: usize, trim: usize, stride: usize, tau0: f64) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if trim < 2 {
            return Err(Error::Grid(format!(
                "boundary trim {trim} leaves fewer than 2 rows in a segment"
            )));
        }
        if 2 * trim > n {
            return Err(Error::Grid(format!("boundary trim {trim} is too large for n = {n}")));
        }
        let last = n - trim;
        let mut points: Vec<usize> = (trim..=last).step_by(stride).collect();
        if *points.last().expect("trim <= last") != last {
            points.push(last);
        }
        Ok(Self {
            n,
            tau0,
            stride,
            points,
        })
    }
}

/// Split grid `{⌊n·τ0⌋, ⌊n·τ0⌋ + stride, …}` capped at `n − ⌊n·τ0⌋`; the cap is always included.
pub fn build_grid(n: usize, tau0: f64, stride: usize) -> Result<SearchGrid> {
    if !(tau0 > 0.0 && tau0 < 0.5) {
        return Err(Error::Config(format!("tau0 = {tau0} must lie in (0, 0.5)")));
    }
    let trim = (n as f64 * tau0).floor() as usize;
    if trim < 2 {
        return Err(Error::Grid(format!(
            "floor(n * tau0) = floor({n} * {tau0}) = {trim} < 2"
        )));
    }
    SearchGrid::with_trim(n, trim, stride, tau0)
}

/// Which column holds the response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseColumn {
    /// One-based column position.
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvLayout {
    pub response: ResponseColumn,
    pub header: bool,
}

impl Default for CsvLayout {
    fn default() -> Self {
        Self {
            response: ResponseColumn::Index(1),
            header: true,
        }
    }
}

/// Reads a comma-separated file: the response column becomes `y`, every other column
/// (in file order) becomes a design column.
pub fn load_csv(path: impl AsRef<Path>, layout: &CsvLayout) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, layout)
}

pub fn read_csv<R: std::io::Read>(reader: R, layout: &CsvLayout) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(layout.header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let response_col = match &layout.response {
        ResponseColumn::Index(i) => {
            if *i == 0 {
                return Err(Error::Config("response column index is one-based".into()));
            }
            i - 1
        }
        ResponseColumn::Name(name) => {
            if !layout.header {
                return Err(Error::Config(format!(
                    "response column '{name}' given by name but the file has no header"
                )));
            }
            let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?;
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("response column '{name}' not found")))?
        }
    };

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        if let Some(w) = width {
            if rec.len() != w {
                return Err(Error::Data(format!("row {row} has {} fields, expected {w}", rec.len())));
            }
        } else {
            if response_col >= rec.len() {
                return Err(Error::Data(format!(
                    "response column {} absent: rows have {} fields",
                    response_col + 1,
                    rec.len()
                )));
            }
            if rec.len() < 2 {
                return Err(Error::Data("need a response and at least one predictor".into()));
            }
            width = Some(rec.len());
        }
        let mut xs = Vec::with_capacity(rec.len() - 1);
        for (c, field) in rec.iter().enumerate() {
            let col = c + 1;
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                col,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    col,
                    message: format!("'{field}' is not finite"),
                });
            }
            if c == response_col {
                y.push(v);
            } else {
                xs.push(v);
            }
        }
        rows.push(xs);
    }
    if rows.len() < 4 {
        return Err(Error::Data(format!("need at least 4 observations, got {}", rows.len())));
    }
    Dataset::from_rows(y, &rows)
}

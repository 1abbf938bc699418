// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or arguments.
    Usage,
    /// Input data cannot support the requested analysis.
    Data,
    /// A numerical routine hit a degenerate case.
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible search grid: {0}")]
    Grid(String),
    #[error("column {column} is numerically collinear with the others (tau^2 = {tau_sq:e})")]
    Collinear { column: usize, tau_sq: f64 },
    #[error("variance floor violated at coordinate {column} (sigma^2 * omega = {value:e})")]
    VarianceFloor { column: usize, value: f64 },
    #[error("degenerate residual variance {0:e}; the segment fits are exact")]
    DegenerateVariance(f64),
    #[error("node-wise regression for column {column} did not converge")]
    NodewiseDiverged { column: usize },
    #[error("lasso failed at split {k}: {message}")]
    Lasso { k: usize, message: String },
    #[error("{flagged} of {total} bootstrap replicates had non-converged lasso fits")]
    TooManyFlagged { flagged: usize, total: usize },
    #[error("interval ({s}, {e}]: {source}")]
    Interval {
        s: usize,
        e: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("replication {rep}: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Io { .. } | Error::Parse { .. } | Error::Data(_) | Error::Grid(_) => ErrorClass::Data,
            Error::Collinear { .. }
            | Error::VarianceFloor { .. }
            | Error::DegenerateVariance(_)
            | Error::NodewiseDiverged { .. }
            | Error::Lasso { .. }
            | Error::TooManyFlagged { .. } => ErrorClass::Numeric,
            Error::Stage { source, .. } | Error::Interval { source, .. } | Error::Replication { source, .. } => {
                source.class()
            }
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use regcpt::data::{CsvLayout, ResponseColumn};
use regcpt::detection::{Method, TestConfig};
use regcpt::segmentation::SegmentOptions;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub response: Option<ResponseColumn>,
    pub no_header: bool,
}

/// Everything a run reads from `--config`; flags override individual fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub test: TestConfig,
    pub segment: SegmentOptions,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub precision_cache: Option<PathBuf>,
    pub dump_process: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }

    pub fn layout(&self) -> CsvLayout {
        CsvLayout {
            response: self.input.response.clone().unwrap_or(ResponseColumn::Index(1)),
            header: !self.input.no_header,
        }
    }
}

/// Output and parallelism flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML configuration; flags take precedence over its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, alias = "threads", env = "REGCPT_WORKERS")]
    pub workers: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Test settings shared by detect, segment, simulate and cv.
#[derive(Args, Debug, Clone, Default)]
pub struct TestArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau0: Option<f64>,
    /// Bootstrap replicates.
    #[arg(long = "boot", alias = "B")]
    pub boot: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Skip cross-validation and use this penalty multiplier.
    #[arg(long)]
    pub fixed_c: Option<f64>,
    /// Comma-separated penalty multipliers to cross-validate.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
}

impl TestArgs {
    pub fn apply(&self, cfg: &mut TestConfig) {
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.tau0 {
            cfg.tau0 = v;
        }
        if let Some(v) = self.boot {
            cfg.b = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.fixed_c {
            cfg.tuning.fixed_c = Some(v);
        }
        if let Some(v) = &self.c_grid {
            cfg.tuning.c_grid = v.clone();
        }
        if let Some(v) = self.folds {
            cfg.tuning.folds = v;
        }
    }
}

/// Data input flags for detect, segment and cv.
#[derive(Args, Debug, Clone, Default)]
pub struct InputArgs {
    /// CSV file with the response and the covariates.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Response column: a header name or a one-based position.
    #[arg(long)]
    pub response: Option<String>,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Coordinates to test, e.g. `1,2,5-9` (one-based).
    #[arg(long)]
    pub group: Option<String>,
}

impl InputArgs {
    pub fn apply(&self, cfg: &mut InputConfig) {
        if let Some(p) = &self.input {
            cfg.path = Some(p.clone());
        }
        if let Some(r) = &self.response {
            cfg.response = Some(match r.parse::<usize>() {
                Ok(i) => ResponseColumn::Index(i),
                Err(_) => ResponseColumn::Name(r.clone()),
            });
        }
        if self.no_header {
            cfg.no_header = true;
        }
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named desk-scale designs and the TOML experiment document.

use serde::{Deserialize, Serialize};

use super::design::{scaled_jump, ChangePoint, CovModel, ErrorLaw, SimDesign, MULTI_PATTERN, SINGLE_PATTERN};
use super::experiment::{run_cells, run_multicpt_experiment, Cell, ExperimentKind, ExperimentReport, GroupSelector};
use crate::detection::{Method, TestConfig};
use crate::error::{Error, Result};
use crate::segmentation::DEFAULT_MIN_LEN;

pub const PRESETS: [&str; 3] = ["table1_cell", "table2_cell", "table4_case2"];

/// Jump shape: a named pattern or explicit values before scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pattern {
    Named(String),
    Values(Vec<f64>),
}

impl Default for Pattern {
    fn default() -> Self {
        Pattern::Named("single".into())
    }
}

impl Pattern {
    fn values(&self) -> Result<Vec<f64>> {
        match self {
            Pattern::Named(s) if s == "single" => Ok(SINGLE_PATTERN.to_vec()),
            Pattern::Named(s) if s == "multi" => Ok(MULTI_PATTERN.to_vec()),
            Pattern::Named(s) => Err(Error::Config(format!(
                "unknown jump pattern {s:?}; expected \"single\", \"multi\" or a list"
            ))),
            Pattern::Values(v) => Ok(v.clone()),
        }
    }
}

/// A change point given either as a raw `delta` or as `sign·c·sqrt(log p/n)·pattern`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeSpec {
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default)]
    pub pattern: Pattern,
    #[serde(default = "one")]
    pub sign: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub cov_model: CovModel,
    pub s: usize,
    pub active_pool: (usize, usize),
    pub coef_range: (f64, f64),
    pub error_law: ErrorLaw,
    pub cpts: Vec<ChangeSpec>,
    pub seed: u64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        let d = SimDesign::default();
        Self {
            n: d.n,
            p: d.p,
            cov_model: d.cov_model,
            s: d.s,
            active_pool: d.active_pool,
            coef_range: d.coef_range,
            error_law: d.error_law,
            cpts: Vec::new(),
            seed: d.seed,
        }
    }
}

impl DesignSpec {
    pub fn build(&self) -> Result<SimDesign> {
        let cpts = self
            .cpts
            .iter()
            .map(|c| {
                let delta = match (&c.delta, c.c) {
                    (Some(d), None) => d.clone(),
                    (None, Some(mult)) => scaled_jump(c.sign * mult, self.n, self.p, &c.pattern.values()?),
                    (None, None) => Vec::new(),
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(format!(
                            "change point at k = {} gives both delta and c",
                            c.k
                        )))
                    }
                };
                Ok(ChangePoint { k: c.k, delta })
            })
            .collect::<Result<_>>()?;
        let d = SimDesign {
            n: self.n,
            p: self.p,
            cov_model: self.cov_model,
            s: self.s,
            active_pool: self.active_pool,
            coef_range: self.coef_range,
            error_law: self.error_law,
            cpts,
            seed: self.seed,
        };
        d.validate()?;
        Ok(d)
    }
}

/// Experiment document: design, test settings and the cells to score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Inferred from the number of change points when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    pub reps: usize,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    /// Defaults to the group and method of `test`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<Cell>,
    pub design: DesignSpec,
    #[serde(default)]
    pub test: TestConfig,
}

fn default_min_len() -> usize {
    DEFAULT_MIN_LEN
}

impl ExperimentSpec {
    pub fn resolved_kind(&self) -> ExperimentKind {
        self.kind.unwrap_or(match self.design.cpts.len() {
            0 => ExperimentKind::Size,
            1 => ExperimentKind::Power,
            _ => ExperimentKind::Multicpt,
        })
    }

    pub fn run(&self) -> Result<Vec<ExperimentReport>> {
        let d = self.design.build()?;
        match self.resolved_kind() {
            ExperimentKind::Multicpt => Ok(vec![run_multicpt_experiment(&d, &self.test, self.min_len, self.reps)?]),
            kind => {
                if (kind == ExperimentKind::Size) != d.cpts.is_empty() {
                    return Err(Error::Config(format!(
                        "{kind:?} experiment does not match a design with {} change points",
                        d.cpts.len()
                    )));
                }
                let cells = if self.cells.is_empty() {
                    vec![Cell {
                        group: self
                            .test
                            .group
                            .as_ref()
                            .map_or(GroupSelector::Full, |g| GroupSelector::List(g.one_based())),
                        method: self.test.method,
                    }]
                } else {
                    self.cells.clone()
                };
                run_cells(&d, &self.test, self.reps, &cells)
            }
        }
    }
}

/// Named desk-scale design. `c` overrides the jump multiplier; `reps` overrides the
/// replication count.
pub fn preset(name: &str, c: Option<f64>, reps: Option<usize>, seed: u64) -> Result<ExperimentSpec> {
    let test = TestConfig {
        seed,
        ..TestConfig::default()
    };
    let cell = |group, method| Cell { group, method };
    let spec = match name {
        "table1_cell" => ExperimentSpec {
            kind: Some(ExperimentKind::Size),
            reps: reps.unwrap_or(200),
            min_len: DEFAULT_MIN_LEN,
            cells: vec![
                cell(GroupSelector::Full, Method::Boot2),
                cell(GroupSelector::S, Method::Boot2),
                cell(GroupSelector::S, Method::Boot1),
            ],
            design: DesignSpec {
                n: 200,
                p: 100,
                seed,
                ..DesignSpec::default()
            },
            test,
        },
        "table2_cell" => ExperimentSpec {
            kind: Some(ExperimentKind::Power),
            reps: reps.unwrap_or(100),
            min_len: DEFAULT_MIN_LEN,
            cells: vec![
                cell(GroupSelector::S, Method::Boot2),
                cell(GroupSelector::Sc, Method::Boot2),
            ],
            design: DesignSpec {
                n: 200,
                p: 200,
                cpts: vec![ChangeSpec {
                    k: 100,
                    delta: None,
                    c: Some(c.unwrap_or(2.0)),
                    pattern: Pattern::Named("single".into()),
                    sign: 1.0,
                }],
                seed,
                ..DesignSpec::default()
            },
            test,
        },
        "table4_case2" => {
            let mult = c.unwrap_or(3.0);
            let jump = |k, sign| ChangeSpec {
                k,
                delta: None,
                c: Some(mult),
                pattern: Pattern::Named("multi".into()),
                sign,
            };
            ExperimentSpec {
                kind: Some(ExperimentKind::Multicpt),
                reps: reps.unwrap_or(30),
                min_len: DEFAULT_MIN_LEN,
                cells: Vec::new(),
                design: DesignSpec {
                    n: 600,
                    p: 50,
                    cpts: vec![jump(180, 1.0), jump(300, -1.0), jump(420, 1.0)],
                    seed,
                    ..DesignSpec::default()
                },
                test,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; available: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(spec)
}

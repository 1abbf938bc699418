// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ari::{adjusted_rand, labels_from_cuts};
use super::design::{gen_dataset, SimDesign};
use crate::data::SubGroup;
use crate::detection::{bootstrap_master, Analysis, Method, TestConfig};
use crate::error::{Error, Result};
use crate::rng::derive;
use crate::segmentation::segment;

/// Coordinates tested in an experiment cell, resolved against the design.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupSelector {
    Full,
    /// The active pool.
    S,
    /// Everything outside the active pool.
    Sc,
    /// One-based indices.
    List(Vec<usize>),
}

impl GroupSelector {
    pub fn resolve(&self, d: &SimDesign) -> Result<SubGroup> {
        let (lo, hi) = d.active_pool;
        match self {
            GroupSelector::Full => Ok(SubGroup::full(d.p)),
            GroupSelector::S => SubGroup::range(lo, hi, d.p),
            GroupSelector::Sc => {
                let rest: Vec<usize> = (1..=d.p).filter(|j| *j < lo || *j > hi).collect();
                SubGroup::from_one_based(&rest, d.p)
            }
            GroupSelector::List(v) => SubGroup::from_one_based(v, d.p),
        }
    }
}

impl fmt::Display for GroupSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSelector::Full => f.write_str("full"),
            GroupSelector::S => f.write_str("S"),
            GroupSelector::Sc => f.write_str("Sc"),
            GroupSelector::List(v) => {
                let parts: Vec<String> = v.iter().map(|j| j.to_string()).collect();
                f.write_str(&parts.join(" "))
            }
        }
    }
}

impl std::str::FromStr for GroupSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" | "all" => Ok(GroupSelector::Full),
            "S" | "s" => Ok(GroupSelector::S),
            "Sc" | "sc" | "S^c" => Ok(GroupSelector::Sc),
            other => Ok(GroupSelector::List(SubGroup::parse(other, usize::MAX)?.one_based())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawSelector {
    Name(String),
    List(Vec<usize>),
}

impl Serialize for GroupSelector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GroupSelector::List(v) => RawSelector::List(v.clone()).serialize(s),
            other => RawSelector::Name(other.to_string()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for GroupSelector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RawSelector::deserialize(d)? {
            RawSelector::Name(s) => s.parse().map_err(serde::de::Error::custom),
            RawSelector::List(v) => Ok(GroupSelector::List(v)),
        }
    }
}

/// One (group, method) combination evaluated on every replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub group: GroupSelector,
    pub method: Method,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Size,
    Power,
    Multicpt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub reject: bool,
    /// Absent for segmentation runs.
    pub p_value: Option<f64>,
    pub t_stat: Option<f64>,
    /// Argmax of the tested group's process, whether or not the test rejects.
    pub t_hat: Option<f64>,
    pub m_hat: usize,
    pub adj_rand: f64,
    /// Detected change points of a segmentation run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub change_points: Vec<usize>,
    /// Intervals `(s, e]` a segmentation run tested, in processing order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tested: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub design: SimDesign,
    pub group: Option<GroupSelector>,
    pub method: Method,
    pub alpha: f64,
    pub tau0: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub reps: usize,
    pub rejection_rate: f64,
    pub mean_m_hat: f64,
    pub mean_adj_rand: f64,
    pub sd_adj_rand: f64,
    /// Mean `|t̂ − t₀|` over rejecting replications with a single true change.
    pub localization: Option<f64>,
    pub flagged_replicates: usize,
    pub outcomes: Vec<RepOutcome>,
    /// Not serialized, so reports from different runs compare byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

pub const CSV_HEADER: [&str; 17] = [
    "kind",
    "n",
    "p",
    "s",
    "cov_model",
    "error_law",
    "n_cpts",
    "group",
    "method",
    "alpha",
    "B",
    "reps",
    "rejection_rate",
    "mean_m_hat",
    "mean_adj_rand",
    "sd_adj_rand",
    "localization",
];

impl ExperimentReport {
    fn new(
        kind: ExperimentKind,
        design: &SimDesign,
        cfg: &TestConfig,
        group: Option<GroupSelector>,
        method: Method,
        outcomes: Vec<RepOutcome>,
        flagged_replicates: usize,
    ) -> Self {
        let reps = outcomes.len();
        let mean = |f: &dyn Fn(&RepOutcome) -> f64| {
            if reps == 0 {
                0.0
            } else {
                outcomes.iter().map(f).sum::<f64>() / reps as f64
            }
        };
        let rejection_rate = mean(&|o| f64::from(u8::from(o.reject)));
        let mean_m_hat = mean(&|o| o.m_hat as f64);
        let mean_adj_rand = mean(&|o| o.adj_rand);
        let sd_adj_rand = if reps < 2 {
            0.0
        } else {
            let ss: f64 = outcomes.iter().map(|o| (o.adj_rand - mean_adj_rand).powi(2)).sum();
            (ss / (reps - 1) as f64).sqrt()
        };
        let localization = match design.cpts.as_slice() {
            [c] if kind != ExperimentKind::Multicpt => {
                let t0 = c.k as f64 / design.n as f64;
                let errs: Vec<f64> = outcomes
                    .iter()
                    .filter(|o| o.reject)
                    .filter_map(|o| o.t_hat.map(|t| (t - t0).abs()))
                    .collect();
                (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
            }
            _ => None,
        };
        Self {
            kind,
            design: design.clone(),
            group,
            method,
            alpha: cfg.alpha,
            tau0: cfg.tau0,
            b: cfg.b,
            seed: cfg.seed,
            reps,
            rejection_rate,
            mean_m_hat,
            mean_adj_rand,
            sd_adj_rand,
            localization,
            flagged_replicates,
            outcomes,
            wall_time_secs: 0.0,
        }
    }

    /// Summary row matching [`CSV_HEADER`].
    pub fn csv_row(&self) -> Vec<String> {
        let d = &self.design;
        let cov = match d.cov_model {
            super::design::CovModel::Identity => "identity".to_string(),
            super::design::CovModel::Toeplitz { rho } => format!("toeplitz({rho})"),
        };
        let law = serde_json::to_value(d.error_law)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        vec![
            serde_json::to_value(self.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            d.n.to_string(),
            d.p.to_string(),
            d.s.to_string(),
            cov,
            law,
            d.cpts.len().to_string(),
            self.group.as_ref().map_or(String::new(), |g| g.to_string()),
            self.method.to_string(),
            format!("{:?}", self.alpha),
            self.b.to_string(),
            self.reps.to_string(),
            format!("{:?}", self.rejection_rate),
            format!("{:?}", self.mean_m_hat),
            format!("{:?}", self.mean_adj_rand),
            format!("{:?}", self.sd_adj_rand),
            self.localization.map_or(String::new(), |v| format!("{v:?}")),
        ]
    }
}

/// Writes reports as CSV, one row per design cell.
pub fn write_reports_csv<W: Write>(reports: &[ExperimentReport], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Data(format!("writing report: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing report: {e}")))?;
    Ok(())
}

/// Data seed of replication `rep`.
pub fn rep_design(d: &SimDesign, rep: usize) -> SimDesign {
    d.with_seed(derive(d.seed, rep as u64))
}

/// Test configuration of replication `rep`.
pub fn rep_config(cfg: &TestConfig, rep: usize) -> TestConfig {
    TestConfig {
        seed: derive(cfg.seed, rep as u64),
        ..cfg.clone()
    }
}

fn wrap(rep: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Replication {
        rep,
        source: Box::new(e),
    }
}

/// Runs `reps` replications of a single change-point test and scores every cell on
/// each one. Cells share the analysis, and cells with the same method share draws,
/// so Bootstrap-I and Bootstrap-II use common random numbers.
pub fn run_cells(d: &SimDesign, cfg: &TestConfig, reps: usize, cells: &[Cell]) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    d.validate()?;
    if d.cpts.len() > 1 {
        return Err(Error::Config(
            "single change-point cells need at most one change point".into(),
        ));
    }
    if cells.is_empty() {
        return Err(Error::Config("no experiment cells".into()));
    }
    let groups: Vec<SubGroup> = cells.iter().map(|c| c.group.resolve(d)).collect::<Result<_>>()?;
    let start = Instant::now();
    let per_rep: Vec<Vec<(RepOutcome, usize)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let sim = gen_dataset(&rep_design(d, rep)).map_err(wrap(rep))?;
            let truth = sim.truth.labels(d.n);
            let rcfg = rep_config(cfg, rep);
            let analysis = Analysis::prepare(sim.data, &rcfg).map_err(wrap(rep))?;
            let mut draws = Vec::new();
            for m in [Method::Boot1, Method::Boot2] {
                if cells.iter().any(|c| c.method == m) {
                    let b = analysis
                        .bootstrap(m, cfg.b, bootstrap_master(rcfg.seed))
                        .map_err(wrap(rep))?;
                    draws.push((m, b));
                }
            }
            cells
                .iter()
                .zip(&groups)
                .map(|(cell, g)| {
                    let (_, dr) = draws.iter().find(|(m, _)| *m == cell.method).expect("drawn");
                    let dec = analysis.decide(g, cfg.alpha, dr).map_err(wrap(rep))?;
                    let cuts: Vec<usize> = if dec.reject { vec![dec.argmax.k_hat] } else { Vec::new() };
                    let adj_rand = adjusted_rand(&labels_from_cuts(&cuts, d.n), &truth)?;
                    Ok((
                        RepOutcome {
                            rep,
                            reject: dec.reject,
                            p_value: Some(dec.p_value),
                            t_stat: Some(dec.t_stat),
                            t_hat: Some(dec.argmax.t_hat),
                            m_hat: cuts.len(),
                            adj_rand,
                            change_points: Vec::new(),
                            tested: Vec::new(),
                        },
                        dr.flagged_count(),
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let kind = if d.cpts.is_empty() {
        ExperimentKind::Size
    } else {
        ExperimentKind::Power
    };
    Ok(cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let outcomes: Vec<RepOutcome> = per_rep.iter().map(|r| r[ci].0.clone()).collect();
            let flagged = per_rep.iter().map(|r| r[ci].1).sum();
            let mut rep = ExperimentReport::new(kind, d, cfg, Some(cell.group.clone()), cell.method, outcomes, flagged);
            rep.wall_time_secs = elapsed;
            rep
        })
        .collect())
}

fn single_cell(d: &SimDesign, cfg: &TestConfig, reps: usize) -> Result<ExperimentReport> {
    let group = match &cfg.group {
        Some(g) => GroupSelector::List(g.one_based()),
        None => GroupSelector::Full,
    };
    let cells = [Cell {
        group,
        method: cfg.method,
    }];
    Ok(run_cells(d, cfg, reps, &cells)?.remove(0))
}

/// Empirical size: the fraction of null replications that reject `cfg.group`.
pub fn run_size_experiment(d: &SimDesign, cfg: &TestConfig, reps: usize) -> Result<ExperimentReport> {
    if !d.cpts.is_empty() {
        return Err(Error::Config(
            "a size experiment needs a design without change points".into(),
        ));
    }
    single_cell(d, cfg, reps)
}

/// Empirical power and localization for a design with one change point.
pub fn run_power_experiment(d: &SimDesign, cfg: &TestConfig, reps: usize) -> Result<ExperimentReport> {
    if d.cpts.len() != 1 {
        return Err(Error::Config(
            "a power experiment needs exactly one change point".into(),
        ));
    }
    single_cell(d, cfg, reps)
}

/// Binary segmentation scored by the number of detected changes and the adjusted
/// Rand index against the truth. Designs with fewer than two changes act as controls.
pub fn run_multicpt_experiment(
    d: &SimDesign,
    cfg: &TestConfig,
    min_len: usize,
    reps: usize,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    d.validate()?;
    let start = Instant::now();
    let outcomes: Vec<RepOutcome> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let sim = gen_dataset(&rep_design(d, rep)).map_err(wrap(rep))?;
            let truth = sim.truth.labels(d.n);
            let seg = segment(&sim.data, &rep_config(cfg, rep), min_len).map_err(wrap(rep))?;
            let adj_rand = adjusted_rand(&labels_from_cuts(&seg.change_points, d.n), &truth)?;
            Ok(RepOutcome {
                rep,
                reject: seg.m_hat > 0,
                p_value: None,
                t_stat: None,
                t_hat: None,
                m_hat: seg.m_hat,
                adj_rand,
                tested: seg.trace.iter().map(|t| (t.s, t.e)).collect(),
                change_points: seg.change_points,
            })
        })
        .collect::<Result<_>>()?;
    let group = cfg.group.as_ref().map(|g| GroupSelector::List(g.one_based()));
    let mut report = ExperimentReport::new(ExperimentKind::Multicpt, d, cfg, group, cfg.method, outcomes, 0);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::design::{scaled_jump, ChangePoint, SINGLE_PATTERN};

    fn small(cpts: Vec<ChangePoint>) -> SimDesign {
        SimDesign {
            n: 120,
            p: 20,
            active_pool: (1, 10),
            cpts,
            seed: 5,
            ..SimDesign::default()
        }
    }

    #[test]
    fn selectors() {
        let d = small(Vec::new());
        assert_eq!(
            GroupSelector::S.resolve(&d).unwrap().one_based(),
            (1..=10).collect::<Vec<_>>()
        );
        assert_eq!(
            GroupSelector::Sc.resolve(&d).unwrap().one_based(),
            (11..=20).collect::<Vec<_>>()
        );
        assert_eq!(GroupSelector::Full.resolve(&d).unwrap().len(), 20);
        assert_eq!(
            "1,3-4".parse::<GroupSelector>().unwrap(),
            GroupSelector::List(vec![1, 3, 4])
        );
        assert!(GroupSelector::List(vec![21]).resolve(&d).is_err());
        let json = serde_json::to_string(&vec![GroupSelector::Sc, GroupSelector::List(vec![2, 5])]).unwrap();
        assert_eq!(json, r#"["Sc",[2,5]]"#);
        let back: Vec<GroupSelector> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![GroupSelector::Sc, GroupSelector::List(vec![2, 5])]);
    }

    #[test]
    fn cells_share_replications_and_are_thread_invariant() {
        let jump = scaled_jump(2.0, 120, 20, &SINGLE_PATTERN);
        let d = small(vec![ChangePoint { k: 60, delta: jump }]);
        let cfg = TestConfig {
            b: 40,
            seed: 3,
            ..TestConfig::default()
        };
        let cells = [
            Cell {
                group: GroupSelector::S,
                method: Method::Boot2,
            },
            Cell {
                group: GroupSelector::S,
                method: Method::Boot1,
            },
            Cell {
                group: GroupSelector::Sc,
                method: Method::Boot2,
            },
        ];
        let a = run_cells(&d, &cfg, 4, &cells).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_cells(&d, &cfg, 4, &cells).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        // Same analysis, so the statistic for S agrees across methods except for σ̂.
        for (x, y) in a[0].outcomes.iter().zip(&a[1].outcomes) {
            assert_eq!(x.t_stat, y.t_stat);
            assert_eq!(x.t_hat, y.t_hat);
        }
        for r in &a {
            assert_eq!(r.reps, 4);
            assert!((0.0..=1.0).contains(&r.rejection_rate));
            assert!((-1.0..=1.0).contains(&r.mean_adj_rand));
        }
        assert_eq!(a[0].rejection_rate, 1.0);
        assert!(a[0].localization.unwrap() < 0.1);

        let single = run_power_experiment(
            &d,
            &TestConfig {
                group: Some(GroupSelector::S.resolve(&d).unwrap()),
                ..cfg.clone()
            },
            4,
        )
        .unwrap();
        assert_eq!(single.outcomes, a[0].outcomes);

        let mut buf = Vec::new();
        write_reports_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("power,120,20,5,identity,normal,1,S,boot2,"));
    }

    #[test]
    fn wrong_designs_are_rejected() {
        let cfg = TestConfig::default();
        let jump = vec![1.0; 5];
        let one = small(vec![ChangePoint {
            k: 60,
            delta: jump.clone(),
        }]);
        assert!(run_size_experiment(&one, &cfg, 1).is_err());
        assert!(run_power_experiment(&small(Vec::new()), &cfg, 1).is_err());
        let two = small(vec![
            ChangePoint {
                k: 40,
                delta: jump.clone(),
            },
            ChangePoint { k: 80, delta: jump },
        ]);
        assert!(run_power_experiment(&two, &cfg, 1).is_err());
    }

    #[test]
    fn report_json_omits_wall_time() {
        let r = ExperimentReport::new(
            ExperimentKind::Size,
            &small(Vec::new()),
            &TestConfig::default(),
            Some(GroupSelector::Full),
            Method::Boot2,
            vec![
                RepOutcome {
                    rep: 0,
                    reject: true,
                    p_value: Some(0.01),
                    t_stat: Some(3.0),
                    t_hat: Some(0.4),
                    m_hat: 1,
                    adj_rand: 0.5,
                    change_points: Vec::new(),
                    tested: Vec::new(),
                },
                RepOutcome {
                    rep: 1,
                    reject: false,
                    p_value: Some(0.5),
                    t_stat: Some(1.0),
                    t_hat: Some(0.6),
                    m_hat: 0,
                    adj_rand: 1.0,
                    change_points: Vec::new(),
                    tested: Vec::new(),
                },
            ],
            0,
        );
        assert_eq!(r.rejection_rate, 0.5);
        assert_eq!(r.mean_adj_rand, 0.75);
        assert!((r.sd_adj_rand - 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.localization, None);
        let v = serde_json::to_value(&r).unwrap();
        assert!(v.get("wall_time_secs").is_none());
        let back: ExperimentReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}

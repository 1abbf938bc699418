// SPDX-License-Identifier: MIT OR Apache-2.0

//! Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use regcpt::data::Dataset;
use regcpt::detection::{nodewise_config, Analysis, Method, TestConfig};
use regcpt::lasso::{kkt_violation, SolverOptions};
use regcpt::precision::{fit_nodewise_with, PrecisionEstimate};
use regcpt::rng::stream;
use regcpt::segmentation::{interval_seed, DEFAULT_MIN_LEN};
use regcpt::simlab::experiment::{rep_config, rep_design};
use regcpt::simlab::{
    adjusted_rand, gen_dataset, preset, run_cells, run_multicpt_experiment, Cell, ErrorLaw, ExperimentReport,
    GroupSelector, SimDesign,
};

const SEED: u64 = 1;
const WORKERS: [usize; 2] = [1, 8];

struct Runs {
    /// (full, boot2), (S, boot2), (S, boot1) under normal errors.
    table1: Vec<ExperimentReport>,
    table1_design: SimDesign,
    /// (S, boot2), (Sc, boot2) with C = 2.
    table2: Vec<ExperimentReport>,
    table2_design: SimDesign,
    gamma: ExperimentReport,
    gamma_design: SimDesign,
    t5: ExperimentReport,
    t5_design: SimDesign,
    case2: ExperimentReport,
    case2_design: SimDesign,
    cfg: TestConfig,
}

impl Runs {
    fn json(&self) -> String {
        let all: Vec<&ExperimentReport> = self
            .table1
            .iter()
            .chain(&self.table2)
            .chain([&self.gamma, &self.t5, &self.case2])
            .collect();
        serde_json::to_string(&all).expect("reports serialize")
    }
}

fn cell(group: GroupSelector, method: Method) -> Cell {
    Cell { group, method }
}

fn run_all() -> Runs {
    let t1 = preset("table1_cell", None, None, SEED).unwrap();
    let cfg = t1.test.clone();
    let table1_design = t1.design.build().unwrap();
    let table1 = run_cells(&table1_design, &cfg, 200, &t1.cells).unwrap();

    let t2 = preset("table2_cell", Some(2.0), None, SEED).unwrap();
    let table2_design = t2.design.build().unwrap();
    let table2 = run_cells(&table2_design, &cfg, 100, &t2.cells).unwrap();

    let law_design = |law| SimDesign {
        error_law: law,
        ..table1_design.clone()
    };
    let full = [cell(GroupSelector::Full, Method::Boot2)];
    let gamma_design = law_design(ErrorLaw::Gamma41Std);
    let gamma = run_cells(&gamma_design, &cfg, 200, &full).unwrap().remove(0);
    let t5_design = law_design(ErrorLaw::T5Std);
    let t5 = run_cells(&t5_design, &cfg, 200, &full).unwrap().remove(0);

    let c2 = preset("table4_case2", Some(3.0), None, SEED).unwrap();
    let case2_design = c2.design.build().unwrap();
    let case2 = run_multicpt_experiment(&case2_design, &cfg, c2.min_len, 30).unwrap();

    Runs {
        table1,
        table1_design,
        table2,
        table2_design,
        gamma,
        gamma_design,
        t5,
        t5_design,
        case2,
        case2_design,
        cfg,
    }
}

fn rate(r: &ExperimentReport, reps: usize) -> f64 {
    let hits = r.outcomes.iter().take(reps).filter(|o| o.reject).count();
    hits as f64 / reps.min(r.outcomes.len()) as f64
}

/// Refits every precision estimate the single change-point experiments used and
/// returns the largest KKT transfer excess.
fn transfer_excess(design: &SimDesign, cfg: &TestConfig, reps: usize) -> (f64, usize) {
    let mut worst = f64::NEG_INFINITY;
    for rep in 0..reps {
        let data = gen_dataset(&rep_design(design, rep)).unwrap().data;
        let prec = fit_nodewise_with(&data, &nodewise_config(&rep_config(cfg, rep))).unwrap();
        worst = worst.max(prec.kkt_transfer_excess(&data));
    }
    (worst, reps)
}

/// As [`transfer_excess`] for every interval the segmentation runs tested.
fn segmentation_transfer_excess(design: &SimDesign, cfg: &TestConfig, report: &ExperimentReport) -> (f64, usize) {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for o in &report.outcomes {
        let data = gen_dataset(&rep_design(design, o.rep)).unwrap().data;
        let rcfg = rep_config(cfg, o.rep);
        for &(s, e) in &o.tested {
            if e - s < 2 * DEFAULT_MIN_LEN {
                continue;
            }
            let sub = data.rows(s, e).unwrap();
            let local = TestConfig {
                seed: interval_seed(rcfg.seed, s, e),
                ..rcfg.clone()
            };
            let prec: PrecisionEstimate = fit_nodewise_with(&sub, &nodewise_config(&local)).unwrap();
            worst = worst.max(prec.kkt_transfer_excess(&sub));
            count += 1;
        }
    }
    (worst, count)
}

/// Largest KKT violation over every converged scan fit of the first `reps` analyses.
fn scan_kkt(design: &SimDesign, cfg: &TestConfig, reps: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for rep in 0..reps {
        let data: Dataset = gen_dataset(&rep_design(design, rep)).unwrap().data;
        let a = Analysis::prepare(data, &rep_config(cfg, rep)).unwrap();
        let (n, p) = (a.data.n(), a.data.p());
        for (i, &k) in a.grid.points.iter().enumerate() {
            if a.process.flagged[i] {
                continue;
            }
            for (lo, hi, row) in [(0, k, &a.process.lasso_left), (k, n, &a.process.lasso_right)] {
                let seg = a.data.view(lo, hi).unwrap();
                let beta = row.row(i).transpose();
                let lambda = a.schedule.lambda(p, hi - lo);
                worst = worst.max(kkt_violation(&seg.x(), &seg.y(), &beta, lambda));
            }
        }
    }
    worst
}

fn ari_suite() -> (bool, String) {
    let mut ok = adjusted_rand(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap() == 1.0;
    ok &= adjusted_rand(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap() == -0.5;
    ok &= adjusted_rand(&[1, 1, 1, 1], &[1, 1, 1, 1]).unwrap() == 1.0;
    let mut worst: f64 = 0.0;
    let mut s = stream(SEED, 11);
    for _ in 0..1000 {
        let len = 2 + s.below(59) as usize;
        let a: Vec<usize> = (0..len).map(|_| s.below(5) as usize).collect();
        let b: Vec<usize> = (0..len).map(|_| s.below(5) as usize).collect();
        let pa = s.permutation(5);
        let pb = s.permutation(5);
        let ra: Vec<usize> = a.iter().map(|&l| pa[l]).collect();
        let rb: Vec<usize> = b.iter().map(|&l| pb[l]).collect();
        let ab = adjusted_rand(&a, &b).unwrap();
        worst = worst.max((ab - adjusted_rand(&b, &a).unwrap()).abs());
        worst = worst.max((ab - adjusted_rand(&ra, &rb).unwrap()).abs());
        ok &= (-1.0..=1.0).contains(&ab);
    }
    ok &= worst <= 1e-12;
    (
        ok,
        format!("examples exact, max symmetry/relabel gap {worst:.1e} over 1000 cases"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut runs = Vec::new();
    for w in WORKERS {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap();
        let t = Instant::now();
        runs.push(pool.install(run_all));
        eprintln!("experiments with {w} worker(s): {:.0} s", t.elapsed().as_secs_f64());
    }
    let r = &runs[0];
    let mut lines: Vec<(bool, String)> = Vec::new();

    let size = r.table1[0].rejection_rate;
    lines.push((
        (0.01..=0.10).contains(&size),
        format!("1 size control, boot2, G = full, 200 reps: size {size:.3} in [0.01, 0.10]"),
    ));

    let (b2, b1) = (rate(&r.table1[1], 100), rate(&r.table1[2], 100));
    lines.push((
        b1 > b2,
        format!("2 size ordering, G = S, 100 reps: boot1 {b1:.3} > boot2 {b2:.3}"),
    ));

    let power = r.table2[0].rejection_rate;
    lines.push((
        power >= 0.95,
        format!("3 power, C = 2, G = S, p = 200: rate {power:.3} >= 0.95"),
    ));

    let spec = r.table2[1].rejection_rate;
    lines.push((
        spec <= 0.10,
        format!("4 power specificity, G = Sc: rate {spec:.3} <= 0.10"),
    ));

    let (g, t) = (r.gamma.rejection_rate, r.t5.rejection_rate);
    lines.push((
        (0.01..=0.10).contains(&g) && (0.01..=0.10).contains(&t),
        format!("5 non-normal errors: gamma size {g:.3}, t5 size {t:.3}, each in [0.01, 0.10]"),
    ));

    let close = r.table2[0]
        .outcomes
        .iter()
        .filter(|o| o.t_hat.is_some_and(|th| (th - 0.5).abs() <= 0.05))
        .count();
    lines.push((
        close >= 90,
        format!("6 localization: |t_hat - 0.5| <= 0.05 in {close}/100 reps (need 90)"),
    ));

    let (m, ari) = (r.case2.mean_m_hat, r.case2.mean_adj_rand);
    lines.push((
        (2.5..=3.5).contains(&m) && ari >= 0.9,
        format!("7 multiple change points, case 2, 30 reps: mean m_hat {m:.3} in [2.5, 3.5], mean ARI {ari:.3} >= 0.9"),
    ));

    let (gap, oracle_kkt) = common::oracle_gap(50, 20, 5);
    let kkt_tol = SolverOptions::default().kkt_tol;
    let scan = scan_kkt(&r.table1_design, &r.cfg, 10).max(scan_kkt(&r.table2_design, &r.cfg, 5));
    lines.push((
        gap <= 1e-6 && oracle_kkt <= kkt_tol && scan <= kkt_tol + 1e-9,
        format!(
            "8 lasso oracle: max gap {gap:.1e} <= 1e-6 on 50 instances; KKT violation {oracle_kkt:.1e} (oracle fits), {scan:.1e} (scan fits)"
        ),
    ));

    let mut worst = f64::NEG_INFINITY;
    let mut fits = 0;
    for (design, reps) in [
        (&r.table1_design, 200),
        (&r.table2_design, 100),
        (&r.gamma_design, 200),
        (&r.t5_design, 200),
    ] {
        let (w, c) = transfer_excess(design, &r.cfg, reps);
        worst = worst.max(w);
        fits += c;
    }
    let (w, c) = segmentation_transfer_excess(&r.case2_design, &r.cfg, &r.case2);
    worst = worst.max(w);
    fits += c;
    lines.push((
        worst <= 1e-6,
        format!("9 node-wise KKT transfer: max excess over lambda/tau^2 is {worst:.1e} (<= 1e-6) on {fits} fits"),
    ));

    let same = runs[0].json() == runs[1].json();
    lines.push((
        same,
        format!("10 determinism: reports for criteria 1-7 identical across workers {WORKERS:?}"),
    ));

    let (ok, msg) = ari_suite();
    lines.push((ok, format!("11 adjusted Rand suite: {msg}")));

    let mut failed = 0;
    for (ok, msg) in &lines {
        println!("{} criterion {msg}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.0} s)",
        lines.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

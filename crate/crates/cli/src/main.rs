// SPDX-License-Identifier: MIT OR Apache-2.0

//! `regcpt`: change-point tests, binary segmentation, simulations and penalty
//! cross-validation from the command line.
//!
//! Exit codes: 0 success (whether or not a test rejects), 2 usage error, 3 data
//! error, 4 numerical failure.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use regcpt::data::{build_grid, load_csv, Dataset, SubGroup};
use regcpt::detection::{detect_with, nodewise_config, schedule_cv, schedule_seed, Analysis, TestConfig};
use regcpt::error::{Error, ErrorClass};
use regcpt::precision::fit_nodewise_cached;
use regcpt::process::write_process_csv;
use regcpt::segmentation::{interval_grid, interval_seed, segment_with, write_trace_csv};
use regcpt::simlab::{preset, write_reports_csv, ExperimentSpec, PRESETS};
use serde::Serialize;

use config::{CommonArgs, Format, InputArgs, RunConfig, TestArgs};

#[derive(Parser, Debug)]
#[command(
    name = "regcpt",
    version,
    about = "Change-point detection in high-dimensional linear regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test for a single change point in a subgroup of coefficients.
    Detect {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        test: TestArgs,
        /// Also write the H surface (and, with --dump-wide, every Z column) as CSV.
        #[arg(long, value_name = "FILE")]
        dump_process: Option<PathBuf>,
        #[arg(long, requires = "dump_process")]
        dump_wide: bool,
        /// Reuse (or create) a node-wise precision fit stored in this file.
        #[arg(long, value_name = "FILE")]
        precision_cache: Option<PathBuf>,
    },
    /// Binary segmentation for multiple change points.
    Segment {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        test: TestArgs,
        /// Shortest segment that may be created.
        #[arg(long)]
        min_len: Option<usize>,
        /// Test at level alpha/2^depth.
        #[arg(long)]
        bonferroni: bool,
        /// Also write the H surface of the full-sample test as CSV.
        #[arg(long, value_name = "FILE")]
        dump_process: Option<PathBuf>,
    },
    /// Run a simulation experiment from a named preset or a TOML spec.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, conflicts_with = "spec", value_name = "NAME")]
        preset: Option<String>,
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        /// Jump multiplier for presets with a change.
        #[arg(long = "C", value_name = "C")]
        c: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Cross-validate the scan penalty multiplier.
    Cv {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        test: TestArgs,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    /// Result already written; exit with the class of the condition.
    Reported(ErrorClass, String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    fn exit_code(&self) -> u8 {
        let class = match self {
            Failure::Usage(_) => ErrorClass::Usage,
            Failure::Core(e) => e.class(),
            Failure::Reported(c, _) => *c,
        };
        match class {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Reported(_, m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("regcpt: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    let common = match &cmd {
        Command::Detect { common, .. }
        | Command::Segment { common, .. }
        | Command::Simulate { common, .. }
        | Command::Cv { common, .. } => common.clone(),
    };
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    if common.format.is_some() {
        cfg.format = common.format;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(format!("cannot start {} workers: {e}", cfg.workers.unwrap_or(0))))?;
    pool.install(|| match cmd {
        Command::Detect {
            input,
            test,
            dump_process,
            dump_wide,
            precision_cache,
            ..
        } => {
            if dump_process.is_some() {
                cfg.dump_process = dump_process;
            }
            if precision_cache.is_some() {
                cfg.precision_cache = precision_cache;
            }
            cmd_detect(cfg, &input, &test, dump_wide)
        }
        Command::Segment {
            input,
            test,
            min_len,
            bonferroni,
            dump_process,
            ..
        } => {
            if let Some(m) = min_len {
                cfg.segment.min_len = m;
            }
            if bonferroni {
                cfg.segment.bonferroni = true;
            }
            if dump_process.is_some() {
                cfg.dump_process = dump_process;
            }
            cmd_segment(cfg, &input, &test)
        }
        Command::Simulate {
            preset,
            spec,
            c,
            reps,
            test,
            ..
        } => cmd_simulate(cfg, preset, spec, c, reps, &test),
        Command::Cv { input, test, .. } => cmd_cv(cfg, &input, &test),
    })
}

/// Loads the data and resolves the test configuration against it.
fn prepare_input(cfg: &mut RunConfig, input: &InputArgs, test: &TestArgs) -> Result<Dataset, Failure> {
    input.apply(&mut cfg.input);
    test.apply(&mut cfg.test);
    let path = cfg
        .input
        .path
        .clone()
        .ok_or_else(|| Failure::usage("no input file; pass --input FILE or set input.path in the config"))?;
    cfg.test.validate()?;
    let data = load_csv(&path, &cfg.layout())?;
    if let Some(g) = &input.group {
        cfg.test.group = Some(SubGroup::parse(g, data.p())?);
    }
    cfg.test.group_for(data.p())?;
    Ok(data)
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            write(&mut file)?;
            file.flush().map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

fn json_to<T: Serialize + ?Sized>(value: &T, w: &mut dyn Write) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(format!("serializing output: {e}")))?;
    writeln!(w, "{text}").map_err(|e| Error::Data(format!("writing output: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("writing output: {e}"))
}

fn dump(path: &Path, analysis: &Analysis, g: &SubGroup, wide: bool) -> Result<(), Failure> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_process_csv(&analysis.process, g, wide, std::io::BufWriter::new(file))?;
    Ok(())
}

fn cmd_detect(mut cfg: RunConfig, input: &InputArgs, test: &TestArgs, wide: bool) -> Result<(), Failure> {
    let data = prepare_input(&mut cfg, input, test)?;
    let tc = &cfg.test;
    let prec = match &cfg.precision_cache {
        Some(path) => Some(fit_nodewise_cached(&data, &nodewise_config(tc), path)?),
        None => None,
    };
    let result = detect_with(&data, tc, prec.clone())?;
    if let Some(path) = &cfg.dump_process {
        let analysis = Analysis::prepare_with(data.clone(), tc, prec)?;
        dump(path, &analysis, &result.group, wide)?;
    }
    let report = result.report();
    emit(cfg.out.as_deref(), |w| match cfg.format.unwrap_or_default() {
        Format::Json => json_to(&report, w),
        Format::Csv => {
            let opt = |v: Option<String>| v.unwrap_or_default();
            let group: Vec<String> = report.group.iter().map(|j| j.to_string()).collect();
            let mut cw = csv::Writer::from_writer(w);
            cw.write_record(DETECT_CSV_HEADER).map_err(csv_err)?;
            cw.write_record([
                format!("{:?}", report.t_stat),
                opt(report.crit.map(|v| format!("{v:?}"))),
                format!("{:?}", report.p_value),
                report.reject.to_string(),
                opt(report.t_hat.map(|v| format!("{v:?}"))),
                opt(report.k_hat.map(|v| v.to_string())),
                format!("{:?}", report.sigma_eps_sq),
                report.b.to_string(),
                format!("{:?}", report.alpha),
                format!("{:?}", report.tau0),
                group.join(" "),
                report.seed.to_string(),
                report.flagged_replicates.to_string(),
            ])
            .map_err(csv_err)?;
            cw.flush().map_err(|e| Error::Data(format!("writing output: {e}")))
        }
    })
}

/// Columns of `detect --format csv`; empty cells stand for null.
const DETECT_CSV_HEADER: [&str; 13] = [
    "t_stat",
    "crit",
    "p_value",
    "reject",
    "t_hat",
    "k_hat",
    "sigma_eps_sq",
    "B",
    "alpha",
    "tau0",
    "group",
    "seed",
    "flagged_replicates",
];

fn cmd_segment(mut cfg: RunConfig, input: &InputArgs, test: &TestArgs) -> Result<(), Failure> {
    let data = prepare_input(&mut cfg, input, test)?;
    let result = segment_with(&data, &cfg.test, &cfg.segment)?;
    emit(cfg.out.as_deref(), |w| match cfg.format.unwrap_or_default() {
        Format::Json => json_to(&result, w),
        Format::Csv => write_trace_csv(&result, w),
    })?;
    if result.infeasible() {
        let note = result.trace[0].note.clone().unwrap_or_default();
        return Err(Failure::Reported(
            ErrorClass::Data,
            format!("segmentation is infeasible: {note}"),
        ));
    }
    if let Some(path) = &cfg.dump_process {
        let n = data.n();
        let grid = interval_grid(n, cfg.test.tau0, cfg.test.stride, cfg.segment.min_len)?;
        let root = TestConfig {
            seed: interval_seed(cfg.test.seed, 0, n),
            ..cfg.test.clone()
        };
        let g = root.group_for(data.p())?;
        let analysis = Analysis::prepare_on_grid(data, &root, grid, None)?;
        dump(path, &analysis, &g, false)?;
    }
    Ok(())
}

fn cmd_simulate(
    cfg: RunConfig,
    preset_name: Option<String>,
    spec_path: Option<PathBuf>,
    c: Option<f64>,
    reps: Option<usize>,
    test: &TestArgs,
) -> Result<(), Failure> {
    let mut spec = match (preset_name, spec_path) {
        (Some(name), None) => preset(&name, c, reps, test.seed.unwrap_or(cfg.test.seed))?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let mut spec: ExperimentSpec =
                toml::from_str(&text).map_err(|e| Failure::usage(format!("spec {}: {e}", path.display())))?;
            if let Some(r) = reps {
                spec.reps = r;
            }
            if c.is_some() {
                return Err(Failure::usage(
                    "--C applies to presets; set c on the change points of the spec",
                ));
            }
            spec
        }
        _ => {
            return Err(Failure::usage(format!(
                "simulate needs --preset NAME or --spec FILE (presets: {})",
                PRESETS.join(", ")
            )))
        }
    };
    test.apply(&mut spec.test);
    if let Some(seed) = test.seed {
        spec.design.seed = seed;
    }
    let start = Instant::now();
    let reports = spec.run()?;
    eprintln!(
        "regcpt: {} replications in {:.1} s",
        spec.reps,
        start.elapsed().as_secs_f64()
    );
    emit(cfg.out.as_deref(), |w| match cfg.format.unwrap_or_default() {
        Format::Json => json_to(&reports, w),
        Format::Csv => write_reports_csv(&reports, w),
    })
}

fn cmd_cv(mut cfg: RunConfig, input: &InputArgs, test: &TestArgs) -> Result<(), Failure> {
    let data = prepare_input(&mut cfg, input, test)?;
    let tc = &cfg.test;
    let grid = build_grid(data.n(), tc.tau0, tc.stride)?;
    let cv = schedule_cv(&data, &grid, &tc.tuning, schedule_seed(tc.seed))?;
    emit(cfg.out.as_deref(), |w| match cfg.format.unwrap_or_default() {
        Format::Json => json_to(&cv, w),
        Format::Csv => {
            let mut cw = csv::Writer::from_writer(w);
            cw.write_record(["c", "left", "right", "mean", "selected"])
                .map_err(csv_err)?;
            for i in 0..cv.c_grid.len() {
                cw.write_record([
                    format!("{:?}", cv.c_grid[i]),
                    format!("{:?}", cv.left[i]),
                    format!("{:?}", cv.right[i]),
                    format!("{:?}", cv.mean[i]),
                    u8::from(cv.c_grid[i] == cv.c).to_string(),
                ])
                .map_err(csv_err)?;
            }
            cw.flush().map_err(|e| Error::Data(format!("writing output: {e}")))
        }
    })
}

//! Command-line front end for the `trisim` simulator. Each command loads a
//! scenario, hands it to the library and writes what comes back.
//!
//! Exit codes: 0 on success, 2 when a scenario cannot be used, 3 when a
//! simulation fails.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use trisim::scenario::{Mode, Scenario};
use trisim::sim::{self, Aggregate, ComparisonCell};
use trisim::{ScenarioError, SimError};

use output::{write_file, fmt_sig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCENARIO: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;

/// Caps run parallelism when set to a positive integer.
pub const THREADS_ENV: &str = "TRISIM_THREADS";

#[derive(Debug)]
enum Failure {
    Scenario(String),
    Simulation(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Scenario(_) => EXIT_SCENARIO,
            Failure::Simulation(_) => EXIT_SIMULATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Scenario(m) | Failure::Simulation(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Simulation(e.to_string())
    }
}

fn io_failure(e: anyhow::Error) -> Failure {
    Failure::Simulation(format!("{e:#}"))
}

fn scenario_failure(path: &Path, e: ScenarioError) -> Failure {
    match e {
        // already names the file
        ScenarioError::Io(_) => Failure::Scenario(e.to_string()),
        _ => Failure::Scenario(format!("{}: {e}", path.display())),
    }
}

/// Shared overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
}

fn load(path: &Path, o: &Overrides) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path).map_err(|e| scenario_failure(path, e))?;
    if let Some(m) = o.mode {
        s.mode = m;
    }
    if let Some(r) = o.runs {
        s.runs = r;
    }
    if let Some(seed) = o.seed {
        s.master_seed = seed;
    }
    s.validate().map_err(|e| scenario_failure(path, e))
}

/// Runs `f` on a pool sized by `TRISIM_THREADS`, or on the global pool when
/// the variable is unset.
fn with_threads<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(f());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Scenario(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    let pool = sim_pool(n)?;
    Ok(pool.install(f))
}

fn sim_pool(n: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Failure::Simulation(format!("cannot start {n} worker threads: {e}")))
}

fn finish(result: Result<(), Failure>, err: &mut dyn Write) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    write_file(dir, name, contents)
        .with_context(|| format!("writing {}", dir.join(name).display()))
        .map_err(io_failure)
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: PathBuf,
    pub overrides: Overrides,
    pub out_dir: PathBuf,
}

/// Monte Carlo over the scenario. Writes `summary.txt`, `runs.csv`,
/// `aggregate.json` and, in micro mode, `trajectories.csv`.
pub fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        let s = load(&args.scenario, &args.overrides)?;
        let mc = with_threads(|| sim::monte_carlo(&s))??;
        let summary = output::summary_text(&mc.aggregate);
        write_out(&args.out_dir, "summary.txt", &summary)?;
        write_out(&args.out_dir, "runs.csv", &output::runs_csv(&mc, s.mode))?;
        write_out(&args.out_dir, "aggregate.json", &output::to_json(&mc.aggregate))?;
        if s.mode == Mode::Micro {
            write_out(&args.out_dir, "trajectories.csv", &output::trajectories_csv(&mc))?;
        }
        let _ = out.write_all(summary.as_bytes());
        Ok(())
    })();
    finish(result, err)
}

#[derive(Debug, Clone)]
pub struct CompareArgs {
    /// One table row per scenario.
    pub scenarios: Vec<PathBuf>,
    pub omegas: Vec<f64>,
    pub overrides: Overrides,
    pub out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    trajectory: &'a str,
    cells: &'a [ComparisonCell],
}

/// Proposed method against dead reckoning at each wheel rate, printed as a
/// table. With an output directory, also writes `comparison.txt` and
/// `comparison.json`.
pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        if args.omegas.is_empty() || args.omegas.iter().any(|w| !(*w > 0.0)) {
            return Err(Failure::Scenario("`omegas` must be one or more positive wheel rates".into()));
        }
        let mut rows = Vec::new();
        for path in &args.scenarios {
            let s = load(path, &args.overrides)?;
            let cells = with_threads(|| sim::compare(&s, &args.omegas))??;
            rows.push((s.name.clone(), cells));
        }
        let table = output::comparison_table(&rows);
        if let Some(dir) = &args.out_dir {
            let json: Vec<ComparisonRow> = rows
                .iter()
                .map(|(name, cells)| ComparisonRow {
                    trajectory: name,
                    cells,
                })
                .collect();
            write_out(dir, "comparison.txt", &table)?;
            write_out(dir, "comparison.json", &output::to_json(&json))?;
        }
        let _ = out.write_all(table.as_bytes());
        Ok(())
    })();
    finish(result, err)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub scenario: PathBuf,
    pub n_values: Vec<usize>,
    pub overrides: Overrides,
    pub out_dir: Option<PathBuf>,
}

/// Macro-mode error against robot count. With an output directory, also
/// writes `sweep.txt` and `sweep.json`.
pub fn cmd_sweep_n(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        if args.n_values.is_empty() {
            return Err(Failure::Scenario("`n` needs at least one robot count".into()));
        }
        if let Some(n) = args.n_values.iter().find(|&&n| n < 4) {
            return Err(Failure::Scenario(format!("`n` robot count {n} is below 4")));
        }
        let s = load(&args.scenario, &args.overrides)?;
        let sweep: Vec<Aggregate> = with_threads(|| sim::scalability_sweep(&s, &args.n_values))??;
        let table = output::sweep_table(&sweep);
        if let Some(dir) = &args.out_dir {
            write_out(dir, "sweep.txt", &table)?;
            write_out(dir, "sweep.json", &output::to_json(&sweep))?;
        }
        let _ = out.write_all(table.as_bytes());
        Ok(())
    })();
    finish(result, err)
}

#[derive(Debug, Clone)]
pub struct CdfArgs {
    pub scenario: PathBuf,
    pub maneuvers: usize,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

/// Independent first-step maneuvers under the vision controller, written to
/// `cdf.csv` for plotting error distributions.
pub fn cmd_cdf(args: &CdfArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        if args.maneuvers == 0 {
            return Err(Failure::Scenario("`maneuvers` must be at least 1".into()));
        }
        let overrides = Overrides {
            mode: Some(Mode::Micro),
            seed: args.seed,
            ..Overrides::default()
        };
        let s = load(&args.scenario, &overrides)?;
        let samples = with_threads(|| sim::maneuver_batch(&s, args.maneuvers))??;
        write_out(&args.out_dir, "cdf.csv", &output::cdf_csv(&samples))?;
        let n = samples.len() as f64;
        let mean = |f: &dyn Fn(&sim::StepRecord) -> f64| samples.iter().map(f).sum::<f64>() / n;
        let _ = writeln!(out, "maneuvers        {}", samples.len());
        let _ = writeln!(out, "mean |e_lat|     {} m", fmt_sig(mean(&|r| r.e_lat.abs())));
        let _ = writeln!(out, "mean |e_lon|     {} m", fmt_sig(mean(&|r| r.e_lon.abs())));
        let _ = writeln!(out, "mean error       {} m", fmt_sig(mean(&|r| r.e_lat.hypot(r.e_lon))));
        Ok(())
    })();
    finish(result, err)
}

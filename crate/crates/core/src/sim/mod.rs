//! Simulation runs, the localization method registry and Monte Carlo
//! aggregation.

mod dead_reckoning;
mod formation;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::control::TrajectorySample;
use crate::error::SimError;
use crate::geometry::Point;
use crate::noise::{mean_std, STREAM_BASE};
use crate::scenario::{Mode, Scenario};

pub use dead_reckoning::run_dead_reckoning;
pub use formation::{run_macro, run_micro, run_single_maneuver};

const VERTEX_STREAM: u64 = STREAM_BASE;
const MANEUVER_STREAM: u64 = STREAM_BASE + 1;
const HEADING_STREAM: u64 = STREAM_BASE + 2;
const WSS_STREAM: u64 = STREAM_BASE + 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub mover_id: usize,
    pub ideal: Point,
    pub actual: Point,
    /// This step's own placement error along the new triangle's base, meters.
    /// Errors inherited from the beacons are not included.
    pub e_lat: f64,
    /// This step's own placement error toward the new vertex, meters.
    pub e_lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickRecord {
    pub t: f64,
    pub true_pos: Point,
    pub est_pos: Point,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManeuverTrace {
    pub step: usize,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub mode: Mode,
    pub steps: Vec<StepRecord>,
    pub ticks: Vec<TickRecord>,
    pub maneuvers: Vec<ManeuverTrace>,
    /// Distance of the last placed robot from its ideal vertex, or of the
    /// dead-reckoning estimate from the truth at the end, meters.
    pub final_error: f64,
    pub triangle_count: usize,
    /// Seconds.
    pub travel_time: f64,
}

/// A way of localizing the formation, selectable by name.
pub trait LocalizationMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, scenario: &Scenario, run_index: usize) -> Result<RunRecord, SimError>;
}

pub struct MacroMethod;
pub struct MicroMethod;
pub struct DeadReckoningMethod;

impl LocalizationMethod for MacroMethod {
    fn name(&self) -> &'static str {
        Mode::Macro.name()
    }
    fn run(&self, scenario: &Scenario, run_index: usize) -> Result<RunRecord, SimError> {
        run_macro(scenario, run_index)
    }
}

impl LocalizationMethod for MicroMethod {
    fn name(&self) -> &'static str {
        Mode::Micro.name()
    }
    fn run(&self, scenario: &Scenario, run_index: usize) -> Result<RunRecord, SimError> {
        run_micro(scenario, run_index)
    }
}

impl LocalizationMethod for DeadReckoningMethod {
    fn name(&self) -> &'static str {
        Mode::DeadReckoning.name()
    }
    fn run(&self, scenario: &Scenario, run_index: usize) -> Result<RunRecord, SimError> {
        run_dead_reckoning(scenario, run_index)
    }
}

pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn LocalizationMethod>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    /// Macro, micro and dead reckoning.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(MacroMethod));
        r.register(Box::new(MicroMethod));
        r.register(Box::new(DeadReckoningMethod));
        r
    }

    /// Adds a method, replacing any registered under the same name.
    pub fn register(&mut self, method: Box<dyn LocalizationMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn LocalizationMethod, SimError> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| SimError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub count: usize,
    pub mean_abs_e_lat_m: f64,
    pub std_abs_e_lat_m: f64,
    pub mean_abs_e_lon_m: f64,
    pub std_abs_e_lon_m: f64,
    /// Share of steps whose lateral error exceeds the longitudinal one.
    pub lateral_dominant_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub scenario: String,
    pub mode: Mode,
    pub runs: usize,
    pub master_seed: u64,
    pub omega_wheel: f64,
    pub robots: usize,
    pub mean_final_error_m: f64,
    pub std_final_error_m: f64,
    pub mean_triangle_count: f64,
    pub mean_travel_time_s: f64,
    pub steps: Option<StepStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

fn std_or_zero(xs: &[f64]) -> f64 {
    mean_std(xs).map_or(0.0, |(_, s)| s)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn step_stats(records: &[RunRecord]) -> Option<StepStats> {
    let steps: Vec<&StepRecord> = records.iter().flat_map(|r| &r.steps).collect();
    if steps.is_empty() {
        return None;
    }
    let lat: Vec<f64> = steps.iter().map(|s| s.e_lat.abs()).collect();
    let lon: Vec<f64> = steps.iter().map(|s| s.e_lon.abs()).collect();
    let dominant = steps.iter().filter(|s| s.e_lat.abs() > s.e_lon.abs()).count();
    Some(StepStats {
        count: steps.len(),
        mean_abs_e_lat_m: mean(&lat),
        std_abs_e_lat_m: std_or_zero(&lat),
        mean_abs_e_lon_m: mean(&lon),
        std_abs_e_lon_m: std_or_zero(&lon),
        lateral_dominant_fraction: dominant as f64 / steps.len() as f64,
    })
}

/// Summaries over records already ordered by run index.
pub fn aggregate(scenario: &Scenario, records: &[RunRecord]) -> Aggregate {
    let finals: Vec<f64> = records.iter().map(|r| r.final_error).collect();
    let counts: Vec<f64> = records.iter().map(|r| r.triangle_count as f64).collect();
    let times: Vec<f64> = records.iter().map(|r| r.travel_time).collect();
    Aggregate {
        scenario: scenario.name.clone(),
        mode: scenario.mode,
        runs: records.len(),
        master_seed: scenario.master_seed,
        omega_wheel: scenario.omega_wheel,
        robots: scenario.robots.len(),
        mean_final_error_m: mean(&finals),
        std_final_error_m: std_or_zero(&finals),
        mean_triangle_count: mean(&counts),
        mean_travel_time_s: mean(&times),
        steps: step_stats(records),
    }
}

/// Runs `scenario.runs` runs of the scenario's mode in parallel. Results are
/// gathered in run order and reduced sequentially, so the output does not
/// depend on scheduling.
pub fn monte_carlo_with(registry: &MethodRegistry, scenario: &Scenario) -> Result<MonteCarlo, SimError> {
    let method = registry.get(scenario.mode.name())?;
    let results: Vec<Result<RunRecord, SimError>> = (0..scenario.runs)
        .into_par_iter()
        .map(|i| method.run(scenario, i))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for (run_index, r) in results.into_iter().enumerate() {
        records.push(r.map_err(|e| SimError::Run {
            run_index,
            source: Box::new(e),
        })?);
    }
    let aggregate = aggregate(scenario, &records);
    Ok(MonteCarlo { records, aggregate })
}

pub fn monte_carlo(scenario: &Scenario) -> Result<MonteCarlo, SimError> {
    monte_carlo_with(&MethodRegistry::with_defaults(), scenario)
}

/// Macro-mode Monte Carlo for each robot count, on strips of that size.
pub fn scalability_sweep(scenario: &Scenario, n_values: &[usize]) -> Result<Vec<Aggregate>, SimError> {
    n_values
        .iter()
        .map(|&n| {
            if n < 4 {
                return Err(SimError::Invalid("n", format!("robot count {n} is below 4")));
            }
            let mut s = if n == scenario.robots.len() {
                scenario.clone()
            } else {
                scenario.with_robot_count(n)
            };
            s.mode = Mode::Macro;
            Ok(monte_carlo(&s)?.aggregate)
        })
        .collect()
}

/// `count` independent first-step maneuvers under the vision controller,
/// gathered in order.
pub fn maneuver_batch(scenario: &Scenario, count: usize) -> Result<Vec<StepRecord>, SimError> {
    let results: Vec<Result<StepRecord, SimError>> = (0..count)
        .into_par_iter()
        .map(|i| run_single_maneuver(scenario, i))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(run_index, r)| {
            r.map_err(|e| SimError::Run {
                run_index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCell {
    pub omega_wheel: f64,
    pub proposed: Aggregate,
    pub dead_reckoning: Aggregate,
}

/// Macro mode against dead reckoning at each wheel rate.
pub fn compare(scenario: &Scenario, omegas: &[f64]) -> Result<Vec<ComparisonCell>, SimError> {
    omegas
        .iter()
        .map(|&omega| {
            let mut s = scenario.clone();
            s.omega_wheel = omega;
            s.mode = Mode::Macro;
            let proposed = monte_carlo(&s)?.aggregate;
            s.mode = Mode::DeadReckoning;
            let dead_reckoning = monte_carlo(&s)?.aggregate;
            Ok(ComparisonCell {
                omega_wheel: omega,
                proposed,
                dead_reckoning,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;

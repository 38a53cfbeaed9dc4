//! Formation runs: plan a step, place the mover, repeat until the route is done.

use nalgebra::Vector2;

use super::{ManeuverTrace, RunRecord, StepRecord, MANEUVER_STREAM, VERTEX_STREAM};
use crate::control::{run_vertex_maneuver, ManeuverSpec};
use crate::error::SimError;
use crate::geometry::{Point, Pose2D, TriangleFrame};
use crate::noise::{derive_seed, stream_rng, VertexErrorSampler};
use crate::planner::{plan_n_robot_step, Formation, PlanOutcome, PlanStep};
use crate::scenario::{Mode, Scenario};

/// Trajectory samples kept per maneuver are thinned to this spacing. The
/// last sample is always kept.
const TRACE_EVERY: usize = 10;

struct Placed {
    position: Point,
    heading: f64,
    /// Seconds spent on the step.
    elapsed: f64,
    /// Error against the vertex the step aimed for, in the new triangle's
    /// lateral and longitudinal axes.
    e_lat: f64,
    e_lon: f64,
}

/// How the mover ends up near its target vertex.
trait Placement {
    fn place(&mut self, step_index: usize, step: &PlanStep, world: &World) -> Result<Placed, SimError>;
}

struct World {
    ideal: Vec<Point>,
    actual: Vec<Point>,
    heading: Vec<f64>,
}

impl World {
    fn error(&self, id: usize) -> Vector2<f64> {
        self.actual[id] - self.ideal[id]
    }
}

/// Where a step's own error lands. The new vertex is built on the base as it
/// really stands, so it inherits the base's mean offset; the base's rotation
/// is not carried over.
fn compose(step: &PlanStep, world: &World, frame: &TriangleFrame, e_lat: f64, e_lon: f64) -> Point {
    let [a, b] = step.base;
    let inherited = (world.error(a) + world.error(b)) / 2.0;
    step.target_vertex + inherited + frame.vector_from_frame(e_lat, e_lon)
}

fn ideal_frame(step: &PlanStep, world: &World) -> Result<TriangleFrame, SimError> {
    let [a, b] = step.base;
    Ok(TriangleFrame::from_base(&world.ideal[a], &world.ideal[b], &step.target_vertex)?)
}

/// Draws each step's error from the empirical vertex error model.
struct SampledPlacement {
    sampler: VertexErrorSampler,
    rng: crate::noise::SimRng,
    speed: f64,
}

impl Placement for SampledPlacement {
    fn place(&mut self, _: usize, step: &PlanStep, world: &World) -> Result<Placed, SimError> {
        let frame = ideal_frame(step, world)?;
        let (e_lat, e_lon) = self.sampler.sample(&mut self.rng);
        let mover = step.moving_robot;
        let length = path_length(&world.ideal[mover], &step.inner_path);
        Ok(Placed {
            position: compose(step, world, &frame, e_lat, e_lon),
            heading: world.heading[mover],
            elapsed: length / self.speed,
            e_lat,
            e_lon,
        })
    }
}

/// Gets each step's error by flying the vision controller through the step
/// on the ideal local triangle.
struct ControlledPlacement<'a> {
    scenario: &'a Scenario,
    run_index: usize,
    keep_traces: bool,
    traces: Vec<ManeuverTrace>,
}

impl Placement for ControlledPlacement<'_> {
    fn place(&mut self, step_index: usize, step: &PlanStep, world: &World) -> Result<Placed, SimError> {
        let s = self.scenario;
        let mover = step.moving_robot;
        let at = |id: usize| (id, world.ideal[id]);
        let start = Pose2D::new(world.ideal[mover].x, world.ideal[mover].y, world.heading[mover]);
        let spec = ManeuverSpec {
            start,
            actual_start: start,
            base: [at(step.base[0]), at(step.base[1])],
            opposite: at(step.opposite),
            path: step.inner_path.clone(),
        };
        let stream = derive_seed(s.master_seed, self.run_index as u64, MANEUVER_STREAM);
        let seed = derive_seed(stream, step_index as u64, 0);
        let out = run_vertex_maneuver(&spec, &s.camera, &s.maneuver_config(), s.noise.quantize, seed)
            .map_err(|source| SimError::Maneuver { step: step_index, source })?;
        if self.keep_traces {
            let mut samples: Vec<_> = out.trajectory.iter().step_by(TRACE_EVERY).copied().collect();
            if (out.trajectory.len() - 1) % TRACE_EVERY != 0 {
                samples.extend(out.trajectory.last());
            }
            self.traces.push(ManeuverTrace {
                step: step_index,
                samples,
            });
        }
        let frame = ideal_frame(step, world)?;
        let (e_lat, e_lon) = frame.vector_to_frame(&(out.final_pose.position() - step.target_vertex));
        Ok(Placed {
            position: compose(step, world, &frame, e_lat, e_lon),
            heading: out.final_pose.heading,
            elapsed: out.settle_time,
            e_lat,
            e_lon,
        })
    }
}

fn path_length(start: &Point, path: &[Point]) -> f64 {
    let mut prev = *start;
    let mut total = 0.0;
    for p in path {
        total += (p - prev).norm();
        prev = *p;
    }
    total
}

fn run_formation(
    scenario: &Scenario,
    run_index: usize,
    mode: Mode,
    placement: &mut dyn Placement,
) -> Result<RunRecord, SimError> {
    let ideal: Vec<Point> = scenario.robots.iter().map(|p| p.position()).collect();
    let mut world = World {
        actual: ideal.clone(),
        heading: scenario.robots.iter().map(|p| p.heading).collect(),
        ideal,
    };
    let route = scenario.route();
    let mut target = 0usize;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut travel_time = 0.0;
    let mut last_mover = None;
    while target < route.len() {
        if steps.len() >= scenario.max_steps {
            return Err(SimError::StepLimit(scenario.max_steps));
        }
        let formation = Formation::new(world.ideal.clone(), scenario.side);
        let step = match plan_n_robot_step(&formation, &route[target], &scenario.obstacles)? {
            PlanOutcome::Arrived => {
                target += 1;
                continue;
            }
            PlanOutcome::Step(step) => step,
        };
        let index = steps.len();
        let placed = placement.place(index, &step, &world)?;
        let mover = step.moving_robot;
        world.ideal[mover] = step.target_vertex;
        world.actual[mover] = placed.position;
        world.heading[mover] = placed.heading;
        travel_time += placed.elapsed;
        last_mover = Some(mover);
        steps.push(StepRecord {
            step: index,
            mover_id: mover,
            ideal: step.target_vertex,
            actual: placed.position,
            e_lat: placed.e_lat,
            e_lon: placed.e_lon,
        });
    }
    let final_error = last_mover.map_or(0.0, |m| world.error(m).norm());
    Ok(RunRecord {
        run_index,
        mode,
        triangle_count: steps.len(),
        steps,
        ticks: Vec::new(),
        maneuvers: Vec::new(),
        final_error,
        travel_time,
    })
}

/// Macro mode: each placement error is drawn from the vertex error model.
pub fn run_macro(scenario: &Scenario, run_index: usize) -> Result<RunRecord, SimError> {
    let mut placement = SampledPlacement {
        sampler: VertexErrorSampler::new(&scenario.noise.vertex)?,
        rng: stream_rng(scenario.master_seed, run_index as u64, VERTEX_STREAM),
        speed: scenario.nominal_speed(),
    };
    run_formation(scenario, run_index, Mode::Macro, &mut placement)
}

/// Micro mode: every step's error comes from the vision controller instead of
/// the error model. Maneuver trajectories are kept for run 0 only.
pub fn run_micro(scenario: &Scenario, run_index: usize) -> Result<RunRecord, SimError> {
    let mut placement = ControlledPlacement {
        scenario,
        run_index,
        keep_traces: run_index == 0,
        traces: Vec::new(),
    };
    let mut record = run_formation(scenario, run_index, Mode::Micro, &mut placement)?;
    record.maneuvers = placement.traces;
    Ok(record)
}

/// The first step of the route flown once with the vision controller from
/// the start formation. Repeating this with different run indices gives
/// independent samples of the per-maneuver error.
pub fn run_single_maneuver(scenario: &Scenario, run_index: usize) -> Result<StepRecord, SimError> {
    let world = World {
        ideal: scenario.robots.iter().map(|p| p.position()).collect(),
        actual: scenario.robots.iter().map(|p| p.position()).collect(),
        heading: scenario.robots.iter().map(|p| p.heading).collect(),
    };
    let formation = Formation::new(world.ideal.clone(), scenario.side);
    let mut first = None;
    for target in scenario.route() {
        if let PlanOutcome::Step(step) = plan_n_robot_step(&formation, &target, &scenario.obstacles)? {
            first = Some(step);
            break;
        }
    }
    let step = first.ok_or_else(|| SimError::Invalid("waypoints", "the start formation already covers the route".into()))?;
    let mut placement = ControlledPlacement {
        scenario,
        run_index,
        keep_traces: false,
        traces: Vec::new(),
    };
    let placed = placement.place(0, &step, &world)?;
    Ok(StepRecord {
        step: 0,
        mover_id: step.moving_robot,
        ideal: step.target_vertex,
        actual: placed.position,
        e_lat: placed.e_lat,
        e_lon: placed.e_lon,
    })
}

use super::*;
use crate::geometry::{Point, TOL_FORM};
use crate::noise::NoiseModels;
use proptest::prelude::*;

fn pts(xy: &[(f64, f64)]) -> Vec<Point> {
    xy.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

fn staircase(mode: Mode) -> Scenario {
    let mut s = Scenario::new(
        "stairs",
        mode,
        pts(&[(0.0, 0.0), (4.0, 0.0), (4.0, 3.0), (8.0, 3.0), (8.0, 0.0), (12.0, 0.0)]),
    );
    s.runs = 20;
    s.master_seed = 7;
    s
}

#[test]
fn noiseless_macro_lands_on_the_lattice() {
    let mut s = staircase(Mode::Macro);
    s.noise = NoiseModels::noiseless();
    let r = run_macro(&s, 0).unwrap();
    assert!(r.triangle_count > 5);
    assert!(r.final_error < 1e-9);
    for st in &r.steps {
        assert!((st.actual - st.ideal).norm() < 1e-9);
    }
}

#[test]
fn single_run_monte_carlo_is_the_run() {
    for mode in [Mode::Macro, Mode::DeadReckoning] {
        let mut s = staircase(mode);
        s.runs = 1;
        let mc = monte_carlo(&s).unwrap();
        let direct = MethodRegistry::with_defaults().get(mode.name()).unwrap().run(&s, 0).unwrap();
        assert_eq!(mc.records, vec![direct.clone()]);
        assert_eq!(mc.aggregate.mean_final_error_m.to_bits(), direct.final_error.to_bits());
    }
}

#[test]
fn same_seed_same_report() {
    for mode in [Mode::Macro, Mode::DeadReckoning] {
        let s = staircase(mode);
        assert_eq!(monte_carlo(&s).unwrap(), monte_carlo(&s).unwrap());
    }
}

#[test]
fn different_seeds_differ() {
    let s = staircase(Mode::Macro);
    let mut t = s.clone();
    t.master_seed += 1;
    assert_ne!(monte_carlo(&s).unwrap().aggregate, monte_carlo(&t).unwrap().aggregate);
}

#[test]
fn macro_errors_ignore_wheel_rate() {
    let fast = staircase(Mode::Macro);
    let mut slow = fast.clone();
    slow.omega_wheel = 2.9;
    let a = monte_carlo(&fast).unwrap();
    let b = monte_carlo(&slow).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.steps, y.steps);
        assert_eq!(x.final_error.to_bits(), y.final_error.to_bits());
        assert!((y.travel_time / x.travel_time - 2.0).abs() < 1e-9);
    }
}

/// Every placed robot closes a triangle with two others whose sides are all
/// within the formation tolerance of one side length.
fn assert_triangles_formed(s: &Scenario, r: &RunRecord) {
    let mut at: Vec<Point> = s.robots.iter().map(|p| p.position()).collect();
    for st in &r.steps {
        at[st.mover_id] = st.actual;
        let m = st.actual;
        let near = |p: &Point, q: &Point| ((p - q).norm() - s.side).abs() <= TOL_FORM;
        let others: Vec<usize> = (0..at.len()).filter(|&i| i != st.mover_id).collect();
        let formed = others.iter().any(|&a| {
            others
                .iter()
                .any(|&b| a < b && near(&m, &at[a]) && near(&m, &at[b]) && near(&at[a], &at[b]))
        });
        assert!(formed, "step {} leaves robot {} outside any triangle", st.step, st.mover_id);
    }
}

#[test]
fn macro_runs_keep_triangles_formed() {
    let s = staircase(Mode::Macro);
    for r in &monte_carlo(&s).unwrap().records {
        assert_triangles_formed(&s, r);
    }
}

#[test]
fn macro_step_errors_follow_the_model() {
    let mut s = staircase(Mode::Macro);
    s.runs = 200;
    let stats = monte_carlo(&s).unwrap().aggregate.steps.unwrap();
    assert!((stats.mean_abs_e_lat_m - 0.036).abs() < 0.004, "{stats:?}");
    assert!((stats.mean_abs_e_lon_m - 0.013).abs() < 0.002, "{stats:?}");
}

#[test]
fn noiseless_dead_reckoning_tracks_exactly() {
    let mut s = staircase(Mode::DeadReckoning);
    s.noise = NoiseModels::noiseless();
    let r = run_dead_reckoning(&s, 0).unwrap();
    assert!(r.ticks.len() > 10);
    for t in &r.ticks {
        assert!(t.error < 1e-9, "error {} at t = {}", t.error, t.t);
    }
    assert_eq!(r.final_error, r.ticks.last().unwrap().error);
    let end = s.waypoints.last().unwrap();
    assert!((r.ticks.last().unwrap().true_pos - end).norm() <= s.maneuver.follower.capture_radius + 1e-9);
}

#[test]
fn dead_reckoning_error_grows_over_the_traverse() {
    let mut s = staircase(Mode::DeadReckoning);
    s.runs = 100;
    let mc = monte_carlo(&s).unwrap();
    let half = mc.aggregate.mean_travel_time_s / 2.0;
    let at_half: Vec<f64> = mc
        .records
        .iter()
        .map(|r| r.ticks.iter().min_by(|a, b| (a.t - half).abs().total_cmp(&(b.t - half).abs())).unwrap().error)
        .collect();
    let mean_half = at_half.iter().sum::<f64>() / at_half.len() as f64;
    assert!(mean_half < mc.aggregate.mean_final_error_m);
}

#[test]
fn slower_wheels_double_dead_reckoning_time() {
    let fast = staircase(Mode::DeadReckoning);
    let mut slow = fast.clone();
    slow.omega_wheel = fast.omega_wheel / 2.0;
    let a = monte_carlo(&fast).unwrap().aggregate;
    let b = monte_carlo(&slow).unwrap().aggregate;
    let ratio = b.mean_travel_time_s / a.mean_travel_time_s;
    assert!((ratio - 2.0).abs() < 0.1, "time ratio {ratio}");
}

#[test]
fn dead_reckoning_ticks_follow_the_record_interval() {
    let s = staircase(Mode::DeadReckoning);
    let r = run_dead_reckoning(&s, 0).unwrap();
    for w in r.ticks.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].t - w[0].t <= s.record_interval + 1e-9);
    }
    assert_eq!(r.ticks.last().unwrap().t, r.travel_time);
}

struct Stay;

impl LocalizationMethod for Stay {
    fn name(&self) -> &'static str {
        "stay"
    }
    fn run(&self, _: &Scenario, run_index: usize) -> Result<RunRecord, SimError> {
        Ok(RunRecord {
            run_index,
            mode: Mode::Macro,
            steps: Vec::new(),
            ticks: Vec::new(),
            maneuvers: Vec::new(),
            final_error: run_index as f64,
            triangle_count: 0,
            travel_time: 0.0,
        })
    }
}

#[test]
fn registry_looks_methods_up_by_name() {
    let mut reg = MethodRegistry::with_defaults();
    assert_eq!(reg.names(), vec!["dead_reckoning", "macro", "micro"]);
    assert!(matches!(reg.get("stay"), Err(SimError::UnknownMethod(n)) if n == "stay"));
    reg.register(Box::new(Stay));
    assert_eq!(reg.get("stay").unwrap().run(&staircase(Mode::Macro), 3).unwrap().final_error, 3.0);
    assert!(matches!(
        monte_carlo_with(&MethodRegistry::empty(), &staircase(Mode::Macro)),
        Err(SimError::UnknownMethod(_))
    ));
}

#[test]
fn sweep_at_four_robots_is_plain_macro() {
    let s = staircase(Mode::Macro);
    let sweep = scalability_sweep(&s, &[4]).unwrap();
    assert_eq!(sweep, vec![monte_carlo(&s).unwrap().aggregate]);
    assert!(matches!(scalability_sweep(&s, &[3]), Err(SimError::Invalid("n", _))));
}

#[test]
fn sweep_forces_macro_and_sizes_the_strip() {
    let s = staircase(Mode::DeadReckoning);
    let sweep = scalability_sweep(&s, &[6, 8]).unwrap();
    assert_eq!(sweep[0].mode, Mode::Macro);
    assert_eq!(sweep[0].robots, 6);
    assert_eq!(sweep[1].robots, 8);
}

#[test]
fn compare_pairs_methods_per_rate() {
    let s = staircase(Mode::Micro);
    let cells = compare(&s, &[5.8, 2.9]).unwrap();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[0].proposed.mode, Mode::Macro);
    assert_eq!(cells[1].dead_reckoning.mode, Mode::DeadReckoning);
    assert_eq!(cells[1].omega_wheel, 2.9);
    assert_eq!(cells[0].proposed.mean_final_error_m, cells[1].proposed.mean_final_error_m);
}

#[test]
fn micro_without_quantization_places_precisely() {
    let mut s = Scenario::new("line", Mode::Micro, pts(&[(6.0, 0.0)]));
    s.noise.quantize = false;
    s.maneuver.building.tol_eq = 0.25;
    s.runs = 3;
    let mc = monte_carlo(&s).unwrap();
    for r in &mc.records {
        assert!(r.triangle_count >= 3);
        for st in &r.steps {
            assert!(st.e_lat.hypot(st.e_lon) < 0.005, "{st:?}");
        }
    }
}

#[test]
fn micro_keeps_traces_for_the_first_run_only() {
    let mut s = Scenario::new("line", Mode::Micro, pts(&[(4.0, 0.0)]));
    s.runs = 2;
    let mc = monte_carlo(&s).unwrap();
    let first = &mc.records[0];
    assert_eq!(first.maneuvers.len(), first.triangle_count);
    assert!(first.maneuvers.iter().all(|m| !m.samples.is_empty()));
    assert!(mc.records[1].maneuvers.is_empty());
    assert!(mc.aggregate.mean_travel_time_s > 0.0);
}

#[test]
fn maneuver_batch_is_deterministic_and_quantized_errors_are_centimeters() {
    let s = Scenario::new("line", Mode::Micro, pts(&[(10.0, 0.0)]));
    let a = maneuver_batch(&s, 30).unwrap();
    assert_eq!(a, maneuver_batch(&s, 30).unwrap());
    let mean = a.iter().map(|r| r.e_lat.hypot(r.e_lon)).sum::<f64>() / a.len() as f64;
    assert!((0.015..0.06).contains(&mean), "mean {mean}");
}

#[test]
fn covered_route_has_no_maneuver() {
    let s = Scenario::new("here", Mode::Micro, pts(&[(0.75, 0.0)]));
    assert!(matches!(run_single_maneuver(&s, 0), Err(SimError::Invalid("waypoints", _))));
    let r = run_macro(&s, 0).unwrap();
    assert_eq!(r.triangle_count, 0);
    assert_eq!(r.final_error, 0.0);
}

#[test]
fn step_limit_is_enforced() {
    let mut s = staircase(Mode::Macro);
    s.max_steps = 3;
    assert!(matches!(run_macro(&s, 0), Err(SimError::StepLimit(3))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noiseless_macro_is_exact_anywhere(x in -12.0..12.0f64, y in -12.0..12.0f64) {
        let mut s = Scenario::new("p", Mode::Macro, vec![Point::new(x, y)]);
        s.noise = NoiseModels::noiseless();
        let r = run_macro(&s, 0).unwrap();
        prop_assert!(r.final_error < 1e-9);
    }

    #[test]
    fn macro_ideal_vertices_do_not_depend_on_the_seed(seed in any::<u64>()) {
        let mut s = staircase(Mode::Macro);
        let base = run_macro(&s, 0).unwrap();
        s.master_seed = seed;
        let r = run_macro(&s, 0).unwrap();
        let ideal = |r: &RunRecord| r.steps.iter().map(|st| (st.mover_id, st.ideal)).collect::<Vec<_>>();
        prop_assert_eq!(ideal(&base), ideal(&r));
    }
}

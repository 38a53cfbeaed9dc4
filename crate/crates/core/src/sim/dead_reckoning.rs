//! Single robot navigating on heading and wheel-speed sensors alone.

use super::{RunRecord, TickRecord, HEADING_STREAM, WSS_STREAM};
use crate::control::{step_unicycle, waypoint_follow, UnicycleState, WheelCommand};
use crate::error::SimError;
use crate::geometry::{Point, Pose2D};
use crate::noise::{gm_step, read_heading_error, stream_rng, wss_measure};
use crate::scenario::{Mode, Scenario};

/// The traverse is abandoned after this multiple of its nominal duration.
const TIME_LIMIT_FACTOR: f64 = 20.0;

/// The true robot steers on its true pose through the waypoints. The
/// estimate starts exact and integrates measured speed along measured heading.
pub fn run_dead_reckoning(scenario: &Scenario, run_index: usize) -> Result<RunRecord, SimError> {
    let s = scenario;
    let route = s.route();
    let start = route[0];
    let heading0 = s.robots[0].heading;
    let mut truth = UnicycleState {
        pose: Pose2D::new(start.x, start.y, heading0),
        wheel_radius: s.noise.wss.wheel_radius,
    };
    let mut est = start;
    let gains = s.follower_gains();
    let speed_per_rad = s.noise.wss.speed(1.0);
    let mut heading_rng = stream_rng(s.master_seed, run_index as u64, HEADING_STREAM);
    let mut wss_rng = stream_rng(s.master_seed, run_index as u64, WSS_STREAM);
    // heading is aligned at the start, so the correlated error starts at zero
    let mut gm = 0.0;

    let length: f64 = route.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let max_ticks = ((TIME_LIMIT_FACTOR * length / gains.v_nom + 60.0) / s.dt).ceil() as usize;
    let record_every = ((s.record_interval / s.dt).round() as usize).max(1);
    let sample_every = ((s.noise.sample_interval / s.dt).round() as usize).max(1);
    let mut speed_noise = 0.0;
    let mut heading_noise = 0.0;

    let tick = |t: f64, truth: &Pose2D, est: &Point| TickRecord {
        t,
        true_pos: truth.position(),
        est_pos: *est,
        error: (truth.position() - est).norm(),
    };
    let mut ticks = vec![tick(0.0, &truth.pose, &est)];
    let mut target = 1usize;
    let mut n = 0usize;
    loop {
        while target < route.len() && waypoint_follow(&truth, &route[target], &gains) == WheelCommand::STOP {
            target += 1;
        }
        if target >= route.len() {
            break;
        }
        if n >= max_ticks {
            return Err(SimError::Invalid(
                "waypoints",
                format!("dead-reckoning robot did not finish the route within {max_ticks} ticks"),
            ));
        }
        let cmd = waypoint_follow(&truth, &route[target], &gains);
        gm = gm_step(gm, s.dt, &s.noise.heading, &mut heading_rng);
        if n.is_multiple_of(sample_every) {
            speed_noise = wss_measure(0.0, &s.noise.wss, &mut wss_rng);
            heading_noise = read_heading_error(0.0, &s.noise.heading, &mut heading_rng);
        }
        let heading_meas = truth.pose.heading + gm + heading_noise;
        let v_meas = s.noise.wss.speed(cmd.v / speed_per_rad) + speed_noise;
        est += nalgebra::Vector2::new(heading_meas.cos(), heading_meas.sin()) * (v_meas * s.dt);
        truth = step_unicycle(&truth, &cmd, s.dt);
        n += 1;
        if n.is_multiple_of(record_every) {
            ticks.push(tick(n as f64 * s.dt, &truth.pose, &est));
        }
    }
    let t_end = n as f64 * s.dt;
    if ticks.last().is_some_and(|r| r.t < t_end) {
        ticks.push(tick(t_end, &truth.pose, &est));
    }
    let final_error = (truth.pose.position() - est).norm();
    Ok(RunRecord {
        run_index,
        mode: Mode::DeadReckoning,
        steps: Vec::new(),
        ticks,
        maneuvers: Vec::new(),
        final_error,
        triangle_count: 0,
        travel_time: t_end,
    })
}

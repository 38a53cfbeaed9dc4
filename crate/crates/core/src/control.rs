//! Unicycle kinematics, waypoint following and the rear-camera vertex
//! controller that parks a robot at the apex of a new triangle.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::geometry::{wrap_angle, Point, Pose2D};
use crate::noise::stream_rng;
use crate::vision::{observe_beacons, BeaconView, CameraConfig, Mount};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnicycleState {
    pub pose: Pose2D,
    pub wheel_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelCommand {
    pub v: f64,
    pub omega: f64,
}

impl WheelCommand {
    pub const STOP: WheelCommand = WheelCommand { v: 0.0, omega: 0.0 };
}

/// Euler step of the unicycle. The displacement is always along the heading
/// held during the step.
pub fn step_unicycle(state: &UnicycleState, cmd: &WheelCommand, dt: f64) -> UnicycleState {
    let p = &state.pose;
    UnicycleState {
        pose: Pose2D::new(
            p.x + cmd.v * p.heading.cos() * dt,
            p.y + cmd.v * p.heading.sin() * dt,
            p.heading + cmd.omega * dt,
        ),
        wheel_radius: state.wheel_radius,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FollowerGains {
    pub k_omega: f64,
    pub v_nom: f64,
    pub omega_max: f64,
    pub capture_radius: f64,
}

impl Default for FollowerGains {
    fn default() -> Self {
        Self {
            k_omega: 2.0,
            v_nom: 0.148 * 1.16 * 5.8,
            omega_max: 1.5,
            capture_radius: 0.05,
        }
    }
}

/// Proportional heading controller toward `waypoint`. Speed is full while the
/// heading error is within 45 degrees and falls to zero at 90. Speed is also
/// capped so that the tightest turn still reaches the waypoint, which keeps
/// the robot from circling it.
pub fn waypoint_follow(state: &UnicycleState, waypoint: &Point, gains: &FollowerGains) -> WheelCommand {
    let rel = waypoint - state.pose.position();
    let dist = rel.norm();
    if dist <= gains.capture_radius {
        return WheelCommand::STOP;
    }
    let err = wrap_angle(rel.y.atan2(rel.x) - state.pose.heading);
    let omega = (gains.k_omega * err).clamp(-gains.omega_max, gains.omega_max);
    let scale = (err.cos() / std::f64::consts::FRAC_PI_4.cos()).clamp(0.0, 1.0);
    let reach = gains.omega_max * dist / (2.0 * err.sin().abs());
    let v = (gains.v_nom * scale).min(reach);
    WheelCommand { v, omega }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildingConfig {
    /// Target disparity, pixels.
    pub d_t: f64,
    /// Allowed |d - d_t| for both side beacons, pixels.
    pub tol_eq: f64,
    /// Allowed offset of the opposite beacon from the image center, pixels.
    pub tol_center: f64,
    pub omega_max: f64,
    pub omega_search: f64,
    /// Translation speed cap under camera control, m/s.
    pub v_fine: f64,
    pub v_min: f64,
    /// Speed per radian of combined angular error, m/s.
    pub k_speed: f64,
    /// Turn rate per radian of centering error.
    pub k_center: f64,
    /// Smallest turn rate used while centering, rad/s.
    pub omega_min: f64,
    /// Turn rate per radian of tilt error.
    pub k_heading: f64,
    /// Desired tilt per radian of bearing imbalance.
    pub k_lateral: f64,
    /// Largest tilt off the longitudinal axis while translating, radians.
    pub max_tilt: f64,
    /// Tilt error above which the robot turns in place first, radians.
    pub turn_in_place: f64,
    /// Range overshoot allowed per radian of imbalance before reversing.
    pub k_turnaround: f64,
}

impl Default for BuildingConfig {
    fn default() -> Self {
        Self {
            d_t: 280.0,
            tol_eq: 2.0,
            tol_center: 3.0,
            omega_max: 1.5,
            omega_search: 0.5,
            v_fine: 0.2,
            v_min: 0.01,
            k_speed: 5.0,
            k_center: 2.0,
            omega_min: 0.02,
            k_heading: 4.0,
            k_lateral: 4.3,
            max_tilt: 3.0_f64.to_radians(),
            turn_in_place: 4.0_f64.to_radians(),
            k_turnaround: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Travel {
    /// Away from the beacons.
    #[default]
    Forward,
    Backward,
}

impl Travel {
    fn sign(self) -> f64 {
        match self {
            Travel::Forward => 1.0,
            Travel::Backward => -1.0,
        }
    }
}

/// Memory carried between building steps: only the travel direction, which
/// flips with hysteresis on the range error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildingState {
    pub travel: Travel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuildingOutput {
    Command(WheelCommand),
    Settled,
}

/// Quantities the building controller derives from one rear view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewErrors {
    pub d_m1: f64,
    pub d_m2: f64,
    /// Opposite-beacon column minus the principal column, pixels.
    pub e_center: f64,
    /// Imbalance of the angles the base beacons subtend with the opposite one, radians.
    pub imbalance: f64,
    /// Mean subtended angle minus its value at the vertex, radians; positive when too close.
    pub range: f64,
    /// Heading offset from the longitudinal axis, radians, CCW positive.
    pub tilt: f64,
}

impl ViewErrors {
    pub fn from_view(view: &BeaconView, camera: &CameraConfig, d_t: f64) -> Option<Self> {
        let d = view.distances(d_t).ok()?;
        let bearing = |u: f64| ((u - camera.principal_u) / camera.focal_px).atan();
        let bc = bearing(view.center.u);
        let a1 = bc - bearing(view.left.u);
        let a2 = bearing(view.right.u) - bc;
        let at = (d_t / camera.focal_px).atan();
        let imbalance = a1 - a2;
        Some(Self {
            d_m1: d.d_m1,
            d_m2: d.d_m2,
            e_center: view.center.u - camera.principal_u,
            imbalance,
            range: 0.5 * (a1 + a2) - at,
            tilt: -bc - imbalance,
        })
    }

    pub fn is_settled(&self, cfg: &BuildingConfig) -> bool {
        (self.d_m1 - cfg.d_t).abs() <= cfg.tol_eq
            && (self.d_m2 - cfg.d_t).abs() <= cfg.tol_eq
            && self.e_center.abs() <= cfg.tol_center
    }
}

/// One tick of the rear-camera vertex controller.
///
/// Order of checks: search while a beacon is out of view; stop when both
/// disparities match `d_t` and the opposite beacon is centered; once the
/// position is right, rotate in place to center; otherwise travel forward
/// (away from the beacons) or backward on the range error, tilting toward
/// the beacon with the larger disparity so the arc removes the lateral offset.
pub fn building_triangle_step(
    view: &BeaconView,
    camera: &CameraConfig,
    cfg: &BuildingConfig,
    state: BuildingState,
) -> (BuildingOutput, BuildingState) {
    let f = camera.focal_px;
    let clamp_w = |w: f64| w.clamp(-cfg.omega_max, cfg.omega_max);
    if !view.center.visible {
        let cmd = WheelCommand {
            v: 0.0,
            omega: cfg.omega_search,
        };
        return (BuildingOutput::Command(cmd), state);
    }
    let Some(e) = view
        .all_visible()
        .then(|| ViewErrors::from_view(view, camera, cfg.d_t))
        .flatten()
    else {
        // a side beacon is past the image edge: creep away from the base
        // with the opposite beacon held in the middle of the image
        let e_center = view.center.u - camera.principal_u;
        let cmd = WheelCommand {
            v: cfg.v_fine,
            omega: clamp_w(cfg.k_center * e_center / f),
        };
        return (BuildingOutput::Command(cmd), BuildingState { travel: Travel::Forward });
    };
    if e.is_settled(cfg) {
        return (BuildingOutput::Settled, state);
    }
    // angle equivalent of the pixel tolerance at 30 degrees off-axis
    let tol_angle = 0.75 * cfg.tol_eq / f;

    // a lateral offset needs a longer run to be worked off, so the turnaround
    // points spread out with it
    let turnaround = tol_angle.max(cfg.k_turnaround * e.imbalance.abs());
    let mut state = state;
    if e.range > turnaround {
        state.travel = Travel::Forward;
    } else if e.range < -turnaround {
        state.travel = Travel::Backward;
    }

    let in_band = |d: f64| (d - cfg.d_t).abs() <= cfg.tol_eq;
    if in_band(e.d_m1) && in_band(e.d_m2) {
        // only the centering is off; turning CCW moves the opposite beacon toward smaller columns
        let w = cfg.k_center * e.e_center / f;
        let w = w.signum() * w.abs().max(cfg.omega_min);
        let cmd = WheelCommand {
            v: 0.0,
            omega: clamp_w(w),
        };
        return (BuildingOutput::Command(cmd), state);
    }

    // the end leading the travel swings toward beacon 1 when it subtends the
    // larger angle, so the arc carries the robot back onto the axis
    let s = state.travel.sign();
    let tilt_des = s * (cfg.k_lateral * e.imbalance).clamp(-cfg.max_tilt, cfg.max_tilt);
    let tilt_err = tilt_des - e.tilt;
    let omega = clamp_w(cfg.k_heading * tilt_err);
    if tilt_err.abs() > cfg.turn_in_place {
        return (BuildingOutput::Command(WheelCommand { v: 0.0, omega }), state);
    }
    let speed = (cfg.k_speed * (e.range.abs() + e.imbalance.abs())).clamp(cfg.v_min, cfg.v_fine);
    (
        BuildingOutput::Command(WheelCommand { v: s * speed, omega }),
        state,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerPhase {
    Approaching,
    InnerTriangle,
    BuildingTriangle,
    Settled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose2D,
    pub phase: ControllerPhase,
}

/// Beacons and path for one maneuver.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverSpec {
    /// Pose the robot believes it starts from; the path is expressed
    /// relative to it.
    pub start: Pose2D,
    /// Where the robot really is.
    pub actual_start: Pose2D,
    /// The two beacons on the new triangle's base.
    pub base: [(usize, Point); 2],
    /// The beacon opposite that base.
    pub opposite: (usize, Point),
    /// Gate midpoints then the target vertex.
    pub path: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManeuverConfig {
    pub building: BuildingConfig,
    pub follower: FollowerGains,
    pub dt: f64,
    pub t_max: f64,
    /// Standard deviation of the start position dispersion, meters.
    pub start_jitter_pos: f64,
    /// Standard deviation of the start heading dispersion, radians.
    pub start_jitter_heading: f64,
}

impl Default for ManeuverConfig {
    fn default() -> Self {
        Self {
            building: BuildingConfig::default(),
            follower: FollowerGains::default(),
            dt: 0.01,
            t_max: 120.0,
            start_jitter_pos: 0.05,
            start_jitter_heading: 1.0_f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverOutcome {
    pub final_pose: Pose2D,
    pub trajectory: Vec<TrajectorySample>,
    /// Simulated time until settled, seconds.
    pub settle_time: f64,
}

/// Rigid map from true poses to the robot's belief, fixed at the start.
#[derive(Debug, Clone, Copy)]
struct Belief {
    from: Point,
    to: Point,
    turn: f64,
}

impl Belief {
    fn new(actual: &Pose2D, believed: &Pose2D) -> Self {
        Self {
            from: actual.position(),
            to: believed.position(),
            turn: believed.heading - actual.heading,
        }
    }

    fn apply(&self, pose: &Pose2D) -> Pose2D {
        let r = nalgebra::Rotation2::new(self.turn) * (pose.position() - self.from);
        Pose2D::new(self.to.x + r.x, self.to.y + r.y, pose.heading + self.turn)
    }
}

/// Drive a robot along the gate path, then park it at the apex with the
/// rear-camera controller.
///
/// Waypoints are tracked on the robot's belief: its odometry is exact, but
/// it starts from `spec.start` in its own mind while really sitting at
/// `spec.actual_start` plus a seeded dispersion. The rear camera takes over
/// on the last leg as soon as it sees all three beacons, or when the robot
/// believes it has arrived.
pub fn run_vertex_maneuver(
    spec: &ManeuverSpec,
    camera: &CameraConfig,
    config: &ManeuverConfig,
    quantize: bool,
    seed: u64,
) -> Result<ManeuverOutcome, ControlError> {
    let mut rng = stream_rng(seed, 0, 0);
    let mut jitter = |s: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        s * z
    };
    let a = &spec.actual_start;
    let start = Pose2D::new(
        a.x + jitter(config.start_jitter_pos),
        a.y + jitter(config.start_jitter_pos),
        a.heading + jitter(config.start_jitter_heading),
    );
    let belief = Belief::new(&start, &spec.start);
    let rear = camera.with_mount(Mount::Rear);
    let mut state = UnicycleState {
        pose: start,
        wheel_radius: 0.148,
    };
    let mut trajectory = vec![TrajectorySample {
        t: 0.0,
        pose: start,
        phase: ControllerPhase::Approaching,
    }];
    let last = spec.path.len().saturating_sub(1);
    let mut waypoint = 0usize;
    let mut building = BuildingState::default();
    let mut in_building = spec.path.is_empty();
    let n_ticks = (config.t_max / config.dt).ceil() as usize;
    for tick in 0..n_ticks {
        let t = tick as f64 * config.dt;
        if !in_building {
            let believed = UnicycleState {
                pose: belief.apply(&state.pose),
                ..state
            };
            while waypoint <= last
                && waypoint_follow(&believed, &spec.path[waypoint], &config.follower) == WheelCommand::STOP
            {
                waypoint += 1;
            }
            in_building = waypoint > last
                || (waypoint == last
                    && observe_beacons(&state.pose, &rear, spec.base, spec.opposite, quantize).all_visible());
            if !in_building {
                let cmd = waypoint_follow(&believed, &spec.path[waypoint], &config.follower);
                let phase = if waypoint == 0 {
                    ControllerPhase::Approaching
                } else {
                    ControllerPhase::InnerTriangle
                };
                state = step_unicycle(&state, &cmd, config.dt);
                trajectory.push(TrajectorySample {
                    t: t + config.dt,
                    pose: state.pose,
                    phase,
                });
                continue;
            }
        }
        let (phase, cmd) = building_command(spec, &rear, config, quantize, &state, &mut building);
        if phase == ControllerPhase::Settled {
            if let Some(s) = trajectory.last_mut() {
                s.phase = ControllerPhase::Settled;
            }
            return Ok(ManeuverOutcome {
                final_pose: state.pose,
                trajectory,
                settle_time: t,
            });
        }
        state = step_unicycle(&state, &cmd, config.dt);
        trajectory.push(TrajectorySample {
            t: t + config.dt,
            pose: state.pose,
            phase,
        });
    }
    Err(ControlError::Timeout(config.t_max))
}

fn building_command(
    spec: &ManeuverSpec,
    rear: &CameraConfig,
    config: &ManeuverConfig,
    quantize: bool,
    state: &UnicycleState,
    building: &mut BuildingState,
) -> (ControllerPhase, WheelCommand) {
    let view = observe_beacons(&state.pose, rear, spec.base, spec.opposite, quantize);
    let (out, next) = building_triangle_step(&view, rear, &config.building, *building);
    *building = next;
    match out {
        BuildingOutput::Settled => (ControllerPhase::Settled, WheelCommand::STOP),
        BuildingOutput::Command(c) => (ControllerPhase::BuildingTriangle, c),
    }
}

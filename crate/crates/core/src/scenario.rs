//! Scenario description and its TOML file form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{FollowerGains, ManeuverConfig};
use crate::error::ScenarioError;
use crate::geometry::{Lattice, Point, Pose2D, SNAP_TOL};
use crate::noise::NoiseModels;
use crate::planner::{strip_formation, Formation, Obstacle, DEFAULT_SAFETY_MARGIN};
use crate::vision::{CameraConfig, DEFAULT_TARGET_DISPARITY};

/// Wheel rate, rad/s, at which the configured follower turn gains apply.
pub const REFERENCE_WHEEL_RATE: f64 = 5.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Micro,
    Macro,
    DeadReckoning,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Micro => "micro",
            Mode::Macro => "macro",
            Mode::DeadReckoning => "dead_reckoning",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        [Mode::Micro, Mode::Macro, Mode::DeadReckoning]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub robots: Vec<Pose2D>,
    /// Triangle side, meters.
    pub side: f64,
    /// Target disparity, pixels.
    pub d_t: f64,
    pub camera: CameraConfig,
    /// Route points visited in order. The first one is where the
    /// dead-reckoning robot starts.
    pub waypoints: Vec<Point>,
    /// Final goal; the last waypoint when absent.
    pub destination: Option<Point>,
    pub obstacles: Vec<Obstacle>,
    pub noise: NoiseModels,
    pub maneuver: ManeuverConfig,
    /// Intended wheel rate, rad/s.
    pub omega_wheel: f64,
    /// Integration step, seconds.
    pub dt: f64,
    /// Spacing of recorded dead-reckoning ticks, seconds.
    pub record_interval: f64,
    pub max_steps: usize,
    pub runs: usize,
    pub master_seed: u64,
}

impl Scenario {
    /// Paper-default scenario over `waypoints` with the standard rhombus.
    pub fn new(name: &str, mode: Mode, waypoints: Vec<Point>) -> Self {
        let side = 1.5;
        Self {
            name: name.to_string(),
            mode,
            robots: strip_formation(4, side)
                .into_iter()
                .map(|p| Pose2D::new(p.x, p.y, 0.0))
                .collect(),
            side,
            d_t: DEFAULT_TARGET_DISPARITY,
            camera: CameraConfig::default(),
            waypoints,
            destination: None,
            obstacles: Vec::new(),
            noise: NoiseModels::default(),
            maneuver: ManeuverConfig::default(),
            omega_wheel: 5.8,
            dt: 0.01,
            record_interval: 1.0,
            max_steps: 5000,
            runs: 100,
            master_seed: 0,
        }
    }

    /// Same scenario with an `n`-robot strip in place of the start formation.
    pub fn with_robot_count(&self, n: usize) -> Self {
        let mut s = self.clone();
        s.robots = strip_formation(n, self.side)
            .into_iter()
            .map(|p| Pose2D::new(p.x, p.y, 0.0))
            .collect();
        s
    }

    /// Route targets for the formation: every waypoint, then the destination
    /// if it differs from the last one.
    pub fn route(&self) -> Vec<Point> {
        let mut r = self.waypoints.clone();
        if let Some(d) = self.destination {
            if r.last().is_none_or(|l| (l - d).norm() > 1e-12) {
                r.push(d);
            }
        }
        r
    }

    pub fn formation(&self) -> Formation {
        Formation::new(self.robots.iter().map(|p| p.position()).collect(), self.side)
    }

    /// Maneuver settings with the scenario's disparity and wheel rate applied.
    pub fn maneuver_config(&self) -> ManeuverConfig {
        let mut m = self.maneuver;
        m.building.d_t = self.d_t;
        m.follower = self.follower_gains();
        m.dt = self.dt;
        m
    }

    /// Noise-free forward speed at the intended wheel rate, m/s.
    pub fn nominal_speed(&self) -> f64 {
        self.noise.wss.speed(self.omega_wheel)
    }

    /// Waypoint follower gains at the scenario's wheel rate. The configured
    /// turn gains apply at the reference rate and scale with it, so a slower
    /// robot drives the same path in proportionally more time.
    pub fn follower_gains(&self) -> FollowerGains {
        let f = self.maneuver.follower;
        let scale = self.omega_wheel / REFERENCE_WHEEL_RATE;
        FollowerGains {
            v_nom: self.nominal_speed(),
            k_omega: f.k_omega * scale,
            omega_max: f.omega_max * scale,
            ..f
        }
    }

    /// Checks the invariants and snaps robots lying within 5 mm of the
    /// lattice spanned by the pair closest to one side apart.
    pub fn validate(mut self) -> Result<Self, ScenarioError> {
        let bad = |key: &str, message: &str| ScenarioError::Invalid {
            key: key.to_string(),
            line: None,
            message: message.to_string(),
        };
        if self.runs < 1 {
            return Err(bad("runs", "must be at least 1"));
        }
        if !(self.side > 0.0 && self.side.is_finite()) {
            return Err(bad("side", "must be positive"));
        }
        if !(self.d_t > 0.0) {
            return Err(bad("d_t", "must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(bad("dt", "must be positive"));
        }
        if !(self.omega_wheel > 0.0) {
            return Err(bad("omega_wheel", "must be positive"));
        }
        if !(self.record_interval > 0.0) {
            return Err(bad("record_interval", "must be positive"));
        }
        if !(self.noise.sample_interval > 0.0) {
            return Err(bad("sample_interval", "must be positive"));
        }
        if self.max_steps < 1 {
            return Err(bad("max_steps", "must be at least 1"));
        }
        if self.waypoints.is_empty() {
            return Err(bad("waypoints", "must not be empty"));
        }
        if self.waypoints.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(bad("waypoints", "must be finite"));
        }
        if let Err(e) = self.camera.validate() {
            return Err(bad("camera", &e));
        }
        for o in &self.obstacles {
            if !(o.radius >= 0.0) || !(o.safety_margin >= 0.0) {
                return Err(bad("obstacles", "radius and safety_margin must be non-negative"));
            }
        }
        if self.robots.len() < 4 {
            return Err(bad("robots", "needs at least 4 robots"));
        }
        let pts: Vec<Point> = self.robots.iter().map(|p| p.position()).collect();
        let pairs = |n: usize| (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)));
        let pair = |n: usize, k: usize| pairs(n).nth(k).expect("pair index");
        let edge = pairs(pts.len())
            .map(|(i, j)| ((pts[i] - pts[j]).norm() - self.side).abs())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .filter(|&(_, miss)| miss <= 2.0 * SNAP_TOL)
            .map(|(k, _)| pair(pts.len(), k))
            .ok_or_else(|| bad("robots", "no two robots are one side apart"))?;
        let lattice = Lattice::from_edge(pts[edge.0], pts[edge.1])
            .map_err(|e| bad("robots", &e.to_string()))?;
        let lattice = Lattice {
            u: lattice.u.normalize() * self.side,
            w: lattice.w.normalize() * self.side,
            ..lattice
        };
        for pose in &mut self.robots {
            let p = lattice
                .snap(&pose.position(), SNAP_TOL)
                .ok_or_else(|| bad("robots", "robot is off the triangle lattice by more than 5 mm"))?;
            // exact lattice input is kept bit-for-bit
            if (p - pose.position()).norm() > 1e-9 {
                pose.x = p.x;
                pose.y = p.y;
            }
        }
        if !self.formation().is_connected() {
            return Err(bad("robots", "every robot must be a vertex of a formed triangle"));
        }
        Ok(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| de_error(text, &e))?;
        file.into_scenario().validate().map_err(|e| match e {
            ScenarioError::Invalid { key, message, .. } => ScenarioError::Invalid {
                line: key_line(text, &key),
                key,
                message,
            },
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ScenarioFile::from_scenario(self)).expect("scenario serializes")
    }
}

/// 1-based line where `key` is assigned or its table opens.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        let assigned = t
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='));
        let table = t.starts_with(&format!("[{key}]")) || t.starts_with(&format!("[[{key}]]"));
        assigned || table
    })
    .map(|i| i + 1)
}

fn de_error(text: &str, e: &toml::de::Error) -> ScenarioError {
    let message = e.message().trim().to_string();
    let Some(span) = e.span() else {
        return ScenarioError::Parse { message };
    };
    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
    let line_text = text.lines().nth(line - 1).unwrap_or("").trim();
    let key = if let Some(k) = message
        .strip_prefix("unknown field `")
        .and_then(|r| r.split('`').next())
    {
        Some(k.to_string())
    } else if let Some((k, _)) = line_text.split_once('=') {
        Some(k.trim().to_string())
    } else if line_text.starts_with('[') {
        Some(line_text.trim_matches(|c| c == '[' || c == ']').to_string())
    } else {
        message
            .strip_prefix("missing field `")
            .and_then(|r| r.split('`').next())
            .map(str::to_string)
    };
    match key {
        Some(key) => ScenarioError::Invalid {
            key,
            line: Some(line),
            message,
        },
        None => ScenarioError::Parse {
            message: format!("line {line}: {message}"),
        },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleFile {
    center: [f64; 2],
    radius: f64,
    #[serde(default = "default_margin")]
    safety_margin: f64,
}

fn default_margin() -> f64 {
    DEFAULT_SAFETY_MARGIN
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega_wheel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    record_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    side: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d_t: Option<f64>,
    /// x, y, heading per robot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    robots: Option<Vec<[f64; 3]>>,
    waypoints: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    destination: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    obstacles: Vec<ObstacleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<CameraConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseModels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maneuver: Option<ManeuverConfig>,
}

impl ScenarioFile {
    fn into_scenario(self) -> Scenario {
        let pt = |p: [f64; 2]| Point::new(p[0], p[1]);
        let mut s = Scenario::new(
            &self.name.unwrap_or_default(),
            self.mode.unwrap_or(Mode::Macro),
            self.waypoints.into_iter().map(pt).collect(),
        );
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { s.$f = v; } )* };
        }
        set!(runs, master_seed, omega_wheel, dt, record_interval, max_steps, side, d_t, noise, maneuver);
        if let Some(r) = self.robots {
            s.robots = r.into_iter().map(|p| Pose2D::new(p[0], p[1], p[2])).collect();
        } else {
            s = s.with_robot_count(4);
        }
        s.destination = self.destination.map(pt);
        s.obstacles = self
            .obstacles
            .into_iter()
            .map(|o| Obstacle {
                center: pt(o.center),
                radius: o.radius,
                safety_margin: o.safety_margin,
            })
            .collect();
        s.camera = self.camera.unwrap_or_else(|| CameraConfig::for_disparity(s.d_t));
        s
    }

    fn from_scenario(s: &Scenario) -> Self {
        let arr = |p: &Point| [p.x, p.y];
        Self {
            name: Some(s.name.clone()),
            mode: Some(s.mode),
            runs: Some(s.runs),
            master_seed: Some(s.master_seed),
            omega_wheel: Some(s.omega_wheel),
            dt: Some(s.dt),
            record_interval: Some(s.record_interval),
            max_steps: Some(s.max_steps),
            side: Some(s.side),
            d_t: Some(s.d_t),
            robots: Some(s.robots.iter().map(|p| [p.x, p.y, p.heading]).collect()),
            waypoints: s.waypoints.iter().map(arr).collect(),
            destination: s.destination.as_ref().map(arr),
            obstacles: s
                .obstacles
                .iter()
                .map(|o| ObstacleFile {
                    center: arr(&o.center),
                    radius: o.radius,
                    safety_margin: o.safety_margin,
                })
                .collect(),
            camera: Some(s.camera),
            noise: Some(s.noise),
            maneuver: Some(s.maneuver),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "waypoints = [[0.0, 0.0], [6.0, 0.0]]\n";

    #[test]
    fn minimal_file_takes_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.mode, Mode::Macro);
        assert_eq!(s.runs, 100);
        assert_eq!(s.robots.len(), 4);
        assert_eq!(s.camera, CameraConfig::default());
        assert_eq!(s.noise, NoiseModels::default());
        assert!(s.noise.quantize);
        assert_eq!(s.route(), vec![Point::new(0.0, 0.0), Point::new(6.0, 0.0)]);
    }

    #[test]
    fn rounded_start_positions_snap_to_the_lattice() {
        let text = format!(
            "robots = [[0.75, 0.0, 0.0], [0.0, 1.30, 0.0], [2.25, 0.0, 0.0], [1.5, 1.30, 0.0]]\n{MINIMAL}"
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        let h = 1.5 * 3f64.sqrt() / 2.0;
        assert!((s.robots[1].y - h).abs() < 1e-12);
        assert!((s.robots[3].y - h).abs() < 1e-12);
        assert_eq!(s.robots[0].position(), Point::new(0.75, 0.0));
    }

    #[test]
    fn far_off_lattice_robot_is_rejected() {
        let text = format!(
            "robots = [[0.75, 0.0, 0.0], [0.0, 1.32, 0.0], [2.25, 0.0, 0.0], [1.5, 1.30, 0.0]]\n{MINIMAL}"
        );
        let e = Scenario::from_toml_str(&text).unwrap_err();
        assert_eq!(e.key(), Some("robots"));
    }

    #[test]
    fn zero_runs_names_the_key_and_line() {
        let text = format!("name = \"x\"\nruns = 0\n{MINIMAL}");
        let e = Scenario::from_toml_str(&text).unwrap_err();
        assert_eq!(e.key(), Some("runs"));
        assert!(matches!(e, ScenarioError::Invalid { line: Some(2), .. }));
        assert!(e.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = format!("{MINIMAL}speed = 3.0\n");
        let e = Scenario::from_toml_str(&text).unwrap_err();
        assert_eq!(e.key(), Some("speed"));
        assert!(matches!(e, ScenarioError::Invalid { line: Some(2), .. }));

        let nested = format!("{MINIMAL}[noise.wss]\nnoise_sd = 0.1\n");
        let e = Scenario::from_toml_str(&nested).unwrap_err();
        assert_eq!(e.key(), Some("noise_sd"));
        assert!(matches!(e, ScenarioError::Invalid { line: Some(3), .. }));
    }

    #[test]
    fn wrong_type_names_the_key() {
        let e = Scenario::from_toml_str(&format!("runs = \"many\"\n{MINIMAL}")).unwrap_err();
        assert_eq!(e.key(), Some("runs"));
    }

    #[test]
    fn missing_waypoints_is_rejected() {
        let e = Scenario::from_toml_str("runs = 3\n").unwrap_err();
        assert!(e.to_string().contains("waypoints"), "{e}");
        let e = Scenario::from_toml_str("waypoints = []\n").unwrap_err();
        assert_eq!(e.key(), Some("waypoints"));
    }

    #[test]
    fn partial_tables_override_single_fields() {
        let text = format!("{MINIMAL}[noise]\nquantize = false\n[noise.wss]\nnoise_std = 0.0\n[camera]\nmax_range = 8.0\n");
        let s = Scenario::from_toml_str(&text).unwrap();
        assert!(!s.noise.quantize);
        assert_eq!(s.noise.wss.noise_std, 0.0);
        assert_eq!(s.noise.wss.scale_factor, 0.16);
        assert_eq!(s.camera.max_range, 8.0);
        assert_eq!(s.camera.focal_px, CameraConfig::default().focal_px);
    }

    #[test]
    fn destination_extends_the_route() {
        let s = Scenario::from_toml_str(&format!("destination = [6.0, 3.0]\n{MINIMAL}")).unwrap();
        assert_eq!(s.route().len(), 3);
        let same = Scenario::from_toml_str(&format!("destination = [6.0, 0.0]\n{MINIMAL}")).unwrap();
        assert_eq!(same.route().len(), 2);
    }

    proptest! {
        #[test]
        fn round_trip(runs in 1usize..500, seed in 0u64..u64::MAX, omega in 0.1..10.0f64,
                      wps in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..6),
                      obs in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, 0.0..1.0f64), 0..3),
                      mode in 0usize..3, q in any::<bool>()) {
            let mut s = Scenario::new("rt", [Mode::Micro, Mode::Macro, Mode::DeadReckoning][mode],
                                      wps.iter().map(|&(x, y)| Point::new(x, y)).collect());
            s.runs = runs;
            s.master_seed = seed;
            s.omega_wheel = omega;
            s.noise.quantize = q;
            s.obstacles = obs.iter().map(|&(x, y, r)| Obstacle::new(Point::new(x, y), r)).collect();
            let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}

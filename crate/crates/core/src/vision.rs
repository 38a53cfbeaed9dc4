//! Synthetic monocular camera. Beacon markers are single points; the camera
//! reports only their horizontal pixel column.

use serde::{Deserialize, Serialize};

use crate::error::VisionError;
use crate::geometry::{Point, Pose2D, Vector};

/// Default target disparity, pixels.
pub const DEFAULT_TARGET_DISPARITY: f64 = 280.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mount {
    Front,
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub focal_px: f64,
    pub image_width: f64,
    pub principal_u: f64,
    pub mount: Mount,
    pub max_range: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self::for_disparity(DEFAULT_TARGET_DISPARITY)
    }
}

impl CameraConfig {
    /// Rear camera whose focal length puts the side beacons exactly `d_t`
    /// pixels off-center when sitting on a formed vertex (they are 30 degrees
    /// off-axis there).
    pub fn for_disparity(d_t: f64) -> Self {
        Self {
            focal_px: d_t / (std::f64::consts::PI / 6.0).tan(),
            image_width: 640.0,
            principal_u: 320.0,
            mount: Mount::Rear,
            max_range: 5.0,
        }
    }

    pub fn horizontal_fov(&self) -> f64 {
        2.0 * (self.image_width / (2.0 * self.focal_px)).atan()
    }

    pub fn with_mount(mut self, mount: Mount) -> Self {
        self.mount = mount;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.focal_px > 0.0) {
            return Err("focal_px must be positive".into());
        }
        if !(self.principal_u > 0.0 && self.principal_u < self.image_width) {
            return Err("principal_u must lie strictly inside the image".into());
        }
        if !(self.max_range > 0.0) {
            return Err("max_range must be positive".into());
        }
        // both side beacons sit 30 degrees off-axis at a formed vertex
        let off = self.focal_px * (std::f64::consts::PI / 6.0).tan();
        if self.principal_u - off < 0.0 || self.principal_u + off >= self.image_width {
            return Err("field of view does not admit both side beacons at a vertex".into());
        }
        Ok(())
    }

    /// Optical axis direction for a robot with the given heading.
    fn axis(&self, heading: f64) -> f64 {
        match self.mount {
            Mount::Front => heading,
            Mount::Rear => heading + std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelObservation {
    pub robot_id: usize,
    /// Column; integral when quantization is on.
    pub u: f64,
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralDistances {
    pub d_m1: f64,
    pub d_m2: f64,
    pub d_t: f64,
}

/// Project a marker at `target` into the camera of a robot at `camera_pose`.
///
/// Lateral offsets are measured toward the camera's left, so a marker left of
/// the optical axis lands at a column above `principal_u`.
pub fn project_marker(
    camera_pose: &Pose2D,
    config: &CameraConfig,
    target: &Point,
    robot_id: usize,
    quantize: bool,
) -> PixelObservation {
    let phi = config.axis(camera_pose.heading);
    let forward = Vector::new(phi.cos(), phi.sin());
    let left = Vector::new(-phi.sin(), phi.cos());
    let rel = target - camera_pose.position();
    let depth = rel.dot(&forward);
    let lateral = rel.dot(&left);
    if !(depth > 0.0) || depth > config.max_range {
        return PixelObservation {
            robot_id,
            u: f64::NAN,
            visible: false,
        };
    }
    let raw = config.principal_u + config.focal_px * lateral / depth;
    let u = if quantize { raw.round() } else { raw };
    PixelObservation {
        robot_id,
        u,
        visible: u >= 0.0 && u < config.image_width,
    }
}

pub fn lateral_distances(
    obs_center: &PixelObservation,
    obs_left: &PixelObservation,
    obs_right: &PixelObservation,
    d_t: f64,
) -> Result<LateralDistances, VisionError> {
    for o in [obs_center, obs_left, obs_right] {
        if !o.visible {
            return Err(VisionError::NotVisible(o.robot_id));
        }
    }
    Ok(LateralDistances {
        d_m1: (obs_left.u - obs_center.u).abs(),
        d_m2: (obs_right.u - obs_center.u).abs(),
        d_t,
    })
}

/// What the mover's camera sees of its three beacons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeaconView {
    /// The beacon at the vertex opposite the base.
    pub center: PixelObservation,
    /// Base beacon with the smaller column.
    pub left: PixelObservation,
    /// Base beacon with the larger column.
    pub right: PixelObservation,
}

impl BeaconView {
    pub fn all_visible(&self) -> bool {
        self.center.visible && self.left.visible && self.right.visible
    }

    pub fn distances(&self, d_t: f64) -> Result<LateralDistances, VisionError> {
        lateral_distances(&self.center, &self.left, &self.right, d_t)
    }
}

/// Observe the two base beacons and the opposite beacon, labelling the base
/// pair left/right by image column.
pub fn observe_beacons(
    camera_pose: &Pose2D,
    config: &CameraConfig,
    base: [(usize, Point); 2],
    opposite: (usize, Point),
    quantize: bool,
) -> BeaconView {
    let center = project_marker(camera_pose, config, &opposite.1, opposite.0, quantize);
    let a = project_marker(camera_pose, config, &base[0].1, base[0].0, quantize);
    let b = project_marker(camera_pose, config, &base[1].1, base[1].0, quantize);
    let (left, right) = if !a.visible || !b.visible || a.u <= b.u {
        (a, b)
    } else {
        (b, a)
    };
    BeaconView {
        center,
        left,
        right,
    }
}

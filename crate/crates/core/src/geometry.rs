//! Planar geometry: poses, equilateral triangles, the vertex lattice and
//! the lateral/longitudinal frame attached to a triangle base.

use std::f64::consts::PI;

use nalgebra::{Point2, Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

/// Exact-construction tolerance on side lengths, meters.
pub const TOL_GEOM: f64 = 1e-9;
/// Tolerance used when checking triangles formed by real (erroneous) robots, meters.
pub const TOL_FORM: f64 = 0.1;
/// Rounded scenario coordinates are snapped onto the lattice within this distance, meters.
pub const SNAP_TOL: f64 = 0.005;

/// Height of an equilateral triangle per unit side.
pub const APEX_RATIO: f64 = 0.866_025_403_784_438_6;

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Planar robot pose. Heading is CCW from +x and kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn direction(&self) -> Vector {
        Vector::new(self.heading.cos(), self.heading.sin())
    }
}

/// Which half-plane of the directed line a -> b the apex lies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    /// Side of the directed line a -> b on which `p` lies (Left on the line).
    pub fn of(a: &Point, b: &Point, p: &Point) -> Side {
        let d = b - a;
        let r = p - a;
        if d.perp(&r) >= 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Apex of the equilateral triangle on base a-b.
pub fn third_vertex(a: &Point, b: &Point, side: Side) -> Result<Point, GeometryError> {
    let base = b - a;
    let len = base.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(GeometryError::DegenerateBase);
    }
    let normal = Vector::new(-base.y, base.x) / len;
    Ok(Point::from((a.coords + b.coords) * 0.5) + normal * (side.sign() * len * APEX_RATIO))
}

/// Apex on base a-b lying on the far side from `opposite` (the reflection of
/// `opposite` through the base midpoint when the triangle is equilateral).
pub fn apex_away_from(a: &Point, b: &Point, opposite: &Point) -> Result<Point, GeometryError> {
    third_vertex(a, b, Side::of(a, b, opposite).opposite())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub v1: Point,
    pub v2: Point,
    pub v3: Point,
    pub side: f64,
}

impl Triangle {
    /// Exact equilateral triangle on base v1-v2.
    pub fn on_base(v1: Point, v2: Point, side: Side) -> Result<Self, GeometryError> {
        let v3 = third_vertex(&v1, &v2, side)?;
        Ok(Self {
            v1,
            v2,
            v3,
            side: (v2 - v1).norm(),
        })
    }

    pub fn side_lengths(&self) -> [f64; 3] {
        [
            (self.v2 - self.v1).norm(),
            (self.v3 - self.v2).norm(),
            (self.v1 - self.v3).norm(),
        ]
    }

    /// All three sides within `tol` of `self.side`.
    pub fn is_equilateral(&self, tol: f64) -> bool {
        self.side_lengths()
            .iter()
            .all(|l| (l - self.side).abs() <= tol)
    }

    pub fn vertices(&self) -> [Point; 3] {
        [self.v1, self.v2, self.v3]
    }

    /// Midpoints of the three edges, v1v2, v2v3, v3v1.
    pub fn midpoints(&self) -> [Point; 3] {
        let m = |a: &Point, b: &Point| Point::from((a.coords + b.coords) * 0.5);
        [m(&self.v1, &self.v2), m(&self.v2, &self.v3), m(&self.v3, &self.v1)]
    }
}

/// Frame attached to a triangle base: lateral along the base, longitudinal
/// perpendicular to it, pointing at the new vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleFrame {
    pub origin: Point,
    pub lateral_axis: Vector,
    pub longitudinal_axis: Vector,
}

impl TriangleFrame {
    /// Frame for base a-b with the longitudinal axis toward `toward`.
    pub fn from_base(a: &Point, b: &Point, toward: &Point) -> Result<Self, GeometryError> {
        let base = b - a;
        let len = base.norm();
        if !(len > 0.0) {
            return Err(GeometryError::DegenerateBase);
        }
        let lateral = base / len;
        let origin = Point::from((a.coords + b.coords) * 0.5);
        let mut longitudinal = Vector::new(-lateral.y, lateral.x);
        if longitudinal.dot(&(toward - origin)) < 0.0 {
            longitudinal = -longitudinal;
        }
        Ok(Self {
            origin,
            lateral_axis: lateral,
            longitudinal_axis: longitudinal,
        })
    }

    pub fn to_frame(&self, p: &Point) -> (f64, f64) {
        let r = p - self.origin;
        (r.dot(&self.lateral_axis), r.dot(&self.longitudinal_axis))
    }

    pub fn from_frame(&self, lateral: f64, longitudinal: f64) -> Point {
        self.origin + self.lateral_axis * lateral + self.longitudinal_axis * longitudinal
    }

    /// Express a displacement (not a point) in frame axes.
    pub fn vector_to_frame(&self, v: &Vector) -> (f64, f64) {
        (v.dot(&self.lateral_axis), v.dot(&self.longitudinal_axis))
    }

    pub fn vector_from_frame(&self, lateral: f64, longitudinal: f64) -> Vector {
        self.lateral_axis * lateral + self.longitudinal_axis * longitudinal
    }
}

pub fn to_triangle_frame(frame: &TriangleFrame, p: &Point) -> (f64, f64) {
    frame.to_frame(p)
}

pub fn from_triangle_frame(frame: &TriangleFrame, lateral: f64, longitudinal: f64) -> Point {
    frame.from_frame(lateral, longitudinal)
}

/// Infinite triangular lattice spanned by two side-length vectors 60 degrees apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub origin: Point,
    pub u: Vector,
    pub w: Vector,
}

impl Lattice {
    /// Lattice whose first edge is a -> b (w is u rotated +60 degrees).
    pub fn from_edge(a: Point, b: Point) -> Result<Self, GeometryError> {
        let u = b - a;
        if !(u.norm() > 0.0) {
            return Err(GeometryError::DegenerateBase);
        }
        let w = Rotation2::new(PI / 3.0) * u;
        Ok(Self { origin: a, u, w })
    }

    pub fn side(&self) -> f64 {
        self.u.norm()
    }

    pub fn point(&self, i: i64, j: i64) -> Point {
        self.origin + self.u * i as f64 + self.w * j as f64
    }

    /// Fractional lattice coordinates of `p`.
    fn coords(&self, p: &Point) -> (f64, f64) {
        let r = p - self.origin;
        let det = self.u.perp(&self.w);
        (r.perp(&self.w) / det, self.u.perp(&r) / det)
    }

    /// Nearest lattice vertex and its integer indices.
    pub fn nearest(&self, p: &Point) -> (Point, (i64, i64)) {
        let (a, b) = self.coords(p);
        let (a0, b0) = (a.floor() as i64, b.floor() as i64);
        let mut best = (self.point(a0, b0), (a0, b0));
        let mut best_d = f64::INFINITY;
        for di in -1..=2 {
            for dj in -1..=2 {
                let idx = (a0 + di, b0 + dj);
                let q = self.point(idx.0, idx.1);
                let d = (q - p).norm();
                if d < best_d {
                    best_d = d;
                    best = (q, idx);
                }
            }
        }
        best
    }

    /// Snap `p` to the lattice when it lies within `tol` of a vertex.
    pub fn snap(&self, p: &Point, tol: f64) -> Option<Point> {
        let (q, _) = self.nearest(p);
        ((q - p).norm() <= tol).then_some(q)
    }
}

/// Formation movement direction of the basic steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    /// Unit vector in a frame where "right" is the lateral axis and "up" the
    /// longitudinal one.
    fn unit_in(self, frame: &TriangleFrame) -> Vector {
        match self {
            Direction::Left => -frame.lateral_axis,
            Direction::Right => frame.lateral_axis,
            Direction::Up => frame.longitudinal_axis,
            Direction::Down => -frame.longitudinal_axis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeStep {
    pub moving_robot: usize,
    pub direction: Direction,
}

/// Positions of all robots whose pairwise distance to each other equals `side`.
fn equilateral_triples(positions: &[Point], side: f64, tol: f64) -> Vec<[usize; 3]> {
    let n = positions.len();
    let edge = |i: usize, j: usize| ((positions[i] - positions[j]).norm() - side).abs() <= tol;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !edge(i, j) {
                continue;
            }
            for k in j + 1..n {
                if edge(j, k) && edge(i, k) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Ideal vertices produced by a sequence of basic formation steps starting
/// from the rhombus (`start_triangle` plus `fourth`).
///
/// Directions are read in the start triangle's frame: right runs from `v1`
/// to `v2`, up points at `v3`. For each step the mover's remaining three
/// robots must form a triangle; the mover goes to the apex on one of its
/// edges, the one lying furthest along the requested direction.
pub fn ideal_vertex_lattice(
    start_triangle: &Triangle,
    fourth: Point,
    steps: &[LatticeStep],
) -> Result<Vec<Point>, GeometryError> {
    let side = start_triangle.side;
    let tol = side * 1e-6;
    let frame = TriangleFrame::from_base(&start_triangle.v1, &start_triangle.v2, &start_triangle.v3)?;
    let mut positions = [start_triangle.v1, start_triangle.v2, start_triangle.v3, fourth];
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let mover = step.moving_robot;
        if mover >= positions.len() {
            return Err(GeometryError::UnknownRobot(mover));
        }
        let others: Vec<usize> = (0..positions.len()).filter(|&i| i != mover).collect();
        let rest: Vec<Point> = others.iter().map(|&i| positions[i]).collect();
        let tri = equilateral_triples(&rest, side, tol)
            .into_iter()
            .next()
            .ok_or(GeometryError::Unreachable {
                robot: mover,
                direction: step.direction,
            })?;
        let here = positions[mover];
        let dir = step.direction.unit_in(&frame);
        let mut best: Option<(f64, Point)> = None;
        for e in 0..3 {
            let a = rest[tri[e]];
            let b = rest[tri[(e + 1) % 3]];
            let c = rest[tri[(e + 2) % 3]];
            let apex = apex_away_from(&a, &b, &c)?;
            if (apex - here).norm() <= tol {
                continue;
            }
            let gain = (apex - here).dot(&dir);
            if gain > tol && best.is_none_or(|(g, _)| gain > g + tol) {
                best = Some((gain, apex));
            }
        }
        let (_, apex) = best.ok_or(GeometryError::Unreachable {
            robot: mover,
            direction: step.direction,
        })?;
        positions[mover] = apex;
        out.push(apex);
    }
    Ok(out)
}

//! Formation-level planning: which robot moves, where it goes and the path
//! it takes through the formation.

use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::geometry::{apex_away_from, Point, APEX_RATIO, TOL_FORM};

/// Default safety margin around an obstacle, robot half-width included.
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.25;

/// Two robots closer than this fraction of the side share a vertex.
const OCCUPIED_RATIO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Point,
    pub radius: f64,
    pub safety_margin: f64,
}

impl Obstacle {
    pub fn new(center: Point, radius: f64) -> Self {
        Self {
            center,
            radius,
            safety_margin: DEFAULT_SAFETY_MARGIN,
        }
    }

    pub fn zone_radius(&self) -> f64 {
        self.radius + self.safety_margin
    }

    pub fn contains(&self, p: &Point) -> bool {
        (p - self.center).norm() < self.zone_radius()
    }

    /// Whether the segment a-b passes through the safety zone.
    pub fn blocks_segment(&self, a: &Point, b: &Point) -> bool {
        segment_distance(&self.center, a, b) < self.zone_radius()
    }

    pub fn blocks_path(&self, path: &[Point]) -> bool {
        match path {
            [] => false,
            [p] => self.contains(p),
            _ => path.windows(2).any(|w| self.blocks_segment(&w[0], &w[1])),
        }
    }
}

/// Distance from `p` to the closed segment a-b.
pub fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Robot positions and the triangle side they are meant to keep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    pub positions: Vec<Point>,
    pub side: f64,
}

impl Formation {
    pub fn new(positions: Vec<Point>, side: f64) -> Self {
        Self { positions, side }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn is_edge(&self, i: usize, j: usize) -> bool {
        ((self.positions[i] - self.positions[j]).norm() - self.side).abs() <= TOL_FORM
    }

    fn is_triangle(&self, i: usize, j: usize, k: usize) -> bool {
        self.is_edge(i, j) && self.is_edge(j, k) && self.is_edge(i, k)
    }

    /// Every robot is a vertex of at least one formed triangle.
    pub fn is_connected(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            (0..n).any(|j| {
                j != i && self.is_edge(i, j) && (j + 1..n).any(|k| k != i && self.is_triangle(i, j, k))
            })
        })
    }

    pub fn occupied(&self, p: &Point) -> bool {
        self.positions
            .iter()
            .any(|q| (p - q).norm() < OCCUPIED_RATIO * self.side)
    }
}

/// `n` robots in a zigzag strip along +x, half a side apart, alternating
/// between the top row (starting at the origin) and the bottom row. Ids are
/// swapped in pairs along the strip so that four robots give the standard
/// rhombus.
pub fn strip_formation(n: usize, side: f64) -> Vec<Point> {
    let h = side * APEX_RATIO;
    (0..n)
        .map(|i| {
            let slot = if (i ^ 1) < n { i ^ 1 } else { i };
            let y = if slot % 2 == 0 { h } else { 0.0 };
            Point::new(slot as f64 * side / 2.0, y)
        })
        .collect()
}

/// A vertex the mover could complete, with the triangle that guides it there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub vertex: Point,
    /// Beacons at the ends of the new triangle's base, in ascending id order.
    pub base: [usize; 2],
    /// Beacon across the base from the new vertex.
    pub opposite: usize,
}

impl Candidate {
    pub fn beacon_positions(&self, formation: &Formation) -> [Point; 3] {
        [
            formation.positions[self.base[0]],
            formation.positions[self.base[1]],
            formation.positions[self.opposite],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub moving_robot: usize,
    pub target_vertex: Point,
    pub inner_path: Vec<Point>,
    pub base: [usize; 2],
    pub opposite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanOutcome {
    Step(PlanStep),
    /// The vertex nearest the destination is already occupied.
    Arrived,
}

fn by_distance_desc(positions: &[Point], destination: &Point) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..positions.len()).collect();
    // stable sort keeps the lowest id first among ties
    ids.sort_by(|&a, &b| {
        let da = (positions[a] - destination).norm();
        let db = (positions[b] - destination).norm();
        db.total_cmp(&da)
    });
    ids
}

/// The robot farthest from the destination, lowest id on ties.
pub fn select_moving_robot(positions: &[Point], destination: &Point) -> Result<usize, PlanError> {
    if positions.len() < 4 {
        return Err(PlanError::TooFewRobots(positions.len()));
    }
    Ok(by_distance_desc(positions, destination)[0])
}

/// Free apexes of equilateral triangles built on edges of the remaining
/// robots, each on the far side of a formed triangle.
pub fn candidate_vertices(formation: &Formation, moving_robot: usize) -> Vec<Candidate> {
    let n = formation.len();
    let others: Vec<usize> = (0..n).filter(|&i| i != moving_robot).collect();
    let mut out: Vec<Candidate> = Vec::new();
    for (ai, &a) in others.iter().enumerate() {
        for &b in &others[ai + 1..] {
            if !formation.is_edge(a, b) {
                continue;
            }
            for &c in &others {
                if c == a || c == b || !formation.is_triangle(a, b, c) {
                    continue;
                }
                let pa = formation.positions[a];
                let pb = formation.positions[b];
                let Ok(vertex) = apex_away_from(&pa, &pb, &formation.positions[c]) else {
                    continue;
                };
                if formation.occupied(&vertex) {
                    continue;
                }
                let dup = out
                    .iter()
                    .any(|k| (k.vertex - vertex).norm() < OCCUPIED_RATIO * formation.side);
                if !dup {
                    out.push(Candidate {
                        vertex,
                        base: [a, b],
                        opposite: c,
                    });
                }
            }
        }
    }
    out
}

/// Path through the beacon triangle: the edge midpoint nearest the mover,
/// the edge midpoint nearest the target, then the target.
pub fn inner_path(beacons: &[Point; 3], mover_pos: &Point, target_vertex: &Point) -> Vec<Point> {
    let mids = [
        nalgebra::center(&beacons[0], &beacons[1]),
        nalgebra::center(&beacons[1], &beacons[2]),
        nalgebra::center(&beacons[2], &beacons[0]),
    ];
    let nearest = |p: &Point| {
        *mids
            .iter()
            .min_by(|a, b| (*a - p).norm().total_cmp(&(*b - p).norm()))
            .expect("three midpoints")
    };
    let mut path = vec![nearest(mover_pos), nearest(target_vertex), *target_vertex];
    path.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    path
}

/// Closest candidate to the destination whose path clears every safety zone.
/// Returns the candidate and its inner path, or `Blocked` when none does.
pub fn select_target_vertex(
    formation: &Formation,
    candidates: &[Candidate],
    destination: &Point,
    obstacles: &[Obstacle],
    mover_pos: &Point,
) -> Result<(Candidate, Vec<Point>), PlanError> {
    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_by(|a, b| {
        (a.vertex - destination)
            .norm()
            .total_cmp(&(b.vertex - destination).norm())
    });
    for cand in order {
        let path = inner_path(&cand.beacon_positions(formation), mover_pos, &cand.vertex);
        let mut full = Vec::with_capacity(path.len() + 1);
        full.push(*mover_pos);
        full.extend_from_slice(&path);
        if obstacles.iter().all(|o| !o.blocks_path(&full)) {
            return Ok((*cand, path));
        }
    }
    Err(PlanError::Blocked)
}

/// One formation step toward the destination.
///
/// Movers are tried farthest first. Each keeps only candidates that leave
/// every robot in a formed triangle. The formation has arrived when no
/// candidate of any robot is closer to the destination than the nearest robot.
pub fn plan_n_robot_step(
    formation: &Formation,
    destination: &Point,
    obstacles: &[Obstacle],
) -> Result<PlanOutcome, PlanError> {
    let n = formation.len();
    if n < 4 {
        return Err(PlanError::TooFewRobots(n));
    }
    let nearest_robot = formation
        .positions
        .iter()
        .map(|p| (p - destination).norm())
        .fold(f64::INFINITY, f64::min);

    let mut per_mover = Vec::with_capacity(n);
    let mut any_progress = false;
    for mover in by_distance_desc(&formation.positions, destination) {
        let cands: Vec<Candidate> = candidate_vertices(formation, mover)
            .into_iter()
            .filter(|c| {
                let mut next = formation.clone();
                next.positions[mover] = c.vertex;
                next.is_connected()
            })
            .collect();
        any_progress |= cands
            .iter()
            .any(|c| (c.vertex - destination).norm() < nearest_robot - 1e-9);
        per_mover.push((mover, cands));
    }
    if !any_progress {
        return Ok(PlanOutcome::Arrived);
    }

    for (mover, cands) in per_mover {
        if cands.is_empty() {
            continue;
        }
        let mover_pos = formation.positions[mover];
        if let Ok((cand, path)) = select_target_vertex(formation, &cands, destination, obstacles, &mover_pos) {
            return Ok(PlanOutcome::Step(PlanStep {
                moving_robot: mover,
                target_vertex: cand.vertex,
                inner_path: path,
                base: cand.base,
                opposite: cand.opposite,
            }));
        }
    }
    Err(PlanError::Blocked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{third_vertex, Side};
    use proptest::prelude::*;

    const L: f64 = 1.5;

    fn h() -> f64 {
        L * 3f64.sqrt() / 2.0
    }

    fn rhombus() -> Formation {
        Formation::new(
            vec![
                Point::new(0.75, 0.0),
                Point::new(0.0, h()),
                Point::new(2.25, 0.0),
                Point::new(1.5, h()),
            ],
            L,
        )
    }

    fn close(a: &Point, b: &Point) -> bool {
        (a - b).norm() < 1e-9
    }

    #[test]
    fn four_robot_strip_is_the_rhombus() {
        let s = strip_formation(4, L);
        for (a, b) in s.iter().zip(rhombus().positions.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        for n in 4..10 {
            assert!(Formation::new(strip_formation(n, L), L).is_connected());
        }
    }

    #[test]
    fn farthest_robot_moves() {
        let f = rhombus();
        assert_eq!(select_moving_robot(&f.positions, &Point::new(10.0, 1.0)).unwrap(), 1);
    }

    #[test]
    fn equidistant_robots_pick_lowest_id() {
        let pts: Vec<Point> = (0..4)
            .map(|k| {
                let a = k as f64 * std::f64::consts::FRAC_PI_2 + 0.3;
                Point::new(a.cos(), a.sin())
            })
            .collect();
        assert_eq!(select_moving_robot(&pts, &Point::origin()).unwrap(), 0);
    }

    #[test]
    fn three_robots_are_rejected() {
        let pts = vec![Point::origin(); 3];
        assert_eq!(select_moving_robot(&pts, &Point::origin()), Err(PlanError::TooFewRobots(3)));
    }

    #[test]
    fn rhombus_candidates_match_brute_force() {
        let f = rhombus();
        let cands = candidate_vertices(&f, 1);
        // every third vertex on every remaining pair, minus occupied spots
        let mut oracle = Vec::new();
        for (a, b) in [(0, 2), (0, 3), (2, 3)] {
            for side in [Side::Left, Side::Right] {
                let p = third_vertex(&f.positions[a], &f.positions[b], side).unwrap();
                if f.positions.iter().all(|q| (p - q).norm() > 0.1) {
                    oracle.push(p);
                }
            }
        }
        assert_eq!(cands.len(), oracle.len());
        for p in &oracle {
            assert!(cands.iter().any(|c| close(&c.vertex, p)), "missing {p}");
        }
        // the rightward step mirrors the mover across the far edge
        assert!(cands.iter().any(|c| close(&c.vertex, &Point::new(3.0, h()))));
    }

    #[test]
    fn lone_edge_gives_single_candidate() {
        let f = Formation::new(
            vec![
                Point::new(-5.0, 0.0),
                Point::new(0.0, 0.0),
                Point::new(L, 0.0),
                Point::new(L / 2.0, h()),
            ],
            L,
        );
        let cands = candidate_vertices(&f, 0);
        assert_eq!(cands.len(), 3);
        let g = Formation::new(
            vec![Point::new(-5.0, 0.0), Point::new(0.0, 0.0), Point::new(L, 0.0), Point::new(9.0, 9.0)],
            L,
        );
        assert!(candidate_vertices(&g, 0).is_empty());
    }

    /// The mover leaves the left corner; b lies through the right edge of the
    /// beacon triangle and c below its base.
    fn blocked_vertex_setup() -> (Formation, Point, Point, Point) {
        let f = rhombus();
        let b = Point::new(3.0, h());
        let c = Point::new(1.5, -h());
        let dest = Point::new(8.0, -1.0);
        (f, b, c, dest)
    }

    #[test]
    fn blocked_nearest_vertex_falls_back_to_next() {
        let (f, b, c, dest) = blocked_vertex_setup();
        assert!((b - dest).norm() < (c - dest).norm());
        let cands = candidate_vertices(&f, 1);
        let (free, _) = select_target_vertex(&f, &cands, &dest, &[], &f.positions[1]).unwrap();
        assert!(close(&free.vertex, &b));

        let obstacle = Obstacle::new(Point::new(2.7, 1.0), 0.1);
        let (pick, path) = select_target_vertex(&f, &cands, &dest, &[obstacle], &f.positions[1]).unwrap();
        assert!(close(&pick.vertex, &c));
        let beacons = [f.positions[0], f.positions[2], f.positions[3]];
        let point1 = nalgebra::center(&beacons[0], &beacons[2]);
        let point3 = nalgebra::center(&beacons[0], &beacons[1]);
        assert_eq!(path.len(), 3);
        assert!(close(&path[0], &point1));
        assert!(close(&path[1], &point3));
        assert!(close(&path[2], &c));
    }

    #[test]
    fn both_vertices_blocked_escalates() {
        let (f, _, _, dest) = blocked_vertex_setup();
        let cands = candidate_vertices(&f, 1);
        let obstacles = [
            Obstacle::new(Point::new(2.7, 1.0), 0.1),
            Obstacle::new(Point::new(1.5, -1.0), 0.1),
        ];
        assert_eq!(
            select_target_vertex(&f, &cands, &dest, &obstacles, &f.positions[1]),
            Err(PlanError::Blocked)
        );
        // another robot takes the step instead
        let PlanOutcome::Step(step) = plan_n_robot_step(&f, &dest, &obstacles).unwrap() else {
            panic!("expected a step");
        };
        assert_ne!(step.moving_robot, 1);
    }

    #[test]
    fn mover_on_a_midpoint_gives_two_point_path() {
        let beacons = [Point::new(0.0, 0.0), Point::new(L, 0.0), Point::new(L / 2.0, h())];
        let mid = Point::new(L / 2.0, 0.0);
        let target = Point::new(L / 2.0, -h());
        let path = inner_path(&beacons, &mid, &target);
        assert_eq!(path.len(), 2);
        assert!(close(&path[0], &mid));
        assert!(close(&path[1], &target));
    }

    #[test]
    fn straight_line_pattern_advances_east() {
        let mut f = rhombus();
        let dest = Point::new(40.0, h() / 2.0);
        let start_x: f64 = f.positions.iter().map(|p| p.x).sum();
        let mut prev_x = start_x;
        for _ in 0..6 {
            let PlanOutcome::Step(step) = plan_n_robot_step(&f, &dest, &[]).unwrap() else {
                panic!("arrived too early");
            };
            let vacated = f.positions[step.moving_robot];
            assert!((step.target_vertex - dest).norm() < (vacated - dest).norm());
            f.positions[step.moving_robot] = step.target_vertex;
            let x: f64 = f.positions.iter().map(|p| p.x).sum();
            assert!(x > prev_x);
            prev_x = x;
            assert!(f.is_connected());
            for i in 0..4 {
                for j in i + 1..4 {
                    let d = (f.positions[i] - f.positions[j]).norm();
                    assert!((d - L).abs() < 1e-9 || (d - L * 3f64.sqrt()).abs() < 1e-9);
                }
            }
        }
    }

    /// A strip of `n` robots along +x: alternating bottom and top rows.
    fn strip(n: usize) -> Formation {
        let pts = (0..n)
            .map(|i| Point::new(i as f64 * L / 2.0, if i % 2 == 0 { 0.0 } else { h() }))
            .collect();
        Formation::new(pts, L)
    }

    #[test]
    fn six_robot_strip_leapfrogs_tail_to_head() {
        let mut f = strip(6);
        let dest = Point::new(100.0, 0.0);
        let lattice_x = |f: &Formation| -> Vec<i64> {
            let mut xs: Vec<i64> = f.positions.iter().map(|p| (p.x / (L / 2.0)).round() as i64).collect();
            xs.sort();
            xs
        };
        let before = lattice_x(&f);
        for _ in 0..6 {
            let PlanOutcome::Step(step) = plan_n_robot_step(&f, &dest, &[]).unwrap() else {
                panic!("arrived too early");
            };
            let tail = *lattice_x(&f).first().unwrap();
            let head = *lattice_x(&f).last().unwrap();
            assert_eq!((f.positions[step.moving_robot].x / (L / 2.0)).round() as i64, tail);
            assert_eq!((step.target_vertex.x / (L / 2.0)).round() as i64, head + 1);
            f.positions[step.moving_robot] = step.target_vertex;
        }
        let after = lattice_x(&f);
        // a full cycle of N moves shifts each lattice slot by N half-sides,
        // i.e. the head gains N-3 slots on the robot that trailed it by 3
        let shifted: Vec<i64> = before.iter().map(|x| x + 6).collect();
        assert_eq!(after, shifted);
    }

    #[test]
    fn destination_inside_formation_arrives() {
        let f = rhombus();
        let dest = Point::new(1.2, 0.5);
        assert_eq!(plan_n_robot_step(&f, &dest, &[]).unwrap(), PlanOutcome::Arrived);
    }

    #[test]
    fn plans_are_deterministic() {
        let f = strip(5);
        let dest = Point::new(-7.0, 3.0);
        let obs = [Obstacle::new(Point::new(-1.0, 1.0), 0.2)];
        assert_eq!(plan_n_robot_step(&f, &dest, &obs), plan_n_robot_step(&f, &dest, &obs));
    }

    #[test]
    fn segment_distance_examples() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(2.0, 0.0);
        assert_eq!(segment_distance(&Point::new(1.0, 1.0), &a, &b), 1.0);
        assert_eq!(segment_distance(&Point::new(3.0, 0.0), &a, &b), 1.0);
        assert_eq!(segment_distance(&Point::new(-3.0, 4.0), &a, &b), 5.0);
        assert_eq!(segment_distance(&Point::new(1.0, 1.0), &a, &a), 2f64.sqrt());
    }

    proptest! {
        #[test]
        fn emitted_paths_keep_clear(n in 4usize..9, ox in -20.0..20.0f64, oy in -20.0..20.0f64,
                                    rot in -3.2..3.2f64, dx in -30.0..30.0f64, dy in -30.0..30.0f64,
                                    obs in proptest::collection::vec((-3.0..8.0f64, -3.0..4.0f64, 0.0..0.4f64), 0..4)) {
            let (s, c) = rot.sin_cos();
            let place = |p: &Point| Point::new(ox + c * p.x - s * p.y, oy + s * p.x + c * p.y);
            let base = strip(n);
            let f = Formation::new(base.positions.iter().map(place).collect(), L);
            let obstacles: Vec<Obstacle> = obs.iter().map(|&(x, y, r)| Obstacle::new(place(&Point::new(x, y)), r)).collect();
            let dest = Point::new(dx, dy);
            if let Ok(PlanOutcome::Step(step)) = plan_n_robot_step(&f, &dest, &obstacles) {
                let path = &step.inner_path;
                prop_assert!(close(path.last().unwrap(), &step.target_vertex));
                for w in path.windows(2) {
                    let len = (w[1] - w[0]).norm();
                    let k = (len / 0.01).ceil().max(1.0) as usize;
                    for i in 0..=k {
                        let p = w[0] + (w[1] - w[0]) * (i as f64 / k as f64);
                        for (id, q) in f.positions.iter().enumerate() {
                            if id != step.moving_robot {
                                prop_assert!((p - q).norm() >= 0.25 * L - 1e-9);
                            }
                        }
                        for o in &obstacles {
                            prop_assert!(!o.contains(&p));
                        }
                    }
                }
            }
        }
    }
}

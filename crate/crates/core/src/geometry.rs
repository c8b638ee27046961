//! Planar geometry shared by the simulator, the spectral front end and the
//! predictor: points, polygonal enclosures, candidate rays and the angle
//! bookkeeping between rays and linear virtual arrays.
//!
//! Everything is in meters and radians, double precision.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Near-parallel rejection threshold between a candidate ray and the edge it
/// crosses.
pub const PARALLEL_TOLERANCE_RAD: f64 = PI / 180.0;

/// Intersections closer than this to a polygon vertex are rejected.
pub const VERTEX_TOLERANCE_M: f64 = 1e-3;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({x}, {y}) is not strictly inside the enclosure")]
    OriginOutside { x: f64, y: f64 },
    #[error("ray is within the parallel tolerance of edge {edge}")]
    DegenerateRay { edge: usize },
    #[error("ray passes within {VERTEX_TOLERANCE_M} m of vertex {vertex}")]
    VertexHit { vertex: usize },
    #[error("ray has no intersection on one side of the origin")]
    NoIntersection,
    #[error("input vector is not unit-norm (norm {norm})")]
    NonUnitInput { norm: f64 },
    #[error("points coincide")]
    CoincidentPoints,
    #[error("invalid enclosure: {0}")]
    InvalidEnclosure(String),
}

/// A point (or free vector) in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians from the +x axis.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    /// Angle of the vector from the +x axis, in [0, 2π).
    pub fn angle(self) -> f64 {
        normalize_angle(self.y.atan2(self.x))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Self) -> Self {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Self) -> Self {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Self {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Self {
        Point2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into [0, 2π).
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Smallest absolute difference between two angles, in [0, π].
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    d.min(TAU - d)
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn distance_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// A simple polygon, stored counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Enclosure {
    vertices: Vec<Point2>,
    /// Cumulative arc length at the start of each edge; one extra entry holds
    /// the perimeter.
    cumulative: Vec<f64>,
}

/// One polygon edge, from `start` to `end` in counter-clockwise order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub index: usize,
    pub start: Point2,
    pub end: Point2,
}

impl Edge {
    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn direction(&self) -> Point2 {
        (self.end - self.start) * (1.0 / self.length())
    }

    pub fn point_at(&self, offset: f64) -> Point2 {
        self.start + self.direction() * offset
    }
}

impl Enclosure {
    /// Builds an enclosure, reorienting to counter-clockwise if needed.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() >= 2 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidEnclosure(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidEnclosure(format!("non-finite vertex {v}")));
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err(GeometryError::InvalidEnclosure("zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if a.distance(b) < 1e-9 {
                return Err(GeometryError::InvalidEnclosure(format!("zero-length edge {i}")));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                // Adjacent edges share a vertex by construction.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
                let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return Err(GeometryError::InvalidEnclosure(format!(
                        "edges {i} and {j} intersect"
                    )));
                }
            }
        }
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        for i in 0..n {
            cumulative.push(acc);
            acc += vertices[i].distance(vertices[(i + 1) % n]);
        }
        cumulative.push(acc);
        Ok(Self { vertices, cumulative })
    }

    /// Axis-aligned rectangle with its lower-left corner at `origin`.
    pub fn rectangle(origin: Point2, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            origin,
            origin + Point2::new(width, 0.0),
            origin + Point2::new(width, height),
            origin + Point2::new(0.0, height),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge(&self, index: usize) -> Edge {
        let n = self.vertices.len();
        Edge {
            index,
            start: self.vertices[index % n],
            end: self.vertices[(index + 1) % n],
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.vertices.len()).map(move |i| self.edge(i))
    }

    pub fn perimeter(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// Arc length (counter-clockwise from vertex 0) at the start of `edge`.
    pub fn edge_start_arclen(&self, edge: usize) -> f64 {
        self.cumulative[edge]
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Point on the boundary at arc length `s` (wrapped into the perimeter),
    /// with the edge it lies on and the offset along that edge.
    pub fn point_at_arclen(&self, s: f64) -> (Point2, usize, f64) {
        let p = self.perimeter();
        let s = if s >= 0.0 && s <= p { s } else { s.rem_euclid(p) };
        let n = self.vertices.len();
        let edge = match self.cumulative[..n].binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let offset = (s - self.cumulative[edge]).min(self.edge(edge).length());
        (self.edge(edge).point_at(offset), edge, offset)
    }

    /// Even-odd point containment; points on the boundary count as outside.
    pub fn contains(&self, p: Point2) -> bool {
        if self.distance_to_boundary(p) < 1e-12 {
            return false;
        }
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.edges()
            .map(|e| distance_to_segment(p, e.start, e.end))
            .fold(f64::INFINITY, f64::min)
    }
}

fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

fn orientation(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn segments_intersect(a1: Point2, a2: Point2, b1: Point2, b2: Point2) -> bool {
    let d1 = orientation(b1, b2, a1);
    let d2 = orientation(b1, b2, a2);
    let d3 = orientation(a1, a2, b1);
    let d4 = orientation(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2, d: f64| {
        d == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(b1, b2, a1, d1) || on(b1, b2, a2, d2) || on(a1, a2, b1, d3) || on(a1, a2, b2, d4)
}

/// A candidate ray through a prediction point. `angle` is the direction of
/// travel of the wave; the wave arrives from `angle + π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayLine {
    pub origin: Point2,
    pub angle: f64,
}

impl RayLine {
    pub fn new(origin: Point2, angle: f64) -> Self {
        Self {
            origin,
            angle: normalize_angle(angle),
        }
    }

    /// Unit vector of travel.
    pub fn direction(&self) -> Point2 {
        Point2::from_angle(self.angle)
    }

    /// Unit vector pointing back toward where the wave comes from.
    pub fn arrival_direction(&self) -> Point2 {
        -self.direction()
    }
}

/// A ray/boundary crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryHit {
    pub point: Point2,
    pub edge: usize,
    /// Offset of `point` from the start vertex of `edge`.
    pub edge_offset: f64,
    /// Signed distance from the ray origin along the direction of travel.
    pub distance: f64,
}

/// Upstream (`r1`) and downstream (`r2`) boundary crossings of a ray. The
/// wave travels `r1 → origin → r2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCrossing {
    pub r1: BoundaryHit,
    pub r2: BoundaryHit,
}

/// Intersections of the infinite line through `ray` with every edge, sorted
/// by signed distance along the direction of travel. Edges parallel to the
/// ray are skipped.
pub fn line_edge_hits(ray: &RayLine, boundary: &Enclosure) -> Vec<BoundaryHit> {
    let u = ray.direction();
    let mut hits: Vec<BoundaryHit> = boundary
        .edges()
        .filter_map(|e| {
            let seg = e.end - e.start;
            let denom = u.cross(seg);
            if denom.abs() < 1e-15 {
                return None;
            }
            let w = e.start - ray.origin;
            let s = w.cross(seg) / denom;
            let t = w.cross(u) / denom;
            (-1e-12..=1.0 + 1e-12).contains(&t).then(|| BoundaryHit {
                point: ray.origin + u * s,
                edge: e.index,
                edge_offset: t.clamp(0.0, 1.0) * seg.norm(),
                distance: s,
            })
        })
        .collect();
    hits.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    hits
}

/// Nearest boundary crossings on each side of an interior point.
///
/// For non-convex enclosures the line may cross the boundary more than
/// twice; the crossing closest to the origin on each side is returned.
pub fn enclosure_intersections(
    ray: &RayLine,
    boundary: &Enclosure,
) -> Result<RayCrossing, GeometryError> {
    if !boundary.contains(ray.origin) {
        return Err(GeometryError::OriginOutside {
            x: ray.origin.x,
            y: ray.origin.y,
        });
    }
    let hits = line_edge_hits(ray, boundary);
    let r2 = hits
        .iter()
        .filter(|h| h.distance > 0.0)
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
        .copied()
        .ok_or(GeometryError::NoIntersection)?;
    let r1 = hits
        .iter()
        .filter(|h| h.distance < 0.0)
        .max_by(|a, b| a.distance.total_cmp(&b.distance))
        .copied()
        .ok_or(GeometryError::NoIntersection)?;

    let u = ray.direction();
    let n = boundary.edge_count();
    for hit in [r1, r2] {
        let edge = boundary.edge(hit.edge);
        for (k, v) in [(hit.edge, edge.start), (hit.edge + 1, edge.end)] {
            if hit.point.distance(v) < VERTEX_TOLERANCE_M {
                return Err(GeometryError::VertexHit { vertex: k % n });
            }
        }
        let sin = u.cross(edge.direction()).abs();
        if sin < PARALLEL_TOLERANCE_RAD.sin() {
            return Err(GeometryError::DegenerateRay { edge: hit.edge });
        }
    }
    Ok(RayCrossing { r1, r2 })
}

fn check_unit(v: Point2) -> Result<(), GeometryError> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(GeometryError::NonUnitInput { norm });
    }
    Ok(())
}

/// Angle between the incoming-ray direction (pointing back toward the
/// source) and the array axis, in [0, π].
pub fn aoa_relative_to_array(
    ray_direction: Point2,
    array_direction: Point2,
) -> Result<f64, GeometryError> {
    check_unit(ray_direction)?;
    check_unit(array_direction)?;
    Ok(ray_direction.dot(array_direction).clamp(-1.0, 1.0).acos())
}

/// A uniform linear virtual array formed by consecutive route samples.
///
/// Antenna `k` sits at `first_antenna + direction * k * spacing`. Phases and
/// angles are referenced to the point `reference` meters along the array
/// (zero means the first antenna).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayWindow {
    pub first_antenna: Point2,
    pub direction: Point2,
    pub spacing: f64,
    pub sample_count: usize,
    pub reference: f64,
}

impl ArrayWindow {
    pub fn new(first_antenna: Point2, direction: Point2, spacing: f64, sample_count: usize) -> Self {
        Self {
            first_antenna,
            direction,
            spacing,
            sample_count,
            reference: 0.0,
        }
    }

    /// Same window with its phase reference moved to the middle antenna.
    pub fn centered(self) -> Self {
        Self {
            reference: (self.sample_count.saturating_sub(1) / 2) as f64 * self.spacing,
            ..self
        }
    }

    pub fn length(&self) -> f64 {
        self.sample_count.saturating_sub(1) as f64 * self.spacing
    }

    pub fn antenna(&self, k: usize) -> Point2 {
        self.first_antenna + self.direction * (k as f64 * self.spacing)
    }

    pub fn reference_point(&self) -> Point2 {
        self.first_antenna + self.direction * self.reference
    }

    /// Signed offset of antenna `k` from the reference point.
    pub fn offset(&self, k: usize) -> f64 {
        k as f64 * self.spacing - self.reference
    }

    pub fn center(&self) -> Point2 {
        self.first_antenna + self.direction * (0.5 * self.length())
    }
}

/// Direct-path length and angle of arrival at a window's reference point.
pub fn direct_path_geometry(tx: Point2, window: &ArrayWindow) -> Result<(f64, f64), GeometryError> {
    let r = window.reference_point();
    let incoming = tx - r;
    let l_tx = incoming.norm();
    if l_tx < 1e-12 {
        return Err(GeometryError::CoincidentPoints);
    }
    let aoa = aoa_relative_to_array(incoming * (1.0 / l_tx), window.direction)?;
    Ok((l_tx, aoa))
}

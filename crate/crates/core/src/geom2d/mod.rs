//! Planar geometry kernel: points, halfspaces, convex regions, circles and
//! cones, plus the distance and Chebyshev-center queries the planners rely on.

mod chebyshev;
mod cone;
mod distance;
mod region;

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chebyshev::{chebyshev_center, chebyshev_center_near};
pub use cone::{cone_contains, Cone2};
pub use distance::{
    closest_point_on_segment, closest_point_pair, convex_polygons_intersect, point_in_convex,
    point_polygon_signed_distance, ClosestPair,
};
pub use region::{contains, intersect_regions, ConvexRegion, Halfspace};

/// Tolerance used when checking that a region's vertices satisfy its faces.
pub const VERTEX_TOL: f64 = 1e-7;

/// Chebyshev radius at or below which a region is treated as empty.
pub const EMPTY_RADIUS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error("halfspace set is unbounded")]
    Unbounded,
    #[error("region has empty interior")]
    Empty,
    #[error("invalid halfspace: {0}")]
    InvalidHalfspace(String),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
}

/// A point (or free vector) in the plane, in meters.
///
/// Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

/// Vectors share the point representation.
pub type Vec2 = Point2;

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2::new(a[0], a[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    /// Unit vector at angle `theta`.
    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        Point2::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Option<Point2> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn rotate(self, theta: f64) -> Point2 {
        let (s, c) = theta.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        self + (o - self) * t
    }

    /// Lexicographic ordering on (x, y); used for deterministic tie-breaks.
    pub fn lex_cmp(&self, o: &Point2) -> std::cmp::Ordering {
        self.x.total_cmp(&o.x).then(self.y.total_cmp(&o.y))
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    #[inline]
    fn mul(self, p: Point2) -> Point2 {
        p * self
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn div(self, s: f64) -> Point2 {
        Point2::new(self.x / s, self.y / s)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Point2 {
    fn sub_assign(&mut self, o: Point2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; guard the open end.
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// A disc, used as the collision proxy for bases, arms, the object and
/// dynamic obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point2, radius: f64) -> Self {
        debug_assert!(radius >= 0.0);
        Circle { center, radius }
    }

    /// Clearance between two discs; negative when they overlap.
    pub fn clearance(&self, other: &Circle) -> f64 {
        self.center.dist(other.center) - self.radius - other.radius
    }
}

/// Signed area of a polygon (positive for counter-clockwise order).
pub fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut a = 0.0;
    for i in 0..n {
        a += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * a
}

pub fn centroid(vertices: &[Point2]) -> Point2 {
    let n = vertices.len() as f64;
    let s = vertices.iter().fold(Point2::ZERO, |acc, &v| acc + v);
    s / n
}

/// Checks strict convexity of a vertex loop (either orientation). Collinear
/// consecutive vertices are tolerated.
pub fn is_convex(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let area = signed_area(vertices);
    if area.abs() < 1e-12 {
        return false;
    }
    let sign = area.signum();
    let scale = vertices.iter().map(|v| v.norm()).fold(1.0, f64::max);
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        if (b - a).cross(c - b) * sign < -1e-12 * scale * scale {
            return false;
        }
    }
    // A star-shaped loop with all left turns can still wind twice.
    let mut turn = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        let e1 = b - a;
        let e2 = c - b;
        turn += e1.cross(e2).atan2(e1.dot(e2));
    }
    (turn.abs() - 2.0 * PI).abs() < 1e-6
}

/// Returns the vertices in counter-clockwise order.
pub fn ensure_ccw(mut vertices: Vec<Point2>) -> Vec<Point2> {
    if signed_area(&vertices) < 0.0 {
        vertices.reverse();
    }
    vertices
}

/// Validates that a vertex list is a usable convex polygon.
pub fn validate_convex_polygon(vertices: &[Point2]) -> Result<(), GeomError> {
    if vertices.len() < 3 {
        return Err(GeomError::DegenerateShape(format!(
            "{} vertices (need at least 3)",
            vertices.len()
        )));
    }
    if vertices.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::DegenerateShape("non-finite vertex".into()));
    }
    if signed_area(vertices).abs() < 1e-12 {
        return Err(GeomError::DegenerateShape("zero area".into()));
    }
    if !is_convex(vertices) {
        return Err(GeomError::DegenerateShape("polygon is not convex".into()));
    }
    Ok(())
}

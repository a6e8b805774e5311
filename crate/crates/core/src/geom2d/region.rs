use serde::{Deserialize, Serialize};

use super::chebyshev::chebyshev_center;
use super::{ensure_ccw, validate_convex_polygon, GeomError, Point2, EMPTY_RADIUS, VERTEX_TOL};

/// The closed halfplane `{x : normal·x <= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Point2,
    pub offset: f64,
}

impl Halfspace {
    /// Builds a halfspace, rescaling so the normal has unit length.
    pub fn new(normal: Point2, offset: f64) -> Result<Self, GeomError> {
        let n = normal.norm();
        if !(n > 1e-12) || !n.is_finite() || !offset.is_finite() {
            return Err(GeomError::InvalidHalfspace(format!(
                "normal {normal:?}, offset {offset}"
            )));
        }
        Ok(Halfspace {
            normal: normal / n,
            offset: offset / n,
        })
    }

    /// Halfspace whose boundary passes through `point` with outward `normal`.
    pub fn through(point: Point2, normal: Point2) -> Result<Self, GeomError> {
        let n = normal
            .normalized()
            .ok_or_else(|| GeomError::InvalidHalfspace("zero normal".into()))?;
        Ok(Halfspace {
            normal: n,
            offset: n.dot(point),
        })
    }

    /// `offset - normal·p`: positive inside, the distance to the boundary line.
    #[inline]
    pub fn margin(&self, p: Point2) -> f64 {
        self.offset - self.normal.dot(p)
    }

    #[inline]
    pub fn contains(&self, p: Point2, slack: f64) -> bool {
        self.normal.dot(p) <= self.offset + slack
    }
}

/// Bounded convex polygon held in both halfspace and vertex form.
///
/// Vertices are counter-clockwise. Halfspaces that do not touch the polygon
/// are pruned at construction, so both lists describe the same set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexRegion {
    halfspaces: Vec<Halfspace>,
    vertices: Vec<Point2>,
}

impl ConvexRegion {
    /// Builds a region from a halfspace list, enumerating its vertices.
    pub fn from_halfspaces(halfspaces: &[Halfspace]) -> Result<Self, GeomError> {
        if halfspaces.len() < 3 {
            return Err(GeomError::Unbounded);
        }
        let (_, radius) = chebyshev_center(halfspaces)?;
        if radius <= EMPTY_RADIUS {
            return Err(GeomError::Empty);
        }
        let vertices = enumerate_vertices(halfspaces);
        if vertices.len() < 3 {
            return Err(GeomError::Empty);
        }
        // Keep only the faces that support an edge of the polygon.
        let mut kept: Vec<Halfspace> = Vec::new();
        for h in halfspaces {
            let on_face = vertices
                .iter()
                .filter(|v| h.margin(**v).abs() <= 1e-9 * (1.0 + v.norm()))
                .count();
            if on_face >= 2 && !kept.iter().any(|k| same_halfspace(k, h)) {
                kept.push(*h);
            }
        }
        if kept.len() < 3 {
            return Err(GeomError::Empty);
        }
        Ok(ConvexRegion {
            halfspaces: kept,
            vertices,
        })
    }

    /// Builds a region from a convex vertex loop (either orientation).
    pub fn from_vertices(vertices: &[Point2]) -> Result<Self, GeomError> {
        validate_convex_polygon(vertices)?;
        let v = ensure_ccw(vertices.to_vec());
        let n = v.len();
        let mut hs = Vec::with_capacity(n);
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            if (b - a).norm() < 1e-12 {
                continue;
            }
            // Outward normal of a CCW edge points to its right.
            let out = Point2::new((b - a).y, -(b - a).x);
            hs.push(Halfspace::through(a, out)?);
        }
        Self::from_halfspaces(&hs)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeomError> {
        Self::from_vertices(&[
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn num_faces(&self) -> usize {
        self.halfspaces.len()
    }

    pub fn contains(&self, p: Point2, slack: f64) -> bool {
        self.halfspaces.iter().all(|h| h.contains(p, slack))
    }

    /// Smallest face margin of `p`; the distance to the boundary for interior
    /// points, negative outside.
    pub fn margin(&self, p: Point2) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.margin(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn area(&self) -> f64 {
        super::signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point2 {
        super::centroid(&self.vertices)
    }

    pub fn chebyshev(&self) -> (Point2, f64) {
        // A valid region is bounded, so this cannot fail.
        chebyshev_center(&self.halfspaces).expect("bounded region")
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bbox(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Closest point of the region to `p` (`p` itself when inside).
    pub fn project(&self, p: Point2) -> Point2 {
        if self.contains(p, 0.0) {
            return p;
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            let q = super::closest_point_on_segment(p, self.vertices[i], self.vertices[(i + 1) % n]);
            let d = q.dist(p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Intersection with another region, `None` when the interior is empty.
    pub fn intersect(&self, other: &ConvexRegion) -> Option<ConvexRegion> {
        intersect_regions(self, other)
    }
}

fn same_halfspace(a: &Halfspace, b: &Halfspace) -> bool {
    (a.normal - b.normal).norm() < 1e-12 && (a.offset - b.offset).abs() < 1e-12
}

/// Pairwise line intersections that satisfy every halfspace, deduplicated and
/// sorted counter-clockwise.
fn enumerate_vertices(hs: &[Halfspace]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = Vec::new();
    for i in 0..hs.len() {
        for j in (i + 1)..hs.len() {
            let (a, b) = (hs[i], hs[j]);
            let det = a.normal.cross(b.normal);
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (a.offset * b.normal.y - b.offset * a.normal.y) / det;
            let y = (a.normal.x * b.offset - b.normal.x * a.offset) / det;
            let p = Point2::new(x, y);
            let tol = 1e-9 * (1.0 + p.norm());
            if hs.iter().all(|h| h.contains(p, tol))
                && !pts.iter().any(|q| q.dist(p) < 1e-9 * (1.0 + p.norm()))
            {
                pts.push(p);
            }
        }
    }
    if pts.len() < 3 {
        return pts;
    }
    let c = super::centroid(&pts);
    pts.sort_by(|a, b| (*a - c).angle().total_cmp(&(*b - c).angle()));
    // Start the loop at the lexicographically smallest vertex so equal sets
    // serialize identically.
    let start = (0..pts.len())
        .min_by(|&i, &j| pts[i].lex_cmp(&pts[j]))
        .unwrap_or(0);
    pts.rotate_left(start);
    debug_assert!(pts
        .iter()
        .all(|p| hs.iter().all(|h| h.contains(*p, VERTEX_TOL))));
    pts
}

/// `a·pt <= b + slack` for every face.
pub fn contains(region: &ConvexRegion, pt: Point2, slack: f64) -> bool {
    region.contains(pt, slack)
}

/// Intersection of two regions; `None` when the Chebyshev radius of the
/// combined halfspace set is at most [`EMPTY_RADIUS`].
pub fn intersect_regions(p1: &ConvexRegion, p2: &ConvexRegion) -> Option<ConvexRegion> {
    let mut hs = p1.halfspaces.clone();
    hs.extend_from_slice(&p2.halfspaces);
    match ConvexRegion::from_halfspaces(&hs) {
        Ok(r) => Some(r),
        Err(_) => None,
    }
}

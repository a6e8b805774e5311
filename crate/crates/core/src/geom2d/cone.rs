use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{GeomError, Point2};

/// Planar convex cone with apex `apex`, spanning counter-clockwise from
/// `edge_lo` to `edge_hi`.
///
/// Membership is `E (x - apex) <= 0` with `E = [edge_hi⊥ᵀ; -edge_lo⊥ᵀ]`,
/// where `⊥` is the counter-clockwise perpendicular. The opening angle is in
/// `(0, π]`; at exactly `π` the cone is a halfplane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone2 {
    pub apex: Point2,
    pub edge_lo: Point2,
    pub edge_hi: Point2,
}

impl Cone2 {
    pub fn new(apex: Point2, edge_lo: Point2, edge_hi: Point2) -> Result<Self, GeomError> {
        let lo = edge_lo
            .normalized()
            .ok_or_else(|| GeomError::InvalidCone("zero edge direction".into()))?;
        let hi = edge_hi
            .normalized()
            .ok_or_else(|| GeomError::InvalidCone("zero edge direction".into()))?;
        let cone = Cone2 {
            apex,
            edge_lo: lo,
            edge_hi: hi,
        };
        let w = cone.opening();
        if !(w > 1e-9 && w <= PI + 1e-9) {
            return Err(GeomError::InvalidCone(format!("opening angle {w} outside (0, π]")));
        }
        Ok(cone)
    }

    /// Cone from apex and the angles of its two edges (CCW from `lo` to `hi`).
    pub fn from_angles(apex: Point2, lo: f64, hi: f64) -> Result<Self, GeomError> {
        Self::new(apex, Point2::from_angle(lo), Point2::from_angle(hi))
    }

    /// Counter-clockwise angle from `edge_lo` to `edge_hi`, in `[0, 2π)`.
    pub fn opening(&self) -> f64 {
        let a = self.edge_lo.cross(self.edge_hi).atan2(self.edge_lo.dot(self.edge_hi));
        if a < 0.0 {
            a + 2.0 * PI
        } else if a == 0.0 && self.edge_lo.dot(self.edge_hi) < 0.0 {
            PI
        } else {
            a
        }
    }

    /// The affine matrix rows `E_i`.
    pub fn matrix(&self) -> [Point2; 2] {
        [self.edge_hi.perp(), -self.edge_lo.perp()]
    }

    /// Both rows of `E (pt - apex)`; the point is inside when both are `<= 0`.
    pub fn rows(&self, pt: Point2) -> [f64; 2] {
        let d = pt - self.apex;
        let [r0, r1] = self.matrix();
        [r0.dot(d), r1.dot(d)]
    }

    pub fn contains(&self, pt: Point2, slack: f64) -> bool {
        let [a, b] = self.rows(pt);
        a <= slack && b <= slack
    }

    /// Unit direction bisecting the cone.
    pub fn bisector(&self) -> Point2 {
        Point2::from_angle(self.edge_lo.angle() + 0.5 * self.opening())
    }
}

/// `E_i (pt - apex) <= 0` for both rows.
pub fn cone_contains(cone: &Cone2, pt: Point2) -> bool {
    cone.contains(pt, 0.0)
}

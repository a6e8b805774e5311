use serde::{Deserialize, Serialize};

use super::{validate_convex_polygon, GeomError, Point2};

/// Witness points realizing the distance between two convex polygons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosestPair {
    pub a: Point2,
    pub b: Point2,
    pub dist: f64,
}

pub fn closest_point_on_segment(p: Point2, a: Point2, b: Point2) -> Point2 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 <= 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        a + ab * t
    }
}

/// Inclusive point-in-convex-polygon test (any orientation).
pub fn point_in_convex(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = (b - a).cross(p - a);
        if c.abs() <= 1e-14 * (1.0 + (b - a).norm() * (p - a).norm()) {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

/// Distance from `p` to the polygon boundary, negated when `p` is inside.
pub fn point_polygon_signed_distance(p: Point2, poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut d = f64::INFINITY;
    for i in 0..n {
        let q = closest_point_on_segment(p, poly[i], poly[(i + 1) % n]);
        d = d.min(q.dist(p));
    }
    if point_in_convex(p, poly) {
        -d
    } else {
        d
    }
}

/// Separating-axis test; touching polygons count as intersecting.
pub fn convex_polygons_intersect(a: &[Point2], b: &[Point2]) -> bool {
    for (poly, _) in [(a, b), (b, a)] {
        let n = poly.len();
        for i in 0..n {
            let e = poly[(i + 1) % n] - poly[i];
            let axis = e.perp();
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            let scale = axis.norm() * 1e-12;
            if amax < bmin - scale || bmax < amin - scale {
                return false;
            }
        }
    }
    true
}

fn project(poly: &[Point2], axis: Point2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = v.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

fn segment_intersection(p0: Point2, p1: Point2, q0: Point2, q1: Point2) -> Option<Point2> {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = r.cross(s);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (q0 - p0).cross(s) / denom;
    let u = (q0 - p0).cross(r) / denom;
    if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some(p0 + r * t)
    } else {
        None
    }
}

/// Closest points between two convex polygons by exhaustive vertex–edge
/// enumeration.
///
/// Ties between equally short candidate pairs are resolved symmetrically:
/// if the tied pairs are parallel translates (e.g. two facing edges) their
/// average is returned, which is the center of the overlap; otherwise the pair
/// with the lexicographically smallest midpoint wins. Swapping the arguments
/// therefore swaps the returned witnesses.
pub fn closest_point_pair(a: &[Point2], b: &[Point2]) -> Result<ClosestPair, GeomError> {
    validate_convex_polygon(a)?;
    validate_convex_polygon(b)?;

    if convex_polygons_intersect(a, b) {
        let mut witnesses: Vec<Point2> = Vec::new();
        witnesses.extend(a.iter().filter(|v| point_in_convex(**v, b)));
        witnesses.extend(b.iter().filter(|v| point_in_convex(**v, a)));
        for i in 0..a.len() {
            for j in 0..b.len() {
                if let Some(p) = segment_intersection(
                    a[i],
                    a[(i + 1) % a.len()],
                    b[j],
                    b[(j + 1) % b.len()],
                ) {
                    witnesses.push(p);
                }
            }
        }
        let w = witnesses
            .into_iter()
            .min_by(|p, q| p.lex_cmp(q))
            .ok_or_else(|| GeomError::DegenerateShape("no intersection witness".into()))?;
        return Ok(ClosestPair { a: w, b: w, dist: 0.0 });
    }

    // (point on A, point on B, distance)
    let mut cands: Vec<(Point2, Point2, f64)> = Vec::new();
    for v in a {
        for j in 0..b.len() {
            let q = closest_point_on_segment(*v, b[j], b[(j + 1) % b.len()]);
            cands.push((*v, q, v.dist(q)));
        }
    }
    for v in b {
        for i in 0..a.len() {
            let q = closest_point_on_segment(*v, a[i], a[(i + 1) % a.len()]);
            cands.push((q, *v, v.dist(q)));
        }
    }
    let dmin = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * (1.0 + dmin);
    let tied: Vec<(Point2, Point2, f64)> = cands.into_iter().filter(|c| c.2 <= dmin + tie).collect();

    let n = tied.len() as f64;
    let avg_a = tied.iter().fold(Point2::ZERO, |s, c| s + c.0) / n;
    let avg_b = tied.iter().fold(Point2::ZERO, |s, c| s + c.1) / n;
    let d_avg = avg_a.dist(avg_b);
    let parallel = tied.iter().all(|c| ((c.1 - c.0) - (avg_b - avg_a)).norm() <= 1e-9 * (1.0 + dmin));
    if parallel && (d_avg - dmin).abs() <= 1e-9 * (1.0 + dmin) {
        return Ok(ClosestPair {
            a: avg_a,
            b: avg_b,
            dist: dmin,
        });
    }
    let best = tied
        .iter()
        .min_by(|p, q| ((p.0 + p.1) * 0.5).lex_cmp(&((q.0 + q.1) * 0.5)))
        .copied()
        .expect("non-empty candidate set");
    Ok(ClosestPair {
        a: best.0,
        b: best.1,
        dist: dmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(x0: f64, y0: f64, s: f64) -> Vec<Point2> {
        vec![
            Point2::new(x0, y0),
            Point2::new(x0 + s, y0),
            Point2::new(x0 + s, y0 + s),
            Point2::new(x0, y0 + s),
        ]
    }

    /// Point-to-segment distance via the parametric foot of the perpendicular.
    fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        ((a.x + t * dx - p.x).powi(2) + (a.y + t * dy - p.y).powi(2)).sqrt()
    }

    /// Dense boundary sampling: `per_edge` samples on every edge of both shapes.
    fn sampled_distance(a: &[Point2], b: &[Point2], per_edge: usize) -> f64 {
        let sample = |poly: &[Point2]| -> Vec<Point2> {
            let mut pts = Vec::new();
            for i in 0..poly.len() {
                let p = poly[i];
                let q = poly[(i + 1) % poly.len()];
                for k in 0..per_edge {
                    pts.push(p.lerp(q, k as f64 / per_edge as f64));
                }
            }
            pts
        };
        let sa = sample(a);
        let sb = sample(b);
        // Exact point-to-polygon distance on one side keeps the oracle cheap
        // while staying independent of the vertex–edge enumeration.
        let d1 = sa
            .iter()
            .map(|p| {
                (0..b.len())
                    .map(|j| seg_dist(*p, b[j], b[(j + 1) % b.len()]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        let d2 = sb
            .iter()
            .map(|p| {
                (0..a.len())
                    .map(|j| seg_dist(*p, a[j], a[(j + 1) % a.len()]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        d1.min(d2)
    }

    #[test]
    fn axis_aligned_gap() {
        let r = closest_point_pair(&square(0.0, 0.0, 1.0), &square(2.0, 0.0, 1.0)).unwrap();
        assert!((r.dist - 1.0).abs() < 1e-15);
        assert!((r.a.x - 1.0).abs() < 1e-15 && (r.b.x - 2.0).abs() < 1e-15);
        assert!((r.a.y - r.b.y).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&r.a.y));
        // facing edges: the center of the overlap is reported
        assert!((r.a.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlapping_squares() {
        let r = closest_point_pair(&square(0.0, 0.0, 2.0), &square(1.0, 1.0, 2.0)).unwrap();
        assert_eq!(r.dist, 0.0);
        assert!(point_in_convex(r.a, &square(0.0, 0.0, 2.0)));
        assert!(point_in_convex(r.a, &square(1.0, 1.0, 2.0)));
    }

    #[test]
    fn rotated_triangle_matches_sampling() {
        let tri = [Point2::new(3.0, 0.0), Point2::new(4.0, 1.0), Point2::new(3.0, 2.0)];
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let th = 30f64.to_radians();
        let rot: Vec<Point2> = tri.iter().map(|p| c + (*p - c).rotate(th)).collect();
        let r = closest_point_pair(&square(0.0, 0.0, 1.0), &rot).unwrap();
        let oracle = sampled_distance(&square(0.0, 0.0, 1.0), &rot, 10_000);
        assert!((r.dist - oracle).abs() < 1e-4, "{} vs {}", r.dist, oracle);
        assert!(r.dist <= oracle + 1e-12);
    }

    #[test]
    fn degenerate_rejected() {
        let line = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)];
        assert!(matches!(
            closest_point_pair(&line, &square(0.0, 0.0, 1.0)),
            Err(GeomError::DegenerateShape(_))
        ));
        assert!(closest_point_pair(&line[..2], &square(0.0, 0.0, 1.0)).is_err());
    }

    fn random_convex(rng: &mut ChaCha8Rng, center: Point2) -> Vec<Point2> {
        let k = rng.random_range(3..7);
        let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 0.2);
        if angles.len() < 3 {
            return random_convex(rng, center);
        }
        let r = rng.random_range(0.3..1.2);
        let poly: Vec<Point2> = angles.iter().map(|t| center + Point2::from_angle(*t) * r).collect();
        if validate_convex_polygon(&poly).is_err() {
            return random_convex(rng, center);
        }
        poly
    }

    #[test]
    fn symmetric_and_lower_bound_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = random_convex(&mut rng, Point2::new(0.0, 0.0));
            let c = Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let b = random_convex(&mut rng, c);
            let ab = closest_point_pair(&a, &b).unwrap();
            let ba = closest_point_pair(&b, &a).unwrap();
            assert!((ab.dist - ba.dist).abs() < 1e-12);
            assert!(ab.a.dist(ba.b) < 1e-12 && ab.b.dist(ba.a) < 1e-12);
            assert!((ab.a.dist(ab.b) - ab.dist).abs() < 1e-12);
            if ab.dist > 0.0 {
                let oracle = sampled_distance(&a, &b, 200);
                assert!(ab.dist <= oracle + 1e-12);
                assert!(oracle - ab.dist < 1e-2);
            }
        }
    }
}

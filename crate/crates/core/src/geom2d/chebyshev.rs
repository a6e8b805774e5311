//! Largest inscribed circle of a halfspace set.
//!
//! The primal problem `max r s.t. a_i·c + r <= b_i` has three free
//! variables. Its dual, `min b·λ s.t. Σλ_i a_i = 0, Σλ_i = 1, λ >= 0`, is in
//! standard form with only three rows, so a revised simplex with an explicit
//! 3×3 basis inverse solves it exactly; the primal optimum is read off as the
//! simplex multipliers.

use super::region::{ConvexRegion, Halfspace};
use super::{GeomError, Point2};

const PIVOT_TOL: f64 = 1e-12;

/// Center and radius of the largest circle inside `halfspaces`.
///
/// A radius `<= 0` means the set has no interior (or is empty).
pub fn chebyshev_center(halfspaces: &[Halfspace]) -> Result<(Point2, f64), GeomError> {
    if !normals_span_plane(halfspaces) {
        return Err(GeomError::Unbounded);
    }
    let z = solve_dual(halfspaces)?;
    Ok((Point2::new(z[0], z[1]), z[2]))
}

/// Like [`chebyshev_center`] but, among centers whose radius is within `tol`
/// of the optimum, returns the one closest to `anchor`.
///
/// The radius returned is the actual inscribed radius at the chosen center.
pub fn chebyshev_center_near(
    halfspaces: &[Halfspace],
    anchor: Point2,
    tol: f64,
) -> Result<(Point2, f64), GeomError> {
    let (center, radius) = chebyshev_center(halfspaces)?;
    if radius <= tol {
        return Ok((center, radius));
    }
    let shrunk: Vec<Halfspace> = halfspaces
        .iter()
        .map(|h| Halfspace {
            normal: h.normal,
            offset: h.offset - (radius - tol),
        })
        .collect();
    let chosen = match ConvexRegion::from_halfspaces(&shrunk) {
        Ok(q) => q.project(anchor),
        Err(_) => center,
    };
    let r = halfspaces
        .iter()
        .map(|h| h.margin(chosen))
        .fold(f64::INFINITY, f64::min);
    Ok((chosen, r))
}

/// True when the outward normals positively span the plane, i.e. the
/// intersection (if nonempty) is bounded.
fn normals_span_plane(hs: &[Halfspace]) -> bool {
    let mut angles: Vec<f64> = hs.iter().map(|h| h.normal.angle()).collect();
    if angles.len() < 3 {
        return false;
    }
    angles.sort_by(f64::total_cmp);
    let mut max_gap = angles[0] + std::f64::consts::TAU - angles[angles.len() - 1];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    max_gap < std::f64::consts::PI - 1e-12
}

fn inverse3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut r = [[0.0; 3]; 3];
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    Some(r)
}

struct Dual<'a> {
    hs: &'a [Halfspace],
}

impl Dual<'_> {
    /// Column `j`; indices past the real columns are the artificial unit columns.
    fn column(&self, j: usize) -> [f64; 3] {
        let m = self.hs.len();
        if j < m {
            let h = &self.hs[j];
            [h.normal.x, h.normal.y, 1.0]
        } else {
            let mut e = [0.0; 3];
            e[j - m] = 1.0;
            e
        }
    }

    fn basis_inverse(&self, basis: &[usize; 3]) -> Option<[[f64; 3]; 3]> {
        let mut b = [[0.0; 3]; 3];
        for (c, &j) in basis.iter().enumerate() {
            let col = self.column(j);
            for r in 0..3 {
                b[r][c] = col[r];
            }
        }
        inverse3(&b)
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Runs Bland-rule simplex iterations for costs `cost(j)` over candidate
/// columns `0..m`. Returns the final basis inverse.
fn simplex(
    dual: &Dual<'_>,
    basis: &mut [usize; 3],
    cost: &dyn Fn(usize) -> f64,
) -> Result<[[f64; 3]; 3], GeomError> {
    let m = dual.hs.len();
    let rhs = [0.0, 0.0, 1.0];
    let max_iter = 50 * (m + 3) + 100;
    for _ in 0..max_iter {
        let binv = dual
            .basis_inverse(basis)
            .ok_or_else(|| GeomError::DegenerateShape("singular simplex basis".into()))?;
        let xb = mat_vec(&binv, &rhs);
        // y = B^{-T} c_B
        let cb = [cost(basis[0]), cost(basis[1]), cost(basis[2])];
        let y = [
            binv[0][0] * cb[0] + binv[1][0] * cb[1] + binv[2][0] * cb[2],
            binv[0][1] * cb[0] + binv[1][1] * cb[1] + binv[2][1] * cb[2],
            binv[0][2] * cb[0] + binv[1][2] * cb[1] + binv[2][2] * cb[2],
        ];
        let entering = (0..m).find(|j| {
            if basis.contains(j) {
                return false;
            }
            let a = dual.column(*j);
            let d = cost(*j) - (y[0] * a[0] + y[1] * a[1] + y[2] * a[2]);
            d < -1e-11
        });
        let Some(j) = entering else {
            return Ok(binv);
        };
        let w = mat_vec(&binv, &dual.column(j));
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..3 {
            if w[r] > PIVOT_TOL {
                let ratio = xb[r].max(0.0) / w[r];
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-15
                            || (ratio <= lratio + 1e-15 && basis[r] < basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        match leave {
            Some((r, _)) => basis[r] = j,
            // The dual objective is bounded below whenever it is feasible.
            None => return Err(GeomError::Unbounded),
        }
    }
    Err(GeomError::DegenerateShape("simplex iteration limit".into()))
}

fn solve_dual(hs: &[Halfspace]) -> Result<[f64; 3], GeomError> {
    let m = hs.len();
    if m < 3 {
        return Err(GeomError::Unbounded);
    }
    let dual = Dual { hs };
    let mut basis = [m, m + 1, m + 2];

    // Phase 1: drive the artificial columns to zero.
    let phase1 = |j: usize| if j >= m { 1.0 } else { 0.0 };
    let binv = simplex(&dual, &mut basis, &phase1)?;
    let xb = mat_vec(&binv, &[0.0, 0.0, 1.0]);
    let infeas: f64 = (0..3).filter(|&r| basis[r] >= m).map(|r| xb[r]).sum();
    if infeas > 1e-9 {
        // No convex combination of the normals vanishes: the primal is unbounded.
        return Err(GeomError::Unbounded);
    }
    // Pivot remaining (zero-level) artificials out of the basis.
    for r in 0..3 {
        if basis[r] < m {
            continue;
        }
        let binv = dual
            .basis_inverse(&basis)
            .ok_or_else(|| GeomError::DegenerateShape("singular simplex basis".into()))?;
        let replacement = (0..m).find(|j| {
            !basis.contains(j) && mat_vec(&binv, &dual.column(*j))[r].abs() > 1e-9
        });
        match replacement {
            Some(j) => basis[r] = j,
            // A redundant row means the normals do not span the plane.
            None => return Err(GeomError::Unbounded),
        }
    }

    // Phase 2: minimize b·λ.
    let phase2 = |j: usize| if j < m { hs[j].offset } else { f64::INFINITY };
    let binv = simplex(&dual, &mut basis, &phase2)?;
    let cb = [hs[basis[0]].offset, hs[basis[1]].offset, hs[basis[2]].offset];
    Ok([
        binv[0][0] * cb[0] + binv[1][0] * cb[1] + binv[2][0] * cb[2],
        binv[0][1] * cb[0] + binv[1][1] * cb[1] + binv[2][1] * cb[2],
        binv[0][2] * cb[0] + binv[1][2] * cb[1] + binv[2][2] * cb[2],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Halfspace> {
        vec![
            Halfspace::new(Point2::new(-1.0, 0.0), -x0).unwrap(),
            Halfspace::new(Point2::new(1.0, 0.0), x1).unwrap(),
            Halfspace::new(Point2::new(0.0, -1.0), -y0).unwrap(),
            Halfspace::new(Point2::new(0.0, 1.0), y1).unwrap(),
        ]
    }

    #[test]
    fn unit_square_center() {
        let (c, r) = chebyshev_center(&rect(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert!(c.dist(Point2::new(0.5, 0.5)) < 1e-12);
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn long_rectangle_center_on_midline() {
        let (c, r) = chebyshev_center(&rect(0.0, 0.0, 3.0, 1.0)).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!((c.y - 0.5).abs() < 1e-12);
        assert!((0.5 - 1e-12..=2.5 + 1e-12).contains(&c.x));
    }

    #[test]
    fn empty_interior_has_nonpositive_radius() {
        let mut hs = rect(0.0, 0.0, 1.0, 1.0);
        hs.push(Halfspace::new(Point2::new(1.0, 0.0), -1.0).unwrap()); // x <= -1
        let (_, r) = chebyshev_center(&hs).unwrap();
        assert!(r <= 0.0);
    }

    #[test]
    fn unbounded_detected() {
        let hs = vec![
            Halfspace::new(Point2::new(0.0, 1.0), 1.0).unwrap(),
            Halfspace::new(Point2::new(0.0, -1.0), 1.0).unwrap(),
            Halfspace::new(Point2::new(1.0, 0.0), 1.0).unwrap(),
        ];
        assert_eq!(chebyshev_center(&hs), Err(GeomError::Unbounded));
    }

    #[test]
    fn near_anchor_stays_put_in_strip() {
        let hs = rect(0.0, 0.0, 1.5, 8.0);
        let (c, r) = chebyshev_center_near(&hs, Point2::new(0.75, 3.0), 1e-3).unwrap();
        assert!(c.dist(Point2::new(0.75, 3.0)) < 1e-12);
        assert!((r - 0.75).abs() < 1e-12);
    }

    /// Brute-force oracle: every basic solution of the primal LP (three
    /// active constraints, Cramer's rule), keeping the best feasible one.
    fn vertex_oracle(hs: &[Halfspace]) -> f64 {
        let m = hs.len();
        let mut best = f64::NEG_INFINITY;
        for i in 0..m {
            for j in i + 1..m {
                for k in j + 1..m {
                    let rows = [&hs[i], &hs[j], &hs[k]];
                    let a = |r: usize| [rows[r].normal.x, rows[r].normal.y, 1.0];
                    let det3 = |c0: [f64; 3], c1: [f64; 3], c2: [f64; 3]| {
                        c0[0] * (c1[1] * c2[2] - c1[2] * c2[1])
                            - c1[0] * (c0[1] * c2[2] - c0[2] * c2[1])
                            + c2[0] * (c0[1] * c1[2] - c0[2] * c1[1])
                    };
                    // columns of the 3×3 system (rows are constraints)
                    let col = |c: usize| [a(0)[c], a(1)[c], a(2)[c]];
                    let bvec = [rows[0].offset, rows[1].offset, rows[2].offset];
                    let d = det3(col(0), col(1), col(2));
                    if d.abs() < 1e-12 {
                        continue;
                    }
                    let x = det3(bvec, col(1), col(2)) / d;
                    let y = det3(col(0), bvec, col(2)) / d;
                    let r = det3(col(0), col(1), bvec) / d;
                    let p = Point2::new(x, y);
                    if hs.iter().all(|h| h.margin(p) >= r - 1e-9) {
                        best = best.max(r);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn random_hexagon_matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut hs = Vec::new();
            for k in 0..6 {
                let th = (k as f64 + rng.random_range(-0.3..0.3)) * std::f64::consts::TAU / 6.0;
                let n = Point2::from_angle(th);
                hs.push(Halfspace::new(n, rng.random_range(0.5..1.5)).unwrap());
            }
            let (c, r) = chebyshev_center(&hs).unwrap();
            let oracle = vertex_oracle(&hs);
            assert!((r - oracle).abs() < 1e-9, "lp {r} vs oracle {oracle}");
            let at_c = hs.iter().map(|h| h.margin(c)).fold(f64::INFINITY, f64::min);
            assert!((at_c - r).abs() < 1e-9);
        }
    }
}

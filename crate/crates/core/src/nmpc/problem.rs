//! Multiple-shooting transcription of one horizon.

use crate::geom2d::{ConvexRegion, Halfspace, Point2};
use crate::model::{FormationSpec, ModelError};
use crate::nlp::NlpProblem;

/// Margin added to containment and distance constraints inside the solver.
pub(crate) const CONSTRAINT_PAD: f64 = 5e-4;
/// Joint boxes are tightened by this much inside the solver.
pub(crate) const JOINT_PAD: f64 = 5e-4;
/// Control boxes are scaled by this factor inside the solver.
pub(crate) const CONTROL_SCALE: f64 = 0.98;

/// Index arithmetic for `[X⁰ … Xᴺ, u⁰ … uᴺ⁻¹]` with
/// `Xᵏ = [p.x, p.y, ψ, (p_i.x, p_i.y, φ_i, q_i1, q_i2, q_i3)_i]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n: usize,
    pub nk: usize,
}

impl Layout {
    pub fn sx(&self) -> usize {
        3 + 6 * self.n
    }

    pub fn su(&self) -> usize {
        6 * self.n
    }

    pub fn x(&self, k: usize) -> usize {
        k * self.sx()
    }

    pub fn robot(&self, k: usize, i: usize) -> usize {
        self.x(k) + 3 + 6 * i
    }

    pub fn u(&self, k: usize, i: usize) -> usize {
        (self.nk + 1) * self.sx() + k * self.su() + 6 * i
    }

    pub fn dim(&self) -> usize {
        (self.nk + 1) * self.sx() + self.nk * self.su()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Kind {
    /// `a·c + r + d − b <= 0`.
    Face(Halfspace),
    /// `R − ‖c − o‖ <= 0`, `R` including both radii and the margin.
    Obstacle { center: Point2, reach: f64 },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ineq {
    pub k: usize,
    pub body: usize,
    pub kind: Kind,
    /// Constant added to the constraint value (radius, margin, pad).
    pub offset: f64,
}

/// Up to five (variable, ∂center/∂variable) pairs and how many are used.
pub(crate) type CenterJac = ([(usize, Point2); 5], usize);

pub(crate) struct HorizonProblem {
    pub lay: Layout,
    pub tc: f64,
    pub w_u: [f64; 6],
    pub w_e: [f64; 2],
    pub w_n: f64,
    pub refs: Vec<Point2>,
    pub grasp: Vec<Point2>,
    /// Arm-circle center fraction `½(1 + r_base/q̄₂)` per robot.
    pub kappa: Vec<f64>,
    /// Multiple of 2π in `φ + q1 + q3 − ψ` at `X⁰`, per robot.
    pub heading_offset: Vec<f64>,
    pub ineqs: Vec<Ineq>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl HorizonProblem {
    /// Body `m`'s circle center at knot `k`: bases, then arms, then the object.
    pub fn center(&self, x: &[f64], k: usize, m: usize) -> (Point2, CenterJac) {
        let n = self.lay.n;
        let z = Point2::ZERO;
        if m < n {
            let r = self.lay.robot(k, m);
            let c = Point2::new(x[r], x[r + 1]);
            (c, ([(r, Point2::new(1.0, 0.0)), (r + 1, Point2::new(0.0, 1.0)), (0, z), (0, z), (0, z)], 2))
        } else if m < 2 * n {
            let i = m - n;
            let r = self.lay.robot(k, i);
            let th = x[r + 2] + x[r + 3];
            let q2 = x[r + 4];
            let kap = self.kappa[i];
            let dir = Point2::from_angle(th);
            let c = Point2::new(x[r], x[r + 1]) + dir * (kap * q2);
            let dth = dir.perp() * (kap * q2);
            (
                c,
                (
                    [
                        (r, Point2::new(1.0, 0.0)),
                        (r + 1, Point2::new(0.0, 1.0)),
                        (r + 2, dth),
                        (r + 3, dth),
                        (r + 4, dir * kap),
                    ],
                    5,
                ),
            )
        } else {
            let o = self.lay.x(k);
            let c = Point2::new(x[o], x[o + 1]);
            (c, ([(o, Point2::new(1.0, 0.0)), (o + 1, Point2::new(0.0, 1.0)), (0, z), (0, z), (0, z)], 2))
        }
    }

    fn ineq_value(&self, x: &[f64], c: &Ineq) -> f64 {
        let (p, _) = self.center(x, c.k, c.body);
        match c.kind {
            Kind::Face(h) => c.offset - h.margin(p),
            Kind::Obstacle { center, reach } => reach + c.offset - p.dist(center),
        }
    }

    pub fn n_dyn(&self) -> usize {
        self.lay.nk * self.lay.su()
    }

    /// Human-readable location of the largest equality and inequality
    /// residuals, for diagnostics.
    pub fn describe_worst(&self, x: &[f64]) -> String {
        let mut eq = vec![0.0; self.n_eq()];
        let mut ineq = vec![0.0; self.n_ineq()];
        self.constraints(x, &mut eq, &mut ineq);
        let argmax = |v: &[f64], f: fn(f64) -> f64| {
            v.iter()
                .enumerate()
                .max_by(|a, b| f(*a.1).total_cmp(&f(*b.1)))
                .map(|(i, &v)| (i, v))
        };
        let mut out = String::new();
        if let Some((e, v)) = argmax(&eq, f64::abs) {
            let nd = self.n_dyn();
            if e < nd {
                let (k, rest) = (e / self.lay.su(), e % self.lay.su());
                out += &format!("eq dynamics k={k} robot={} comp={} value={v:.2e}; ", rest / 6, rest % 6);
            } else {
                let g = e - nd;
                let per = 3 * self.lay.n;
                out += &format!(
                    "eq grasp k={} robot={} row={} value={v:.2e}; ",
                    g / per + 1,
                    (g % per) / 3,
                    g % 3
                );
            }
        }
        if let Some((i, v)) = argmax(&ineq, |v| v) {
            let c = &self.ineqs[i];
            out += &format!("ineq k={} body={} {:?} value={v:.2e}", c.k, c.body, c.kind);
        }
        out
    }
}

impl NlpProblem for HorizonProblem {
    fn dim(&self) -> usize {
        self.lay.dim()
    }

    fn n_eq(&self) -> usize {
        self.n_dyn() + 3 * self.lay.n * self.lay.nk
    }

    fn n_ineq(&self) -> usize {
        self.ineqs.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let lay = self.lay;
        let mut j = 0.0;
        for k in 1..lay.nk {
            for i in 0..lay.n {
                let u = lay.u(k, i);
                for c in 0..6 {
                    j += self.w_u[c] * x[u + c] * x[u + c];
                }
            }
            let o = lay.x(k);
            let (ex, ey) = (x[o] - self.refs[k].x, x[o + 1] - self.refs[k].y);
            j += self.w_e[0] * ex * ex + self.w_e[1] * ey * ey;
        }
        let o = lay.x(lay.nk);
        let (ex, ey) = (x[o] - self.refs[lay.nk].x, x[o + 1] - self.refs[lay.nk].y);
        j + self.w_n * (ex * ex + ey * ey)
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) -> bool {
        g.iter_mut().for_each(|v| *v = 0.0);
        let lay = self.lay;
        for k in 1..lay.nk {
            for i in 0..lay.n {
                let u = lay.u(k, i);
                for c in 0..6 {
                    g[u + c] = 2.0 * self.w_u[c] * x[u + c];
                }
            }
            let o = lay.x(k);
            g[o] = 2.0 * self.w_e[0] * (x[o] - self.refs[k].x);
            g[o + 1] = 2.0 * self.w_e[1] * (x[o + 1] - self.refs[k].y);
        }
        let o = lay.x(lay.nk);
        g[o] = 2.0 * self.w_n * (x[o] - self.refs[lay.nk].x);
        g[o + 1] = 2.0 * self.w_n * (x[o + 1] - self.refs[lay.nk].y);
        true
    }

    fn constraints(&self, x: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
        let lay = self.lay;
        let mut e = 0;
        for k in 0..lay.nk {
            for i in 0..lay.n {
                let (r0, r1, u) = (lay.robot(k, i), lay.robot(k + 1, i), lay.u(k, i));
                for c in 0..6 {
                    eq[e] = x[r1 + c] - x[r0 + c] - self.tc * x[u + c];
                    e += 1;
                }
            }
        }
        for k in 1..=lay.nk {
            let o = lay.x(k);
            let (p, psi) = (Point2::new(x[o], x[o + 1]), x[o + 2]);
            for i in 0..lay.n {
                let r = lay.robot(k, i);
                let ee = Point2::new(x[r], x[r + 1]) + Point2::from_angle(x[r + 2] + x[r + 3]) * x[r + 4];
                let target = p + self.grasp[i].rotate(psi);
                eq[e] = ee.x - target.x;
                eq[e + 1] = ee.y - target.y;
                eq[e + 2] = x[r + 2] + x[r + 3] + x[r + 5] - psi - self.heading_offset[i];
                e += 3;
            }
        }
        for (v, c) in ineq.iter_mut().zip(&self.ineqs) {
            *v = self.ineq_value(x, c);
        }
    }

    fn constraint_jt(&self, x: &[f64], w_eq: &[f64], w_in: &[f64], out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|v| *v = 0.0);
        let lay = self.lay;
        let mut e = 0;
        for k in 0..lay.nk {
            for i in 0..lay.n {
                let (r0, r1, u) = (lay.robot(k, i), lay.robot(k + 1, i), lay.u(k, i));
                for c in 0..6 {
                    let w = w_eq[e];
                    out[r1 + c] += w;
                    out[r0 + c] -= w;
                    out[u + c] -= self.tc * w;
                    e += 1;
                }
            }
        }
        for k in 1..=lay.nk {
            let o = lay.x(k);
            let psi = x[o + 2];
            for i in 0..lay.n {
                let r = lay.robot(k, i);
                let th = x[r + 2] + x[r + 3];
                let q2 = x[r + 4];
                let (wx, wy, wh) = (w_eq[e], w_eq[e + 1], w_eq[e + 2]);
                e += 3;
                // ee − p − R(ψ)g.
                out[r] += wx;
                out[r + 1] += wy;
                let dth = Point2::from_angle(th).perp() * q2;
                let dq2 = Point2::from_angle(th);
                out[r + 2] += wx * dth.x + wy * dth.y;
                out[r + 3] += wx * dth.x + wy * dth.y;
                out[r + 4] += wx * dq2.x + wy * dq2.y;
                out[o] -= wx;
                out[o + 1] -= wy;
                let dpsi = self.grasp[i].rotate(psi).perp();
                out[o + 2] -= wx * dpsi.x + wy * dpsi.y;
                // φ + q1 + q3 − ψ.
                out[r + 2] += wh;
                out[r + 3] += wh;
                out[r + 5] += wh;
                out[o + 2] -= wh;
            }
        }
        for (w, c) in w_in.iter().zip(&self.ineqs) {
            if *w == 0.0 {
                continue;
            }
            let (p, (jac, len)) = self.center(x, c.k, c.body);
            let grad = match c.kind {
                Kind::Face(h) => h.normal,
                Kind::Obstacle { center, .. } => {
                    let d = p - center;
                    let nd = d.norm();
                    if nd > 1e-12 {
                        -(d / nd)
                    } else {
                        Point2::new(-1.0, 0.0)
                    }
                }
            };
            for &(idx, dc) in &jac[..len] {
                out[idx] += w * grad.dot(dc);
            }
        }
        true
    }
}

/// Bounds for every variable: `X⁰` pinned, tightened joint and control boxes.
pub(crate) fn variable_bounds(
    lay: Layout,
    x0: &[f64],
    spec: &FormationSpec,
    q3_center: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let mut lb = vec![f64::NEG_INFINITY; lay.dim()];
    let mut ub = vec![f64::INFINITY; lay.dim()];
    lb[..lay.sx()].copy_from_slice(&x0[..lay.sx()]);
    ub[..lay.sx()].copy_from_slice(&x0[..lay.sx()]);
    for i in 0..lay.n {
        let (qlo, qhi) = spec.q_bounds(i)?;
        // Shift the wrist box to the representation used at X⁰.
        let shift = q3_center[i] - 0.5 * (qlo[2] + qhi[2]);
        let r = &spec.robots[i];
        for k in 1..=lay.nk {
            let o = lay.robot(k, i);
            for j in 0..3 {
                let s = if j == 2 { shift } else { 0.0 };
                lb[o + 3 + j] = qlo[j] + s + JOINT_PAD;
                ub[o + 3 + j] = qhi[j] + s - JOINT_PAD;
            }
        }
        for k in 0..lay.nk {
            let u = lay.u(k, i);
            for j in 0..3 {
                lb[u + j] = r.base.u_min[j] * CONTROL_SCALE;
                ub[u + j] = r.base.u_max[j] * CONTROL_SCALE;
                lb[u + 3 + j] = r.arm.u_min[j] * CONTROL_SCALE;
                ub[u + 3 + j] = r.arm.u_max[j] * CONTROL_SCALE;
            }
        }
    }
    Ok((lb, ub))
}

/// Outward faces of a region as constraint kinds.
pub(crate) fn faces(region: &ConvexRegion) -> impl Iterator<Item = Kind> + '_ {
    region.halfspaces().iter().map(|h| Kind::Face(*h))
}

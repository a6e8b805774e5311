//! Kinematics of one mobile manipulator (holonomic base plus a planar
//! revolute-prismatic-revolute arm) and of the rigid formation that grasps
//! a shared object.
//!
//! Per-robot state is `[x, y, φ, q1, q2, q3]`, control is its time
//! derivative `[vx, vy, ω, q̇1, q̇2, q̇3]` with base velocities in the world
//! frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{
    point_polygon_signed_distance, validate_convex_polygon, wrap_angle, Circle, Cone2, Point2,
};

pub const STATE_DIM: usize = 6;
pub const CONTROL_DIM: usize = 6;

/// Default prismatic reach: sum of the three arm link lengths.
pub const DEFAULT_Q2_MAX: f64 = 0.100 + 0.125 + 0.120;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("singular arm: end effector coincides with the base")]
    SingularArm,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("robot {0} cannot fit inside its cone at any wrist angle")]
    ConeInfeasible(usize),
}

/// Joint and joint-rate limits of the reduced arm.
///
/// The wrist limits `q_min[2]`, `q_max[2]` are expressed relative to the
/// outward grasp ray (see [`FormationSpec::q3_bounds`]), which is the frame the
/// cone limits live in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub q_min: [f64; 3],
    pub q_max: [f64; 3],
    pub u_min: [f64; 3],
    pub u_max: [f64; 3],
}

impl Default for ArmSpec {
    fn default() -> Self {
        ArmSpec {
            q_min: [-PI / 2.0, 0.15, -PI],
            q_max: [PI / 2.0, DEFAULT_Q2_MAX, PI],
            u_min: [-0.5, -0.1, -0.5],
            u_max: [0.5, 0.1, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSpec {
    /// Footprint vertices in the body frame.
    pub footprint: Vec<Point2>,
    pub u_min: [f64; 3],
    pub u_max: [f64; 3],
}

impl Default for BaseSpec {
    fn default() -> Self {
        BaseSpec {
            footprint: vec![
                Point2::new(-0.1, -0.07),
                Point2::new(0.1, -0.07),
                Point2::new(0.1, 0.07),
                Point2::new(-0.1, 0.07),
            ],
            u_min: [-0.3, -0.3, -0.5],
            u_max: [0.3, 0.3, 0.5],
        }
    }
}

impl BaseSpec {
    /// Circumradius about the body origin; also the max vertex radius r_v.
    pub fn r_base(&self) -> f64 {
        self.footprint.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    /// Grasp point in the object frame.
    pub grasp: Point2,
    pub base: BaseSpec,
    pub arm: ArmSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    /// Object footprint in the object frame (origin at the CoM).
    pub object: Vec<Point2>,
    pub robots: Vec<RobotSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MmrState {
    pub p: Point2,
    pub phi: f64,
    pub q: [f64; 3],
}

impl MmrState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.p.x, self.p.y, self.phi, self.q[0], self.q[1], self.q[2]]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        MmrState {
            p: Point2::new(s[0], s[1]),
            phi: s[2],
            q: [s[3], s[4], s[5]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationConfig {
    pub p: Point2,
    pub psi: f64,
    pub robots: Vec<MmrState>,
}

/// Self-collision cone of one robot and the wrist limits it induces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub cone: Cone2,
    /// Angle from the grasp ray counter-clockwise to the cone's upper edge.
    pub beta1: f64,
    /// Angle from the grasp ray clockwise to the cone's lower edge.
    pub beta2: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

/// `p_i + q2 [cos(φ+q1), sin(φ+q1)]`.
pub fn ee_position(s: &MmrState) -> Point2 {
    s.p + Point2::from_angle(s.phi + s.q[0]) * s.q[1]
}

/// Arm joints that put the end effector at `p_ee` with world heading `psi`.
pub fn inverse_arm(p_base: Point2, phi: f64, p_ee: Point2, psi: f64) -> Result<[f64; 3], ModelError> {
    let d = p_ee - p_base;
    let q2 = d.norm();
    if !(q2 >= 1e-9) {
        return Err(ModelError::SingularArm);
    }
    let q1 = wrap_angle(d.angle() - phi);
    let q3 = wrap_angle(psi - phi - q1);
    Ok([q1, q2, q3])
}

/// One RK4 step of `ẋ = u` with `u` held constant over `tc`.
pub fn step(x: &[f64], u: &[f64], tc: f64) -> Vec<f64> {
    debug_assert_eq!(x.len(), u.len());
    let f = |_x: &[f64]| u.to_vec();
    let add = |a: &[f64], b: &[f64], h: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + h * bi).collect()
    };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, 0.5 * tc));
    let k3 = f(&add(x, &k2, 0.5 * tc));
    let k4 = f(&add(x, &k3, tc));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + tc / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

pub fn step_state(s: &MmrState, u: &[f64; CONTROL_DIM], tc: f64) -> MmrState {
    MmrState::from_slice(&step(&s.to_array(), u, tc))
}

/// Collision circles of a formation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyCircles {
    pub bases: Vec<Circle>,
    pub arms: Vec<Circle>,
    pub object: Circle,
}

impl BodyCircles {
    /// Bases, then arms, then the object.
    pub fn all(&self) -> Vec<Circle> {
        let mut v = self.bases.clone();
        v.extend_from_slice(&self.arms);
        v.push(self.object);
        v
    }
}

/// Center and radius of the arm circle for base `p_i`, end effector `p_ee`.
pub fn arm_circle(p_i: Point2, p_ee: Point2, r_base: f64, q2_max: f64) -> Result<Circle, ModelError> {
    if !(q2_max > r_base) {
        return Err(ModelError::InvalidSpec(format!(
            "arm reach {q2_max} does not exceed base radius {r_base}"
        )));
    }
    let c = p_i + (p_ee - p_i) * (0.5 * (1.0 + r_base / q2_max));
    Ok(Circle::new(c, 0.5 * (q2_max - r_base)))
}

pub fn bounding_circles(
    config: &FormationConfig,
    spec: &FormationSpec,
) -> Result<BodyCircles, ModelError> {
    let mut bases = Vec::with_capacity(spec.n());
    let mut arms = Vec::with_capacity(spec.n());
    for (s, r) in config.robots.iter().zip(&spec.robots) {
        let rb = r.base.r_base();
        bases.push(Circle::new(s.p, rb));
        arms.push(arm_circle(s.p, ee_position(s), rb, r.arm.q_max[1])?);
    }
    Ok(BodyCircles {
        bases,
        arms,
        object: Circle::new(config.p, spec.r_obj()),
    })
}

/// Wrist-angle limits from the cone geometry.
///
/// Returns `(α_lo, α_hi)`, bounds on the angle of the end-effector-to-base
/// vector measured from the outward grasp ray. A side whose arccos argument
/// falls outside `[-1, 1]` imposes no limit and is reported as `±π`.
pub fn cone_joint_limits(
    beta1: f64,
    beta2: f64,
    r_grasp: f64,
    r_v: f64,
    q2_max: f64,
) -> Result<(f64, f64), ModelError> {
    let side = |beta: f64| {
        let x = (r_grasp * beta.sin() - r_v) / q2_max;
        if (-1.0..=1.0).contains(&x) {
            PI / 2.0 + beta - x.acos()
        } else {
            PI
        }
    };
    let hi = side(beta1);
    let lo = -side(beta2);
    if lo >= hi {
        return Err(ModelError::ConeInfeasible(0));
    }
    Ok((lo, hi))
}

/// Picks the representative of angle `a` (mod 2π) closest to `center`.
pub fn unwrap_near(a: f64, center: f64) -> f64 {
    center + wrap_angle(a - center)
}

impl FormationSpec {
    pub fn n(&self) -> usize {
        self.robots.len()
    }

    /// Object circumradius about the CoM.
    pub fn r_obj(&self) -> f64 {
        self.object.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Upper bound on the distance from the CoM to any point of the formation.
    pub fn footprint_radius(&self) -> f64 {
        self.robots
            .iter()
            .map(|r| r.grasp.norm() + r.arm.q_max[1] + r.base.r_base())
            .fold(self.r_obj(), f64::max)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n() < 2 {
            return Err(ModelError::InvalidSpec(format!("need at least 2 robots, got {}", self.n())));
        }
        validate_convex_polygon(&self.object)
            .map_err(|e| ModelError::InvalidSpec(format!("object footprint: {e}")))?;
        for (i, r) in self.robots.iter().enumerate() {
            validate_convex_polygon(&r.base.footprint)
                .map_err(|e| ModelError::InvalidSpec(format!("robot {i} footprint: {e}")))?;
            if point_polygon_signed_distance(r.grasp, &self.object) > 1e-9 {
                return Err(ModelError::InvalidSpec(format!(
                    "robot {i} grasp point lies outside the object"
                )));
            }
            if r.grasp.norm() < 1e-9 {
                return Err(ModelError::InvalidSpec(format!("robot {i} grasps the CoM")));
            }
            for k in 0..3 {
                if !(r.arm.q_min[k] < r.arm.q_max[k]) {
                    return Err(ModelError::InvalidSpec(format!("robot {i} joint {k} limits")));
                }
                if !(r.arm.u_min[k] <= 0.0 && r.arm.u_max[k] >= 0.0)
                    || !(r.base.u_min[k] <= 0.0 && r.base.u_max[k] >= 0.0)
                {
                    return Err(ModelError::InvalidSpec(format!(
                        "robot {i} rate limits must bracket zero"
                    )));
                }
            }
            if !(r.arm.q_min[1] > 0.0) {
                return Err(ModelError::InvalidSpec(format!("robot {i} prismatic minimum must be > 0")));
            }
            if !(r.arm.q_max[1] > r.base.r_base()) {
                return Err(ModelError::InvalidSpec(format!(
                    "robot {i} arm reach {} does not exceed base radius {}",
                    r.arm.q_max[1],
                    r.base.r_base()
                )));
            }
        }
        let cones = self.cones(Point2::ZERO, 0.0)?;
        for i in 0..self.n() {
            self.delta_bounds_with(i, &cones[i])?;
        }
        Ok(())
    }

    /// World position of robot `i`'s grasp point for object pose `(p, ψ)`.
    pub fn grasp_point(&self, i: usize, p: Point2, psi: f64) -> Point2 {
        p + self.robots[i].grasp.rotate(psi)
    }

    /// Object-frame angle of robot `i`'s grasp ray.
    pub fn grasp_angle(&self, i: usize) -> f64 {
        self.robots[i].grasp.angle()
    }

    /// Self-collision cones for object pose `(p, ψ)`.
    pub fn cones(&self, p: Point2, psi: f64) -> Result<Vec<ConeSpec>, ModelError> {
        build_cones(p, psi, self)
    }

    fn delta_bounds_with(&self, i: usize, cone: &ConeSpec) -> Result<(f64, f64), ModelError> {
        let arm = &self.robots[i].arm;
        let lo = arm.q_min[2].max(cone.alpha_lo);
        let hi = arm.q_max[2].min(cone.alpha_hi);
        if lo >= hi {
            return Err(ModelError::ConeInfeasible(i));
        }
        Ok((lo, hi))
    }

    /// Cone-modified limits on robot `i`'s grasp-ray-relative wrist angle δ.
    ///
    /// The cones rotate rigidly with the object, so these are pose-independent.
    pub fn delta_bounds(&self, i: usize) -> Result<(f64, f64), ModelError> {
        let cones = self.cones(Point2::ZERO, 0.0)?;
        self.delta_bounds_with(i, &cones[i])
    }

    /// Offset `c_i` with `q3 = c_i - δ` on grasp-consistent configurations.
    pub fn q3_offset(&self, i: usize) -> f64 {
        PI - self.grasp_angle(i)
    }

    /// Cone-modified wrist joint limits `[lo, hi]`, with the interval's
    /// midpoint wrapped into (−π, π]; `hi` may exceed π.
    pub fn q3_bounds(&self, i: usize) -> Result<(f64, f64), ModelError> {
        let (dlo, dhi) = self.delta_bounds(i)?;
        let c = self.q3_offset(i);
        let mid = wrap_angle(c - 0.5 * (dlo + dhi));
        let half = 0.5 * (dhi - dlo);
        Ok((mid - half, mid + half))
    }

    /// Joint box for robot `i`'s arm, with the cone-modified wrist range.
    pub fn q_bounds(&self, i: usize) -> Result<([f64; 3], [f64; 3]), ModelError> {
        let arm = &self.robots[i].arm;
        let (lo3, hi3) = self.q3_bounds(i)?;
        Ok((
            [arm.q_min[0], arm.q_min[1], lo3],
            [arm.q_max[0], arm.q_max[1], hi3],
        ))
    }

    /// Grasp-consistent configuration for object pose `(p, ψ)`, per-robot
    /// reach `q2[i]` and grasp-relative wrist angle `delta[i]`. Base yaw is
    /// chosen so the shoulder sits at the middle of its range.
    pub fn formation_from_pose(
        &self,
        p: Point2,
        psi: f64,
        q2: &[f64],
        delta: &[f64],
    ) -> Result<FormationConfig, ModelError> {
        let mut robots = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let arm = &self.robots[i].arm;
            let ee = self.grasp_point(i, p, psi);
            let gamma = psi + self.grasp_angle(i);
            let base = ee + Point2::from_angle(gamma + delta[i]) * q2[i];
            let q1_mid = 0.5 * (arm.q_min[0] + arm.q_max[0]);
            let phi = wrap_angle((ee - base).angle() - q1_mid);
            let mut q = inverse_arm(base, phi, ee, psi)?;
            let (lo3, hi3) = self.q3_bounds(i)?;
            q[2] = unwrap_near(q[2], 0.5 * (lo3 + hi3));
            robots.push(MmrState { p: base, phi, q });
        }
        Ok(FormationConfig { p, psi, robots })
    }

    /// Largest end-effector position error against the grasp points.
    pub fn grasp_error(&self, c: &FormationConfig) -> f64 {
        c.robots
            .iter()
            .enumerate()
            .map(|(i, s)| ee_position(s).dist(self.grasp_point(i, c.p, c.psi)))
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `φ_i + q_i1 + q_i3` from `ψ`, modulo 2π.
    pub fn heading_error(&self, c: &FormationConfig) -> f64 {
        c.robots
            .iter()
            .map(|s| wrap_angle(s.phi + s.q[0] + s.q[2] - c.psi).abs())
            .fold(0.0, f64::max)
    }

    /// Whether every arm is within its (cone-modified) joint box, with `tol`.
    pub fn admissible(&self, c: &FormationConfig, tol: f64) -> bool {
        c.robots.iter().enumerate().all(|(i, s)| {
            let Ok((lo, hi)) = self.q_bounds(i) else {
                return false;
            };
            let q1_ok = s.q[0] >= lo[0] - tol && s.q[0] <= hi[0] + tol;
            let q2_ok = s.q[1] >= lo[1] - tol && s.q[1] <= hi[1] + tol;
            let mid = 0.5 * (lo[2] + hi[2]);
            let q3 = unwrap_near(s.q[2], mid);
            q1_ok && q2_ok && q3 >= lo[2] - tol && q3 <= hi[2] + tol
        })
    }

    /// World-frame footprint vertices of robot `i`.
    pub fn footprint_world(&self, i: usize, s: &MmrState) -> Vec<Point2> {
        self.robots[i]
            .base
            .footprint
            .iter()
            .map(|v| s.p + v.rotate(s.phi))
            .collect()
    }

    /// World-frame object outline.
    pub fn object_world(&self, p: Point2, psi: f64) -> Vec<Point2> {
        self.object.iter().map(|v| p + v.rotate(psi)).collect()
    }

    /// Regular `n`-gon object of circumradius `r_obj` grasped at its vertices
    /// (scaled to `r_grasp`), all robots sharing one base and arm spec. Two
    /// robots hold a square by opposite corners.
    pub fn regular(n: usize, r_obj: f64, r_grasp: f64, base: BaseSpec, arm: ArmSpec) -> Self {
        let w = 2.0 * PI / n as f64;
        let m = if n < 3 { 2 * n } else { n };
        let object = (0..m).map(|k| Point2::from_angle(2.0 * PI * k as f64 / m as f64) * r_obj).collect();
        let robots = (0..n)
            .map(|k| RobotSpec {
                grasp: Point2::from_angle(k as f64 * w) * r_grasp,
                base: base.clone(),
                arm,
            })
            .collect();
        FormationSpec { object, robots }
    }
}

/// Splits the plane around `p` into `n` equal cones, one per robot, each
/// containing its robot's grasp ray. The partition's rotation is chosen to
/// center the grasp rays in their cones in the least-squares sense.
pub fn build_cones(p: Point2, psi: f64, spec: &FormationSpec) -> Result<Vec<ConeSpec>, ModelError> {
    let n = spec.n();
    if n < 2 {
        return Err(ModelError::InvalidSpec("need at least 2 robots".into()));
    }
    let w = 2.0 * PI / n as f64;
    let mut order: Vec<usize> = (0..n).collect();
    let ang: Vec<f64> = (0..n).map(|i| spec.grasp_angle(i)).collect();
    order.sort_by(|&a, &b| ang[a].total_cmp(&ang[b]).then(a.cmp(&b)));
    // Unwrapped angles increasing from the first robot in angular order.
    let a0 = ang[order[0]];
    let unwrapped: Vec<f64> = order.iter().map(|&i| a0 + (ang[i] - a0).rem_euclid(2.0 * PI)).collect();
    let theta0 = unwrapped
        .iter()
        .enumerate()
        .map(|(k, a)| a - (k as f64 + 0.5) * w)
        .sum::<f64>()
        / n as f64;
    let mut out = vec![None; n];
    for (k, &i) in order.iter().enumerate() {
        let lo_edge = theta0 + k as f64 * w;
        let beta2 = unwrapped[k] - lo_edge;
        let beta1 = w - beta2;
        if !(beta1 > 1e-9 && beta2 > 1e-9) {
            return Err(ModelError::InvalidSpec(format!(
                "grasp ray of robot {i} does not fit an equal cone partition"
            )));
        }
        let r = &spec.robots[i];
        let (alpha_lo, alpha_hi) = cone_joint_limits(
            beta1,
            beta2,
            r.grasp.norm(),
            r.base.r_base(),
            r.arm.q_max[1],
        )
        .map_err(|_| ModelError::ConeInfeasible(i))?;
        let cone = Cone2::from_angles(p, psi + lo_edge, psi + lo_edge + w)
            .map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
        out[i] = Some(ConeSpec {
            cone,
            beta1,
            beta2,
            alpha_lo,
            alpha_hi,
        });
    }
    Ok(out.into_iter().map(|c| c.expect("every robot assigned")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pentagon() -> FormationSpec {
        FormationSpec::regular(5, 0.25, 0.25, BaseSpec::default(), ArmSpec::default())
    }

    /// 3×3 homogeneous transform composition: base pose, shoulder rotation,
    /// prismatic extension, wrist rotation.
    fn chain(s: &MmrState) -> (Point2, f64) {
        type M = [[f64; 3]; 3];
        let mul = |a: &M, b: &M| {
            let mut r = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        r[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            r
        };
        let rot = |t: f64| -> M { [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]] };
        let tr = |x: f64, y: f64| -> M { [[1.0, 0.0, x], [0.0, 1.0, y], [0.0, 0.0, 1.0]] };
        let m = mul(
            &mul(&mul(&tr(s.p.x, s.p.y), &rot(s.phi)), &mul(&rot(s.q[0]), &tr(s.q[1], 0.0))),
            &rot(s.q[2]),
        );
        (Point2::new(m[0][2], m[1][2]), m[1][0].atan2(m[0][0]))
    }

    #[test]
    fn ee_examples() {
        let s = MmrState { p: Point2::ZERO, phi: 0.0, q: [0.0, 1.0, 0.0] };
        assert!(ee_position(&s).dist(Point2::new(1.0, 0.0)) < 1e-15);
        let s = MmrState { p: Point2::ZERO, phi: PI / 2.0, q: [0.0, 1.0, 0.0] };
        assert!(ee_position(&s).dist(Point2::new(0.0, 1.0)) < 1e-15);
    }

    #[test]
    fn inverse_examples() {
        let q = inverse_arm(Point2::ZERO, 0.0, Point2::new(1.0, 0.0), 0.0).unwrap();
        assert_eq!(q, [0.0, 1.0, 0.0]);
        let q = inverse_arm(Point2::ZERO, 0.0, Point2::new(0.0, 1.0), PI / 2.0).unwrap();
        assert!((q[0] - PI / 2.0).abs() < 1e-15 && (q[1] - 1.0).abs() < 1e-15 && q[2].abs() < 1e-15);
        assert_eq!(
            inverse_arm(Point2::ZERO, 0.0, Point2::new(1e-10, 0.0), 0.0),
            Err(ModelError::SingularArm)
        );
    }

    #[test]
    fn step_examples() {
        let x = [0.0; 6];
        let u = [0.1; 6];
        let y = step(&x, &u, 0.25);
        assert!(y.iter().all(|v| (v - 0.025).abs() < 1e-15));
        let z = step(&[1.0, 2.0, 3.0], &[0.0; 3], 0.25);
        assert_eq!(z, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn step_matches_fine_euler() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tc = 0.25;
            let mut e = x.clone();
            for _ in 0..1000 {
                for k in 0..6 {
                    e[k] += u[k] * tc / 1000.0;
                }
            }
            let r = step(&x, &u, tc);
            for k in 0..6 {
                assert!((r[k] - e[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn arm_circle_example() {
        let c = arm_circle(Point2::ZERO, Point2::new(1.0, 0.0), 0.2, 1.0).unwrap();
        assert!(c.center.dist(Point2::new(0.6, 0.0)) < 1e-15);
        assert!((c.radius - 0.4).abs() < 1e-15);
        assert!(arm_circle(Point2::ZERO, Point2::new(1.0, 0.0), 0.4, 0.3).is_err());
    }

    #[test]
    fn arm_circle_covers_segment_at_full_reach() {
        let (rb, q2) = (0.122, 0.345);
        let base = Point2::new(1.0, 2.0);
        let ee = base + Point2::new(q2, 0.0);
        let c = arm_circle(base, ee, rb, q2).unwrap();
        for k in 0..=1000 {
            let s = rb + (q2 - rb) * k as f64 / 1000.0;
            let pt = base + Point2::new(s, 0.0);
            assert!(pt.dist(c.center) <= c.radius + 1e-12);
        }
    }

    #[test]
    fn object_circle_ignores_heading() {
        let spec = pentagon();
        let dl = vec![0.0; 5];
        let q2 = vec![0.3; 5];
        for psi in [0.0, 0.7, -2.0] {
            let cfg = spec.formation_from_pose(Point2::new(1.0, 1.0), psi, &q2, &dl).unwrap();
            let bc = bounding_circles(&cfg, &spec).unwrap();
            assert_eq!(bc.object.center, Point2::new(1.0, 1.0));
            assert!((bc.object.radius - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn pentagon_cones() {
        let spec = pentagon();
        let cones = spec.cones(Point2::ZERO, 0.0).unwrap();
        for (i, c) in cones.iter().enumerate() {
            assert!((c.cone.opening() - 2.0 * PI / 5.0).abs() < 1e-12);
            assert!((c.beta1 - PI / 5.0).abs() < 1e-12);
            assert!((c.beta2 - PI / 5.0).abs() < 1e-12);
            let ray = Point2::from_angle(spec.grasp_angle(i));
            assert!(c.cone.bisector().dist(ray) < 1e-12);
            assert!((c.alpha_hi + c.alpha_lo).abs() < 1e-12);
        }
    }

    #[test]
    fn two_robot_half_planes() {
        let spec = FormationSpec::regular(2, 0.3, 0.3, BaseSpec::default(), ArmSpec::default());
        let cones = spec.cones(Point2::ZERO, 0.0).unwrap();
        for c in &cones {
            assert!((c.cone.opening() - PI).abs() < 1e-12);
            assert!((c.beta1 - PI / 2.0).abs() < 1e-12 && (c.beta2 - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cones_rotate_with_heading() {
        let spec = pentagon();
        let a = spec.cones(Point2::ZERO, 0.0).unwrap();
        let b = spec.cones(Point2::ZERO, 0.4).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert!(ca.cone.edge_lo.rotate(0.4).dist(cb.cone.edge_lo) < 1e-12);
            assert!(ca.cone.edge_hi.rotate(0.4).dist(cb.cone.edge_hi) < 1e-12);
        }
    }

    #[test]
    fn cone_limit_examples() {
        let (lo, hi) = cone_joint_limits(0.6, 0.6, 0.6, 0.25, 0.5).unwrap();
        assert!((lo + hi).abs() < 1e-15);
        let (_, hi) = cone_joint_limits(PI / 2.0, PI / 2.0, 0.3, 0.0, 0.5).unwrap();
        assert!((hi - (PI - (0.3f64 / 0.5).acos())).abs() < 1e-12);
    }

    /// Largest δ that keeps a disc of radius `r_v` around the base, with the
    /// arm at full reach, on the inner side of the cone's upper edge line.
    /// Found by bisection over δ on explicit coordinates.
    pub(crate) fn bisect_alpha_hi(beta1: f64, r: f64, r_v: f64, q2: f64) -> f64 {
        // Grasp ray along +x from the apex at the origin.
        let edge = Point2::from_angle(beta1);
        let inward = -edge.perp();
        let ee = Point2::new(r, 0.0);
        let ok = |d: f64| (ee + Point2::from_angle(d) * q2).dot(inward) >= r_v;
        let (mut a, mut b) = (0.0, beta1 + PI / 2.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if ok(m) {
                a = m;
            } else {
                b = m;
            }
        }
        a
    }

    #[test]
    fn cone_limit_matches_bisection() {
        let (_, hi) = cone_joint_limits(PI / 5.0, PI / 5.0, 0.6, 0.25, 0.5).unwrap();
        assert!((hi - bisect_alpha_hi(PI / 5.0, 0.6, 0.25, 0.5)).abs() < 1e-3);
    }

    #[test]
    fn formation_from_pose_is_grasp_consistent() {
        let spec = pentagon();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let psi = rng.random_range(-PI..PI);
            let q2: Vec<f64> = (0..5).map(|_| rng.random_range(0.15..0.345)).collect();
            let dl: Vec<f64> = (0..5)
                .map(|i| {
                    let (lo, hi) = spec.delta_bounds(i).unwrap();
                    rng.random_range(lo..hi)
                })
                .collect();
            let cfg = spec.formation_from_pose(p, psi, &q2, &dl).unwrap();
            assert!(spec.grasp_error(&cfg) < 1e-12);
            assert!(spec.heading_error(&cfg) < 1e-12);
            assert!(spec.admissible(&cfg, 1e-9));
        }
    }

    #[test]
    fn default_pentagon_spec_is_valid() {
        pentagon().validate().unwrap();
    }

    proptest! {
        #[test]
        fn ee_matches_chain(x in -5.0f64..5.0, y in -5.0f64..5.0, phi in -PI..PI,
                            q1 in -PI..PI, q2 in 0.05f64..2.0, q3 in -PI..PI) {
            let s = MmrState { p: Point2::new(x, y), phi, q: [q1, q2, q3] };
            let (pos, heading) = chain(&s);
            prop_assert!(ee_position(&s).dist(pos) < 1e-12);
            prop_assert!(wrap_angle(phi + q1 + q3 - heading).abs() < 1e-12);
        }

        #[test]
        fn inverse_round_trip(x in -5.0f64..5.0, y in -5.0f64..5.0, phi in -PI..PI,
                              q1 in -3.0f64..3.0, q2 in 0.05f64..2.0, q3 in -3.0f64..3.0) {
            let s = MmrState { p: Point2::new(x, y), phi, q: [q1, q2, q3] };
            let psi = phi + q1 + q3;
            let q = inverse_arm(s.p, phi, ee_position(&s), psi).unwrap();
            prop_assert!((q[0] - q1).abs() < 1e-10);
            prop_assert!((q[1] - q2).abs() < 1e-10);
            prop_assert!((q[2] - q3).abs() < 1e-10);
            let back = MmrState { q, ..s };
            prop_assert!(ee_position(&back).dist(ee_position(&s)) < 1e-12);
        }

        #[test]
        fn step_is_additive(x in proptest::collection::vec(-10.0f64..10.0, 6),
                            u in proptest::collection::vec(-1.0f64..1.0, 6), t in 0.01f64..1.0) {
            let half = step(&step(&x, &u, t / 2.0), &u, t / 2.0);
            let full = step(&x, &u, t);
            for k in 0..6 {
                prop_assert!((half[k] - full[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cone_safety_sampling() {
        // Bases placed inside the cone-modified wrist range keep every
        // footprint vertex inside their cone, for any base yaw.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [3usize, 4, 5, 6] {
            let spec = FormationSpec::regular(n, 0.3, 0.3, BaseSpec::default(), ArmSpec::default());
            let cones = spec.cones(Point2::ZERO, 0.0).unwrap();
            for _ in 0..2500 {
                let i = rng.random_range(0..n);
                let (lo, hi) = spec.delta_bounds(i).unwrap();
                let d = rng.random_range(lo + 1e-6..hi - 1e-6);
                let q2 = rng.random_range(0.15..DEFAULT_Q2_MAX);
                let ee = spec.grasp_point(i, Point2::ZERO, 0.0);
                let base = ee + Point2::from_angle(spec.grasp_angle(i) + d) * q2;
                let phi = rng.random_range(-PI..PI);
                let s = MmrState { p: base, phi, q: [0.0, q2, 0.0] };
                for v in spec.footprint_world(i, &s) {
                    assert!(cones[i].cone.contains(v, 1e-12), "n={n} robot {i} δ={d} q2={q2}");
                }
            }
        }
    }
}

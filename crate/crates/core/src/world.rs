//! Workspace, static obstacles and scripted dynamic obstacles.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{
    ensure_ccw, point_in_convex, point_polygon_signed_distance, validate_convex_polygon, Circle,
    ConvexRegion, GeomError, Point2,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

impl From<GeomError> for WorldError {
    fn from(e: GeomError) -> Self {
        WorldError::Validation(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticObstacle {
    pub id: usize,
    /// Counter-clockwise convex vertex list.
    pub shape: Vec<Point2>,
}

impl StaticObstacle {
    pub fn new(id: usize, shape: Vec<Point2>) -> Result<Self, WorldError> {
        validate_convex_polygon(&shape)
            .map_err(|e| WorldError::Validation(format!("static obstacle {id}: {e}")))?;
        Ok(StaticObstacle {
            id,
            shape: ensure_ccw(shape),
        })
    }

    /// Distance from `p` to the obstacle, negative inside.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        point_polygon_signed_distance(p, &self.shape)
    }
}

/// Motion script of a dynamic obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MotionScript {
    /// `p(t) = p0 + v0 t`.
    Linear { p0: Point2, v0: Point2 },
    /// `v(t) = A [cos(wt), -sin(wt)]`, integrated from `p0`.
    Curvilinear {
        p0: Point2,
        amplitude: f64,
        rate: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub id: usize,
    pub radius: f64,
    pub script: MotionScript,
}

/// True position and velocity of `obs` at time `t`.
pub fn dynamic_state(obs: &DynamicObstacle, t: f64) -> (Point2, Point2) {
    match obs.script {
        MotionScript::Linear { p0, v0 } => (p0 + v0 * t, v0),
        MotionScript::Curvilinear {
            p0,
            amplitude: a,
            rate: w,
        } => {
            let (s, c) = (w * t).sin_cos();
            let v = Point2::new(a * c, -a * s);
            let p = if w.abs() < 1e-12 {
                p0 + Point2::new(a * t, -0.5 * a * w * t * t)
            } else {
                p0 + Point2::new(s, c - 1.0) * (a / w)
            };
            (p, v)
        }
    }
}

/// Constant-velocity prediction `p + v k T_c` for `k = 1..=n`.
pub fn predict_positions(p: Point2, v: Point2, n: usize, tc: f64) -> Vec<Point2> {
    (1..=n).map(|k| p + v * (k as f64 * tc)).collect()
}

/// What the planner knows about a dynamic obstacle at the start of a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleEstimate {
    pub id: usize,
    pub radius: f64,
    pub position: Point2,
    pub velocity: Point2,
}

impl ObstacleEstimate {
    pub fn predict(&self, n: usize, tc: f64) -> Vec<Point2> {
        predict_positions(self.position, self.velocity, n, tc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub bounds: ConvexRegion,
    pub statics: Vec<StaticObstacle>,
    pub dynamics: Vec<DynamicObstacle>,
    pub start: Point2,
    pub goal: Point2,
}

impl World {
    /// Builds a world and checks that start and goal lie in free space.
    pub fn new(
        bounds: ConvexRegion,
        statics: Vec<StaticObstacle>,
        dynamics: Vec<DynamicObstacle>,
        start: Point2,
        goal: Point2,
    ) -> Result<Self, WorldError> {
        let w = World {
            bounds,
            statics,
            dynamics,
            start,
            goal,
        };
        let mut problems = w.violations();
        if problems.is_empty() {
            Ok(w)
        } else {
            Err(WorldError::Validation(problems.remove(0)))
        }
    }

    /// All invariant violations, for reporting.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !p.is_finite() {
                out.push(format!("{name} is not finite"));
                continue;
            }
            if self.bounds.margin(p) <= 0.0 {
                out.push(format!("{name} ({}, {}) is outside the workspace bounds", p.x, p.y));
            }
            for o in &self.statics {
                if o.signed_distance(p) <= 0.0 {
                    out.push(format!(
                        "{name} ({}, {}) lies inside static obstacle {}",
                        p.x, p.y, o.id
                    ));
                }
            }
        }
        for d in &self.dynamics {
            if !(d.radius > 0.0) {
                out.push(format!("dynamic obstacle {} has non-positive radius", d.id));
            }
        }
        out
    }

    /// Clearance of a point from statics and walls; negative when in collision.
    pub fn static_clearance(&self, p: Point2) -> f64 {
        let walls = self.bounds.margin(p);
        self.statics
            .iter()
            .map(|o| o.signed_distance(p))
            .fold(walls, f64::min)
    }

    /// Clearance of a circle from statics and walls.
    pub fn circle_clearance(&self, c: &Circle) -> f64 {
        self.static_clearance(c.center) - c.radius
    }

    pub fn in_free_space(&self, p: Point2) -> bool {
        self.bounds.contains(p, 0.0) && !self.statics.iter().any(|o| point_in_convex(p, &o.shape))
    }

    /// True positions of all dynamic obstacles at time `t`.
    pub fn dynamic_circles(&self, t: f64) -> Vec<(usize, Circle)> {
        self.dynamics
            .iter()
            .map(|d| (d.id, Circle::new(dynamic_state(d, t).0, d.radius)))
            .collect()
    }

    /// Obstacle estimates available to the planner at time `t` from a
    /// formation at `observer`. Obstacles whose centers lie beyond
    /// `sensing_radius` are not reported. With `noise_std > 0` each estimated
    /// position and velocity component gets independent Gaussian noise.
    pub fn sense<R: Rng + ?Sized>(
        &self,
        t: f64,
        observer: Point2,
        sensing_radius: f64,
        noise_std: f64,
        rng: &mut R,
    ) -> Vec<ObstacleEstimate> {
        let noise = (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).expect("finite std"));
        let mut out = Vec::new();
        for d in &self.dynamics {
            let (mut p, mut v) = dynamic_state(d, t);
            if p.dist(observer) > sensing_radius {
                continue;
            }
            if let Some(n) = &noise {
                p += Point2::new(n.sample(rng), n.sample(rng));
                v += Point2::new(n.sample(rng), n.sample(rng));
            }
            out.push(ObstacleEstimate {
                id: d.id,
                radius: d.radius,
                position: p,
                velocity: v,
            });
        }
        out
    }
}

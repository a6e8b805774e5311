//! Piecewise cubic Bézier reference, reparameterized by arc length.

use serde::{Deserialize, Serialize};

use crate::geom2d::{ConvexRegion, Point2};

/// Arc-length table resolution per segment.
const TABLE_STEPS: usize = 128;
/// Containment samples per segment.
const CHECK_SAMPLES: usize = 200;
/// Tangent halvings before a segment falls back to a straight line.
const MAX_HALVINGS: usize = 5;

const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

pub fn bezier_point(c: &[Point2; 4], u: f64) -> Point2 {
    let v = 1.0 - u;
    c[0] * (v * v * v) + c[1] * (3.0 * v * v * u) + c[2] * (3.0 * v * u * u) + c[3] * (u * u * u)
}

pub fn bezier_derivative(c: &[Point2; 4], u: f64) -> Point2 {
    let v = 1.0 - u;
    (c[1] - c[0]) * (3.0 * v * v) + (c[2] - c[1]) * (6.0 * v * u) + (c[3] - c[2]) * (3.0 * u * u)
}

fn speed_integral(c: &[Point2; 4], a: f64, b: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    (0..5).map(|k| GL_W[k] * bezier_derivative(c, m + h * GL_X[k]).norm()).sum::<f64>() * h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RefData {
    segments: Vec<[Point2; 4]>,
    v_op: f64,
}

/// Object CoM reference `p_r(t)`: the curve traversed at constant speed
/// `v_op`, held at the final point after `T = L / v_op`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RefData", into = "RefData")]
pub struct ReferenceTrajectory {
    segments: Vec<[Point2; 4]>,
    v_op: f64,
    /// Cumulative arc length at each table knot, per segment.
    table: Vec<Vec<f64>>,
    /// Arc length at the start of each segment.
    offsets: Vec<f64>,
    length: f64,
}

impl From<RefData> for ReferenceTrajectory {
    fn from(d: RefData) -> Self {
        ReferenceTrajectory::new(d.segments, d.v_op)
    }
}

impl From<ReferenceTrajectory> for RefData {
    fn from(r: ReferenceTrajectory) -> Self {
        RefData {
            segments: r.segments,
            v_op: r.v_op,
        }
    }
}

impl ReferenceTrajectory {
    pub fn new(segments: Vec<[Point2; 4]>, v_op: f64) -> Self {
        assert!(!segments.is_empty() && v_op > 0.0);
        let mut table = Vec::with_capacity(segments.len());
        let mut offsets = Vec::with_capacity(segments.len());
        let mut total = 0.0;
        for c in &segments {
            offsets.push(total);
            let mut cum = Vec::with_capacity(TABLE_STEPS + 1);
            let mut s = 0.0;
            cum.push(0.0);
            for j in 0..TABLE_STEPS {
                s += speed_integral(c, j as f64 / TABLE_STEPS as f64, (j + 1) as f64 / TABLE_STEPS as f64);
                cum.push(s);
            }
            total += s;
            table.push(cum);
        }
        ReferenceTrajectory {
            segments,
            v_op,
            table,
            offsets,
            length: total,
        }
    }

    /// Stationary reference at `p`.
    pub fn stationary(p: Point2, v_op: f64) -> Self {
        Self::new(vec![[p; 4]], v_op)
    }

    pub fn segments(&self) -> &[[Point2; 4]] {
        &self.segments
    }

    pub fn v_op(&self) -> f64 {
        self.v_op
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Nominal duration `T = L / v_op`.
    pub fn duration(&self) -> f64 {
        self.length / self.v_op
    }

    /// Time at which the reference enters segment `k`.
    pub fn segment_start_time(&self, k: usize) -> f64 {
        self.offsets[k] / self.v_op
    }

    /// Segment being traversed at time `t` (the last one once `t >= T`).
    pub fn segment_at(&self, t: f64) -> usize {
        let s = self.v_op * t;
        if s >= self.length {
            return self.segments.len() - 1;
        }
        match self.offsets.partition_point(|&o| o <= s) {
            0 => 0,
            i => i - 1,
        }
    }

    pub fn start(&self) -> Point2 {
        self.segments[0][0]
    }

    pub fn end(&self) -> Point2 {
        self.segments[self.segments.len() - 1][3]
    }

    /// Segment index and curve parameter at arc length `s` in `[0, L)`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let k = match self.offsets.partition_point(|&o| o <= s) {
            0 => 0,
            i => i - 1,
        };
        let c = &self.segments[k];
        let cum = &self.table[k];
        let local = (s - self.offsets[k]).clamp(0.0, cum[TABLE_STEPS]);
        let j = cum.partition_point(|&v| v <= local).clamp(1, TABLE_STEPS) - 1;
        let (mut a, mut b) = (j as f64 / TABLE_STEPS as f64, (j + 1) as f64 / TABLE_STEPS as f64);
        let target = local - cum[j];
        let span = cum[j + 1] - cum[j];
        if span <= 0.0 {
            return (k, a);
        }
        let u0 = a;
        let mut u = a + (b - a) * target / span;
        // Safeguarded Newton on the arc-length equation.
        for _ in 0..30 {
            let f = speed_integral(c, u0, u) - target;
            if f.abs() < 1e-13 {
                break;
            }
            if f > 0.0 {
                b = u;
            } else {
                a = u;
            }
            let d = bezier_derivative(c, u).norm();
            let next = if d > 1e-12 { u - f / d } else { f64::NAN };
            u = if next > a && next < b { next } else { 0.5 * (a + b) };
        }
        (k, u)
    }

    /// `p_r(t)`; exact at both ends.
    pub fn position(&self, t: f64) -> Point2 {
        let s = self.v_op * t;
        if s <= 0.0 {
            return self.start();
        }
        if s >= self.length {
            return self.end();
        }
        let (k, u) = self.locate(s);
        bezier_point(&self.segments[k], u)
    }

    /// `ṗ_r(t)`: speed `v_op` along the curve, zero outside `(0, T)`.
    pub fn velocity(&self, t: f64) -> Point2 {
        let s = self.v_op * t;
        if s < 0.0 || s >= self.length {
            return Point2::ZERO;
        }
        let (k, u) = self.locate(s);
        let c = &self.segments[k];
        let d = bezier_derivative(c, u);
        match d.normalized().or_else(|| (c[3] - c[0]).normalized()) {
            Some(dir) => dir * self.v_op,
            None => Point2::ZERO,
        }
    }
}

fn in_any(p: Point2, hosts: &[ConvexRegion]) -> bool {
    hosts.is_empty() || hosts.iter().any(|r| r.contains(p, 1e-9))
}

/// Smooths a waypoint path into one cubic Bézier segment per edge.
///
/// Tangents follow the Catmull-Rom rule (one-sided at the ends). A segment
/// whose samples leave the union of its edge's `hosts` has its tangents
/// halved, up to five times, and then becomes a straight line. An empty
/// `hosts` list disables the check for that edge. Repeated waypoints give
/// zero-length segments, so segment `k` always belongs to edge `k`.
pub fn smooth_path(pts: &[Point2], hosts: &[Vec<ConvexRegion>], v_op: f64) -> ReferenceTrajectory {
    assert!(!pts.is_empty());
    if pts.len() == 1 {
        return ReferenceTrajectory::stationary(pts[0], v_op);
    }
    let n = pts.len() - 1;
    let tangent = |k: usize| -> Point2 {
        if k == 0 {
            pts[1] - pts[0]
        } else if k == n {
            pts[n] - pts[n - 1]
        } else {
            (pts[k + 1] - pts[k - 1]) * 0.5
        }
    };
    let mut segments = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = (pts[k], pts[k + 1]);
        if a.dist(b) <= 1e-12 {
            segments.push([a; 4]);
            continue;
        }
        let hs: &[ConvexRegion] = hosts.get(k).map(|v| v.as_slice()).unwrap_or(&[]);
        let (ma, mb) = (tangent(k), tangent(k + 1));
        let mut scale = 1.0;
        let mut chosen = None;
        for _ in 0..=MAX_HALVINGS {
            let c = [a, a + ma * (scale / 3.0), b - mb * (scale / 3.0), b];
            if (0..=CHECK_SAMPLES).all(|j| in_any(bezier_point(&c, j as f64 / CHECK_SAMPLES as f64), hs)) {
                chosen = Some(c);
                break;
            }
            scale *= 0.5;
        }
        segments.push(chosen.unwrap_or([a, a + (b - a) / 3.0, b - (b - a) / 3.0, b]));
    }
    ReferenceTrajectory::new(segments, v_op)
}

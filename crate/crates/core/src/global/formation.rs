//! Formation poses at region intersections.

use serde::{Deserialize, Serialize};

use crate::geom2d::{Circle, ConvexRegion, Point2};
use crate::model::{bounding_circles, FormationConfig, FormationSpec, ModelError};
use crate::nlp::{solve, NlpProblem, SolverOptions};

/// Extra margin inside the solver so accepted points clear `d_safe` exactly.
const SOLVER_PAD: f64 = 2e-4;
/// Largest constraint violation of an accepted pose.
pub const POSE_FEAS_TOL: f64 = 1e-4;

/// Whether every circle clears every face of `region` by `d_safe`, and the
/// smallest clearance `b − aᵀc − r − d_safe` over faces and circles.
pub fn contain_circles(region: &ConvexRegion, circles: &[Circle], d_safe: f64) -> (bool, f64) {
    let mut worst = f64::INFINITY;
    for c in circles {
        for h in region.halfspaces() {
            worst = worst.min(h.margin(c.center) - c.radius - d_safe);
        }
    }
    (worst >= 0.0, worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationNode {
    pub config: FormationConfig,
    /// Regions the node was solved for: two at an intersection, one at start/goal.
    pub hosts: Vec<usize>,
    /// Host region that contains every body circle.
    pub container: usize,
    /// `‖p_g − p‖² + ‖p_s − p‖²` at the solution, m².
    pub cost: f64,
    /// Worst containment margin against `container`.
    pub margin: f64,
}

/// Pose variables: `[p.x, p.y, ψ, q2_0.., δ_0..]`. Bases are placed from the
/// grasp points, so grasp equalities hold by construction.
struct PoseProblem<'a> {
    spec: &'a FormationSpec,
    com_region: &'a ConvexRegion,
    container: &'a ConvexRegion,
    d_safe: f64,
    p_s: Point2,
    p_g: Point2,
    /// Fixed CoM for start/goal nodes; the cost then pulls ψ toward `psi_ref`.
    fixed: Option<Point2>,
    psi_ref: f64,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl PoseProblem<'_> {
    fn config(&self, x: &[f64]) -> Result<FormationConfig, ModelError> {
        let n = self.spec.n();
        self.spec
            .formation_from_pose(Point2::new(x[0], x[1]), x[2], &x[3..3 + n], &x[3 + n..3 + 2 * n])
    }
}

impl NlpProblem for PoseProblem<'_> {
    fn dim(&self) -> usize {
        3 + 2 * self.spec.n()
    }

    fn n_ineq(&self) -> usize {
        self.com_region.halfspaces().len()
            + (2 * self.spec.n() + 1) * self.container.halfspaces().len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let p = Point2::new(x[0], x[1]);
        match self.fixed {
            Some(_) => (x[2] - self.psi_ref).powi(2),
            None => (p - self.p_g).norm_sq() + (p - self.p_s).norm_sq(),
        }
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) -> bool {
        g.iter_mut().for_each(|v| *v = 0.0);
        match self.fixed {
            Some(_) => g[2] = 2.0 * (x[2] - self.psi_ref),
            None => {
                g[0] = 2.0 * (x[0] - self.p_g.x) + 2.0 * (x[0] - self.p_s.x);
                g[1] = 2.0 * (x[1] - self.p_g.y) + 2.0 * (x[1] - self.p_s.y);
            }
        }
        true
    }

    fn constraints(&self, x: &[f64], _eq: &mut [f64], ineq: &mut [f64]) {
        let p = Point2::new(x[0], x[1]);
        let mut k = 0;
        for h in self.com_region.halfspaces() {
            ineq[k] = SOLVER_PAD - h.margin(p);
            k += 1;
        }
        let circles = match self.config(x).and_then(|c| bounding_circles(&c, self.spec)) {
            Ok(b) => b.all(),
            Err(_) => {
                ineq[k..].iter_mut().for_each(|v| *v = f64::NAN);
                return;
            }
        };
        for c in &circles {
            for h in self.container.halfspaces() {
                ineq[k] = c.radius + self.d_safe + SOLVER_PAD - h.margin(c.center);
                k += 1;
            }
        }
    }
}

/// Inputs shared by every pose solve of one planning run.
#[derive(Debug, Clone, Copy)]
pub struct PoseContext<'a> {
    pub spec: &'a FormationSpec,
    pub p_s: Point2,
    pub p_g: Point2,
    pub d_safe: f64,
    /// Preferred heading; the first multi-start and the start/goal cost use it.
    pub psi_ref: f64,
    pub opts: SolverOptions,
}

/// Solves one smooth subproblem from several headings; best feasible wins.
fn solve_pose(
    ctx: &PoseContext<'_>,
    com_region: &ConvexRegion,
    container: &ConvexRegion,
    fixed: Option<Point2>,
) -> Result<Option<(FormationConfig, f64, f64)>, ModelError> {
    let spec = ctx.spec;
    let n = spec.n();
    let mut lb = vec![f64::NEG_INFINITY; 3 + 2 * n];
    let mut ub = vec![f64::INFINITY; 3 + 2 * n];
    if let Some(p) = fixed {
        lb[0] = p.x;
        ub[0] = p.x;
        lb[1] = p.y;
        ub[1] = p.y;
    }
    let mut delta_mid = vec![0.0; n];
    for i in 0..n {
        let arm = &spec.robots[i].arm;
        lb[3 + i] = arm.q_min[1];
        ub[3 + i] = arm.q_max[1];
        let (dlo, dhi) = spec.delta_bounds(i)?;
        lb[3 + n + i] = dlo;
        ub[3 + n + i] = dhi;
        delta_mid[i] = 0.5 * (dlo + dhi);
    }
    let prob = PoseProblem {
        spec,
        com_region,
        container,
        d_safe: ctx.d_safe,
        p_s: ctx.p_s,
        p_g: ctx.p_g,
        fixed,
        psi_ref: ctx.psi_ref,
        lb: lb.clone(),
        ub: ub.clone(),
    };
    let p0 = fixed.unwrap_or_else(|| com_region.chebyshev().0);
    let sector = std::f64::consts::TAU / n as f64;
    let mut best: Option<(FormationConfig, f64, f64)> = None;
    let mut best_key: Option<f64> = None;
    for k in 0..3 {
        let mut x0 = vec![p0.x, p0.y, ctx.psi_ref + sector * k as f64 / 3.0];
        x0.extend((0..n).map(|i| 0.5 * (lb[3 + i] + ub[3 + i])));
        x0.extend_from_slice(&delta_mid);
        let sol = match solve(&prob, &x0, &ctx.opts) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("pose solve failed: {e}");
                continue;
            }
        };
        if sol.violation > POSE_FEAS_TOL {
            continue;
        }
        let config = prob.config(&sol.x)?;
        let p = config.p;
        let circles = bounding_circles(&config, spec)?.all();
        let (ok, margin) = contain_circles(container, &circles, ctx.d_safe);
        if !ok || !com_region.contains(p, 0.0) {
            continue;
        }
        let cost = (p - ctx.p_g).norm_sq() + (p - ctx.p_s).norm_sq();
        if best_key.is_none_or(|b| sol.objective < b - 1e-12) {
            best_key = Some(sol.objective);
            best = Some((config, cost, margin));
        }
    }
    Ok(best)
}

/// Formation pose minimizing `‖p_g − p‖² + ‖p_s − p‖²` with the CoM in
/// `intersection` and every body circle inside one host region with `d_safe`.
///
/// Tries the intersection itself as the container first, then each host;
/// the cheapest feasible pose wins, ties going to the earlier container.
/// `Ok(None)` means infeasible.
pub fn formation_pose_opt(
    ctx: &PoseContext<'_>,
    intersection: &ConvexRegion,
    hosts: [(usize, &ConvexRegion); 2],
) -> Result<Option<FormationNode>, ModelError> {
    let mut best: Option<FormationNode> = None;
    let candidates = [
        (hosts[0].0, intersection),
        (hosts[0].0, hosts[0].1),
        (hosts[1].0, hosts[1].1),
    ];
    for (k, (id, container)) in candidates.into_iter().enumerate() {
        if let Some((config, cost, margin)) = solve_pose(ctx, intersection, container, None)? {
            if best.as_ref().is_none_or(|b| cost < b.cost - 1e-9) {
                best = Some(FormationNode {
                    config,
                    hosts: vec![hosts[0].0, hosts[1].0],
                    container: id,
                    cost,
                    margin,
                });
            }
            // A pose valid in the intersection is valid in both hosts.
            if k == 0 {
                break;
            }
        }
    }
    Ok(best)
}

/// Start or goal formation with the CoM fixed at `p`, contained in `region`.
pub fn fixed_pose(
    ctx: &PoseContext<'_>,
    p: Point2,
    region: (usize, &ConvexRegion),
) -> Result<Option<FormationNode>, ModelError> {
    if !region.1.contains(p, 0.0) {
        return Ok(None);
    }
    Ok(solve_pose(ctx, region.1, region.1, Some(p))?.map(|(config, cost, margin)| FormationNode {
        config,
        hosts: vec![region.0],
        container: region.0,
        cost,
        margin,
    }))
}

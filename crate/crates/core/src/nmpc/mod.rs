//! Receding-horizon local planner: one multiple-shooting NLP per cycle over
//! the formation states and per-robot controls.

mod problem;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{wrap_angle, Circle, ConvexRegion, Point2};
use crate::global::{contain_circles, PlanFile, ReferenceTrajectory};
use crate::model::{
    bounding_circles, inverse_arm, unwrap_near, FormationConfig, FormationSpec, MmrState, ModelError,
    CONTROL_DIM,
};
use crate::nlp::{solve, NlpError, NlpProblem, SolveStatus, SolverOptions};
use crate::params::PlannerParams;
use crate::world::ObstacleEstimate;

use problem::{faces, variable_bounds, HorizonProblem, Ineq, Kind, Layout, CONSTRAINT_PAD};

/// Post-solve tolerance on containment and obstacle margins, m.
pub const MARGIN_TOL: f64 = 1e-4;
/// Post-solve tolerance on joint, control and grasp errors.
pub const BOX_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NmpcError {
    #[error("horizon plan infeasible (constraint violation {violation:.3e})")]
    PlanInfeasible { violation: f64 },
    #[error("initial formation is not grasp-consistent (error {0:.3e} m)")]
    InconsistentInitial(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] NlpError),
}

/// Ordered tracking regions and, per reference segment, the index of the
/// region that segment is tracked in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub regions: Vec<ConvexRegion>,
    pub segment_region: Vec<usize>,
    /// Global-path node formations, one per reference waypoint; guides the
    /// initial guess when present.
    #[serde(default)]
    pub node_configs: Vec<FormationConfig>,
}

impl Corridor {
    pub fn from_plan(plan: &PlanFile) -> Self {
        Corridor {
            regions: plan.corridor(),
            segment_region: plan.path.edge_corridor.clone(),
            node_configs: plan.path.nodes.iter().map(|&k| plan.graph.nodes[k].config.clone()).collect(),
        }
    }

    /// One region for the whole reference.
    pub fn single(region: ConvexRegion, segments: usize) -> Self {
        Corridor {
            regions: vec![region],
            segment_region: vec![0; segments],
            node_configs: Vec::new(),
        }
    }

    /// Corridor index the reference is in at time `t`.
    pub fn reference_index(&self, reference: &ReferenceTrajectory, t: f64) -> usize {
        let seg = reference.segment_at(t);
        self.segment_region.get(seg).copied().unwrap_or(self.regions.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPlan {
    pub t0: f64,
    /// `X⁰ … Xᴺ`.
    pub states: Vec<FormationConfig>,
    /// `u⁰ … uᴺ⁻¹`, one 6-vector per robot.
    pub controls: Vec<Vec<[f64; CONTROL_DIM]>>,
    /// Corridor index per knot.
    pub regions: Vec<usize>,
    /// Knots additionally held inside the next corridor region.
    pub handover: Vec<bool>,
    pub status: SolveStatus,
    /// Tracking cost of the returned plan.
    pub objective: f64,
    pub violation: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub warm_started: bool,
    /// Smallest static clearance beyond `d_safe` over knots 1..N.
    pub min_static_margin: f64,
    /// Smallest predicted obstacle clearance beyond `d_safe,dyn` over knots 1..N.
    pub min_dynamic_margin: f64,
}

impl HorizonPlan {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Corridor floor for the plan starting at knot `k`.
    pub fn region_after(&self, k: usize) -> usize {
        self.regions[k] + self.handover[k] as usize
    }
}

/// `Σ_{k=1}^{N−1} (uᵏᵀ W_u uᵏ + eᵏᵀ W_e eᵏ) + W_N ‖eᴺ‖²`, `eᵏ = pᵏ − p_r(t0 + k T_c)`.
pub fn tracking_cost(plan: &HorizonPlan, reference: &ReferenceTrajectory, t0: f64, params: &PlannerParams) -> f64 {
    let nk = plan.horizon();
    let mut j = 0.0;
    for k in 1..nk {
        for u in &plan.controls[k] {
            for c in 0..CONTROL_DIM {
                j += params.w_u[c] * u[c] * u[c];
            }
        }
        let e = plan.states[k].p - reference.position(t0 + k as f64 * params.t_c);
        j += params.w_e[0] * e.x * e.x + params.w_e[1] * e.y * e.y;
    }
    let e = plan.states[nk].p - reference.position(t0 + nk as f64 * params.t_c);
    j + params.w_n * e.norm_sq()
}

/// Corridor index per knot, never decreasing and never below `floor`.
///
/// Each knot takes the latest region (from the current index on) that
/// contains its CoM and in which its circles fit with `d_safe`; failing
/// that, the region containing the CoM where the circles come closest to
/// fitting; failing that, the region with the largest CoM margin. The second
/// list holds knots that needed the last fallback.
pub fn assign_regions(
    coms: &[Point2],
    circles: &[Vec<Circle>],
    corridor: &[ConvexRegion],
    floor: usize,
    d_safe: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut idx = floor.min(corridor.len() - 1);
    let mut out = Vec::with_capacity(coms.len());
    let mut fallback = Vec::new();
    for (k, (&p, cs)) in coms.iter().zip(circles).enumerate() {
        let fit = |j: usize| contain_circles(&corridor[j], cs, d_safe).1;
        let holding: Vec<usize> = (idx..corridor.len()).filter(|&j| corridor[j].contains(p, 0.0)).collect();
        let best = |c: &[usize], f: &dyn Fn(usize) -> f64| {
            c.iter().copied().max_by(|&a, &b| f(a).total_cmp(&f(b)).then(a.cmp(&b)))
        };
        idx = if let Some(&j) = holding.iter().rev().find(|&&j| fit(j) >= -MARGIN_TOL) {
            j
        } else if let Some(j) = best(&holding, &fit) {
            j
        } else {
            fallback.push(k);
            let all: Vec<usize> = (idx..corridor.len()).collect();
            best(&all, &|j| corridor[j].margin(p)).unwrap_or(idx)
        };
        out.push(idx);
    }
    (out, fallback)
}

fn knot_vector(c: &FormationConfig) -> Vec<f64> {
    let mut v = vec![c.p.x, c.p.y, c.psi];
    for s in &c.robots {
        v.extend_from_slice(&s.to_array());
    }
    v
}

fn knot_config(x: &[f64]) -> FormationConfig {
    let n = (x.len() - 3) / 6;
    FormationConfig {
        p: Point2::new(x[0], x[1]),
        psi: x[2],
        robots: (0..n).map(|i| MmrState::from_slice(&x[3 + 6 * i..9 + 6 * i])).collect(),
    }
}

/// Everything one horizon solve needs.
#[derive(Debug, Clone, Copy)]
pub struct HorizonRequest<'a> {
    pub spec: &'a FormationSpec,
    pub reference: &'a ReferenceTrajectory,
    pub corridor: &'a Corridor,
    pub params: &'a PlannerParams,
    pub t0: f64,
    pub x0: &'a FormationConfig,
    pub obstacles: &'a [ObstacleEstimate],
    /// Lowest corridor index the plan may use.
    pub floor: usize,
    pub warm: Option<&'a HorizonPlan>,
}

/// Pose-independent part of a formation: heading, reaches and
/// grasp-relative wrist angles.
#[derive(Debug, Clone, PartialEq)]
struct Shape {
    psi: f64,
    q2: Vec<f64>,
    delta: Vec<f64>,
}

impl Shape {
    fn of(spec: &FormationSpec, c: &FormationConfig) -> Self {
        let delta = c
            .robots
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let ee = spec.grasp_point(i, c.p, c.psi);
                wrap_angle((s.p - ee).angle() - c.psi - spec.grasp_angle(i))
            })
            .collect();
        Shape {
            psi: c.psi,
            q2: c.robots.iter().map(|s| s.q[1]).collect(),
            delta,
        }
    }

    /// `self + w (other − self)`, angles taken the short way round.
    fn lerp(&self, other: &Shape, w: f64) -> Shape {
        let ang = |a: f64, b: f64| a + w * (unwrap_near(b, a) - a);
        Shape {
            psi: ang(self.psi, other.psi),
            q2: self.q2.iter().zip(&other.q2).map(|(a, b)| a + w * (b - a)).collect(),
            delta: self.delta.iter().zip(&other.delta).map(|(&a, &b)| ang(a, b)).collect(),
        }
    }
}

/// Shape the global plan suggests at reference time `t`: the node shapes at
/// both ends of the current segment, blended by arc fraction.
fn guide_shape(req: &HorizonRequest<'_>, t: f64) -> Option<Shape> {
    let nodes = &req.corridor.node_configs;
    let reference = req.reference;
    let seg = reference.segment_at(t);
    if nodes.len() != reference.segments().len() + 1 {
        return None;
    }
    let t_a = reference.segment_start_time(seg);
    let t_b = if seg + 1 < reference.segments().len() {
        reference.segment_start_time(seg + 1)
    } else {
        reference.duration()
    };
    let w = if t_b - t_a > 1e-9 { ((t - t_a) / (t_b - t_a)).clamp(0.0, 1.0) } else { 1.0 };
    let (a, b) = (Shape::of(req.spec, &nodes[seg]), Shape::of(req.spec, &nodes[seg + 1]));
    Some(a.lerp(&b, w))
}

/// Grasp-consistent configuration for `(p, shape)` with angles unwrapped
/// next to `near`.
fn realize(spec: &FormationSpec, p: Point2, shape: &Shape, near: &FormationConfig) -> Result<FormationConfig, ModelError> {
    let psi = unwrap_near(shape.psi, near.psi);
    let mut c = spec.formation_from_pose(p, psi, &shape.q2, &shape.delta)?;
    for (s, n) in c.robots.iter_mut().zip(&near.robots) {
        s.phi = unwrap_near(s.phi, n.phi);
        s.q[0] = unwrap_near(s.q[0], n.q[0]);
        s.q[2] = unwrap_near(s.q[2], n.q[2]);
    }
    Ok(c)
}

/// Knots `from..=nk` of a guess: position and shape follow the reference
/// and the guide, with the offset of `anchor` (at knot `from − 1`) decaying
/// linearly to zero at the horizon end. Without a guide the anchor shape is
/// translated rigidly.
fn extend_guess(
    req: &HorizonRequest<'_>,
    anchor: &FormationConfig,
    from: usize,
    nk: usize,
) -> Result<Vec<FormationConfig>, ModelError> {
    let tc = req.params.t_c;
    let t_anchor = req.t0 + (from - 1) as f64 * tc;
    let anchor_shape = Shape::of(req.spec, anchor);
    let dp = anchor.p - req.reference.position(t_anchor);
    let guide_anchor = guide_shape(req, t_anchor);
    let mut out = Vec::with_capacity(nk + 1 - from);
    let mut near = anchor.clone();
    for k in from..=nk {
        let t = req.t0 + k as f64 * tc;
        let decay = 1.0 - (k + 1 - from) as f64 / (nk + 1 - from) as f64;
        let p = req.reference.position(t) + dp * decay;
        let shape = match (&guide_anchor, guide_shape(req, t)) {
            (Some(ga), Some(g)) => {
                // Guide plus the anchor's deviation from it, decaying.
                let dev = ga.lerp(&anchor_shape, 1.0);
                let mut sh = g.clone();
                sh.psi += decay * (unwrap_near(dev.psi, ga.psi) - ga.psi);
                for i in 0..sh.q2.len() {
                    sh.q2[i] += decay * (dev.q2[i] - ga.q2[i]);
                    sh.delta[i] += decay * (unwrap_near(dev.delta[i], ga.delta[i]) - ga.delta[i]);
                }
                sh
            }
            _ => anchor_shape.clone(),
        };
        let c = realize(req.spec, p, &shape, &near)?;
        near = c.clone();
        out.push(c);
    }
    Ok(out)
}

fn cold_start(req: &HorizonRequest<'_>, nk: usize) -> Result<Vec<FormationConfig>, ModelError> {
    let mut states = vec![req.x0.clone()];
    states.extend(extend_guess(req, req.x0, 1, nk)?);
    Ok(states)
}

/// Previous plan shifted by `T_e / T_c` knots, extended past its end by
/// [`extend_guess`].
fn warm_start(req: &HorizonRequest<'_>, prev: &HorizonPlan, nk: usize) -> Result<Vec<FormationConfig>, ModelError> {
    let shift = req.params.exec_steps();
    let mut states: Vec<FormationConfig> = prev.states.iter().skip(shift).take(nk + 1).cloned().collect();
    states[0] = req.x0.clone();
    if states.len() < nk + 1 {
        let from = states.len();
        let anchor = states[from - 1].clone();
        states.extend(extend_guess(req, &anchor, from, nk)?);
    }
    Ok(states)
}

struct Verified {
    plan_states: Vec<FormationConfig>,
    controls: Vec<Vec<[f64; CONTROL_DIM]>>,
    worst: f64,
    min_static: f64,
    min_dynamic: f64,
}

/// Restores exact grasp consistency from the solved bases and object poses,
/// recomputes controls from state differences and rechecks every constraint
/// with the geometry kernel.
fn polish_and_verify(
    req: &HorizonRequest<'_>,
    prob: &HorizonProblem,
    x: &[f64],
    regions: &[usize],
    handover: &[bool],
) -> Result<Verified, ModelError> {
    let lay = prob.lay;
    let spec = req.spec;
    let params = req.params;
    let mut states = Vec::with_capacity(lay.nk + 1);
    states.push(req.x0.clone());
    for k in 1..=lay.nk {
        let mut c = knot_config(&x[lay.x(k)..lay.x(k + 1)]);
        for i in 0..lay.n {
            let ee = spec.grasp_point(i, c.p, c.psi);
            let s = &mut c.robots[i];
            let q = inverse_arm(s.p, s.phi, ee, c.psi)?;
            s.q = [unwrap_near(q[0], s.q[0]), q[1], unwrap_near(q[2], s.q[2])];
        }
        states.push(c);
    }
    let mut controls = Vec::with_capacity(lay.nk);
    for k in 0..lay.nk {
        let u: Vec<[f64; CONTROL_DIM]> = (0..lay.n)
            .map(|i| {
                let (a, b) = (states[k].robots[i].to_array(), states[k + 1].robots[i].to_array());
                std::array::from_fn(|j| (b[j] - a[j]) / params.t_c)
            })
            .collect();
        controls.push(u);
    }
    let mut box_err: f64 = 0.0;
    let mut min_static = f64::INFINITY;
    let mut min_dynamic = f64::INFINITY;
    for k in 1..=lay.nk {
        let circles = bounding_circles(&states[k], spec)?.all();
        let mut check_region = |j: usize| {
            let (_, m) = contain_circles(&req.corridor.regions[j], &circles, params.d_safe);
            min_static = min_static.min(m);
        };
        check_region(regions[k]);
        if handover[k] {
            check_region(regions[k] + 1);
        }
        for o in req.obstacles {
            let center = o.position + o.velocity * (k as f64 * params.t_c);
            for c in &circles {
                min_dynamic = min_dynamic.min(c.center.dist(center) - c.radius - o.radius - params.d_safe_dyn);
            }
        }
        box_err = box_err.max(spec.grasp_error(&states[k]));
        for (i, s) in states[k].robots.iter().enumerate() {
            let (lo, hi) = spec.q_bounds(i)?;
            let shift = prob.lb[lay.robot(k, i) + 5] - problem::JOINT_PAD - lo[2];
            let q = [s.q[0], s.q[1], s.q[2] - shift];
            for j in 0..3 {
                box_err = box_err.max(lo[j] - q[j]).max(q[j] - hi[j]);
            }
        }
    }
    for u in &controls {
        for (i, ui) in u.iter().enumerate() {
            let r = &spec.robots[i];
            for j in 0..3 {
                box_err = box_err
                    .max(r.base.u_min[j] - ui[j])
                    .max(ui[j] - r.base.u_max[j])
                    .max(r.arm.u_min[j] - ui[3 + j])
                    .max(ui[3 + j] - r.arm.u_max[j]);
            }
        }
    }
    let worst = if box_err > BOX_TOL {
        f64::INFINITY
    } else {
        (-min_static).max(-min_dynamic)
    };
    Ok(Verified {
        plan_states: states,
        controls,
        worst,
        min_static,
        min_dynamic,
    })
}

fn build_problem(
    req: &HorizonRequest<'_>,
    guess: &[FormationConfig],
    nk: usize,
) -> Result<(HorizonProblem, Vec<f64>, Vec<usize>, Vec<bool>), NmpcError> {
    let spec = req.spec;
    let params = req.params;
    let n = spec.n();
    let lay = Layout { n, nk };
    let mut x = Vec::with_capacity(lay.dim());
    for c in guess {
        x.extend(knot_vector(c));
    }
    for k in 0..nk {
        for i in 0..n {
            let (a, b) = (guess[k].robots[i].to_array(), guess[k + 1].robots[i].to_array());
            x.extend((0..CONTROL_DIM).map(|j| (b[j] - a[j]) / params.t_c));
        }
    }
    let mut q3_center = Vec::with_capacity(n);
    let mut heading_offset = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    for (i, s) in req.x0.robots.iter().enumerate() {
        let (lo, hi) = spec.q_bounds(i)?;
        q3_center.push(unwrap_near(0.5 * (lo[2] + hi[2]), s.q[2]));
        heading_offset.push(((s.phi + s.q[0] + s.q[2] - req.x0.psi) / TAU).round() * TAU);
        let r = &spec.robots[i];
        kappa.push(0.5 * (1.0 + r.base.r_base() / r.arm.q_max[1]));
    }
    let (lb, ub) = variable_bounds(lay, &knot_vector(req.x0), spec, &q3_center)?;
    // Keep the guess inside the box so the first iterate is well defined.
    for (v, (l, u)) in x.iter_mut().zip(lb.iter().zip(&ub)) {
        *v = v.clamp(*l, *u);
    }

    let circles: Vec<Vec<Circle>> = guess
        .iter()
        .map(|c| bounding_circles(c, spec).map(|b| b.all()))
        .collect::<Result<_, _>>()?;
    let coms: Vec<Point2> = guess.iter().map(|c| c.p).collect();
    let (regions, fallback) = assign_regions(&coms, &circles, &req.corridor.regions, req.floor, params.d_safe);
    if !fallback.is_empty() {
        log::debug!("t0 {:.2}: knots {fallback:?} outside every corridor region", req.t0);
    }
    let last = req.corridor.regions.len() - 1;
    let handover: Vec<bool> = (0..=nk)
        .map(|k| {
            k > 0
                && regions[k] < last
                && req.corridor.reference_index(req.reference, req.t0 + k as f64 * params.t_c) > regions[k]
        })
        .collect();

    let mut radii: Vec<f64> = spec.robots.iter().map(|r| r.base.r_base()).collect();
    radii.extend(spec.robots.iter().map(|r| 0.5 * (r.arm.q_max[1] - r.base.r_base())));
    radii.push(spec.r_obj());
    let mut ineqs = Vec::new();
    for k in 1..=nk {
        let mut held = vec![regions[k]];
        if handover[k] {
            held.push(regions[k] + 1);
        }
        for &j in &held {
            for kind in faces(&req.corridor.regions[j]) {
                for (m, r) in radii.iter().enumerate() {
                    ineqs.push(Ineq {
                        k,
                        body: m,
                        kind,
                        offset: r + params.d_safe + CONSTRAINT_PAD,
                    });
                }
            }
        }
        for o in req.obstacles {
            let center = o.position + o.velocity * (k as f64 * params.t_c);
            for (m, r) in radii.iter().enumerate() {
                ineqs.push(Ineq {
                    k,
                    body: m,
                    kind: Kind::Obstacle {
                        center,
                        reach: r + o.radius + params.d_safe_dyn,
                    },
                    offset: CONSTRAINT_PAD,
                });
            }
        }
    }
    let refs = (0..=nk)
        .map(|k| req.reference.position(req.t0 + k as f64 * params.t_c))
        .collect();
    let prob = HorizonProblem {
        lay,
        tc: params.t_c,
        w_u: params.w_u,
        w_e: params.w_e,
        w_n: params.w_n,
        refs,
        grasp: spec.robots.iter().map(|r| r.grasp).collect(),
        kappa,
        heading_offset,
        ineqs,
        lb,
        ub,
    };
    Ok((prob, x, regions, handover))
}

fn attempt(req: &HorizonRequest<'_>, guess: Vec<FormationConfig>, warm: bool) -> Result<HorizonPlan, NmpcError> {
    let params = req.params;
    let nk = params.n_h;
    let (prob, x0, regions, handover) = build_problem(req, &guess, nk)?;
    let opts = SolverOptions {
        max_outer: params.solver_max_outer,
        max_inner: params.solver_max_inner,
        ..SolverOptions::default()
    };
    debug_assert_eq!(x0.len(), prob.dim());
    let sol = solve(&prob, &x0, &opts)?;
    let v = polish_and_verify(req, &prob, &sol.x, &regions, &handover)?;
    if sol.status == SolveStatus::Infeasible || v.worst > MARGIN_TOL {
        log::debug!(
            "t0 {:.2}: rejected plan, solver violation {:.2e}, verified {:.2e}: {}",
            req.t0,
            sol.violation,
            v.worst,
            prob.describe_worst(&sol.x)
        );
        return Err(NmpcError::PlanInfeasible {
            violation: sol.violation,
        });
    }
    let mut plan = HorizonPlan {
        t0: req.t0,
        states: v.plan_states,
        controls: v.controls,
        regions,
        handover,
        status: sol.status,
        objective: 0.0,
        violation: sol.violation,
        outer_iters: sol.outer_iters,
        inner_iters: sol.inner_iters,
        warm_started: warm,
        min_static_margin: v.min_static,
        min_dynamic_margin: v.min_dynamic,
    };
    plan.objective = tracking_cost(&plan, req.reference, req.t0, params);
    Ok(plan)
}

/// Solves one horizon from `X⁰`. A warm start that fails is retried cold,
/// and a cold start that fails is retried from a stationary guess.
pub fn plan_horizon(req: &HorizonRequest<'_>) -> Result<HorizonPlan, NmpcError> {
    let err = req.spec.grasp_error(req.x0);
    if err > 1e-6 {
        return Err(NmpcError::InconsistentInitial(err));
    }
    let nk = req.params.n_h;
    if let Some(prev) = req.warm {
        match attempt(req, warm_start(req, prev, nk)?, true) {
            Ok(p) => return Ok(p),
            Err(NmpcError::PlanInfeasible { violation }) => {
                log::debug!("t0 {:.2}: warm start failed ({violation:.2e}), retrying cold", req.t0);
            }
            Err(e) => return Err(e),
        }
    }
    match attempt(req, cold_start(req, nk)?, false) {
        Err(NmpcError::PlanInfeasible { violation }) => {
            // Holding position is often feasible when the reference runs into
            // an obstacle; start the solver there.
            log::debug!("t0 {:.2}: cold start failed ({violation:.2e}), retrying from hold", req.t0);
            attempt(req, vec![req.x0.clone(); nk + 1], false)
        }
        r => r,
    }
}

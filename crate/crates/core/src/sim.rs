//! Closed-loop simulation: replan, execute `T_e` open loop, advance the true
//! obstacles, log every `T_c` step. Also an independent audit of a log.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{point_polygon_signed_distance, Circle, Point2};
use crate::global::PlanFile;
use crate::model::{bounding_circles, ee_position, step_state, FormationConfig, FormationSpec, ModelError, CONTROL_DIM};
use crate::nmpc::{plan_horizon, Corridor, HorizonPlan, HorizonRequest, NmpcError};
use crate::params::PlannerParams;
use crate::scenario::Scenario;
use crate::world::{dynamic_state, World};

/// Margin shortfall tolerated by the audit before a step is flagged, m.
pub const AUDIT_TOL: f64 = 1e-3;
/// Largest grasp error the audit accepts, m.
pub const GRASP_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("plan was computed for scenario {plan}, not {scenario}")]
    HashMismatch { plan: String, scenario: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimStatus {
    Running,
    GoalReached,
    PlanFailed,
    Timeout,
}

impl SimStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimStatus::Running => "running",
            SimStatus::GoalReached => "goal_reached",
            SimStatus::PlanFailed => "plan_failed",
            SimStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStep {
    pub t: f64,
    pub config: FormationConfig,
    /// Controls applied from `t` to `t + T_c`; zero on the last row.
    pub controls: Vec<[f64; CONTROL_DIM]>,
    /// Smallest clearance of any body circle from statics and walls.
    pub static_margin: f64,
    /// Per dynamic obstacle, smallest clearance of any body circle.
    pub dynamic_margins: Vec<f64>,
    pub tracking_error: f64,
    pub grasp_errors: Vec<f64>,
}

/// Solver diagnostics for one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    pub t0: f64,
    pub ok: bool,
    pub objective: f64,
    pub violation: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub warm_started: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub params: PlannerParams,
    pub steps: Vec<SimStep>,
    pub status: SimStatus,
    pub horizons: Vec<HorizonRecord>,
}

fn circles_of(c: &FormationConfig, spec: &FormationSpec) -> Result<Vec<Circle>, ModelError> {
    Ok(bounding_circles(c, spec)?.all())
}

fn record(
    t: f64,
    config: &FormationConfig,
    controls: Vec<[f64; CONTROL_DIM]>,
    world: &World,
    spec: &FormationSpec,
    plan: &PlanFile,
) -> Result<SimStep, ModelError> {
    let circles = circles_of(config, spec)?;
    let static_margin = circles.iter().map(|c| world.circle_clearance(c)).fold(f64::INFINITY, f64::min);
    let dynamic_margins = world
        .dynamic_circles(t)
        .iter()
        .map(|(_, o)| {
            circles
                .iter()
                .map(|c| c.center.dist(o.center) - c.radius - o.radius)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let grasp_errors = config
        .robots
        .iter()
        .enumerate()
        .map(|(i, s)| ee_position(s).dist(spec.grasp_point(i, config.p, config.psi)))
        .collect();
    Ok(SimStep {
        t,
        config: config.clone(),
        controls,
        static_margin,
        dynamic_margins,
        tracking_error: config.p.dist(plan.reference.position(t)),
        grasp_errors,
    })
}

/// Runs the receding-horizon loop from the plan's start formation until the
/// goal is reached, a horizon fails, or `timeout_factor × T` elapses.
/// `seed` drives the obstacle estimate noise only.
pub fn run(sc: &Scenario, plan: &PlanFile, seed: u64) -> Result<SimLog, SimError> {
    if plan.scenario_hash != sc.hash {
        return Err(SimError::HashMismatch {
            plan: plan.scenario_hash.clone(),
            scenario: sc.hash.clone(),
        });
    }
    let world = &sc.world;
    let spec = &sc.formation;
    let params = &sc.params;
    let corridor = Corridor::from_plan(plan);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tc = params.t_c;
    let exec = params.exec_steps().min(params.n_h).max(1);
    let t_end = params.timeout_factor * plan.reference.duration();
    let goal = world.goal;
    let reached = |c: &FormationConfig| c.p.dist(goal) <= params.goal_tolerance;

    let mut x = plan.start_config().clone();
    let mut step = 0usize;
    let mut steps = Vec::new();
    let mut horizons = Vec::new();
    let mut prev: Option<HorizonPlan> = None;
    let mut floor = 0;
    let zero = vec![[0.0; CONTROL_DIM]; spec.n()];
    let status = loop {
        let t0 = step as f64 * tc;
        if reached(&x) {
            break SimStatus::GoalReached;
        }
        if t0 >= t_end {
            break SimStatus::Timeout;
        }
        let obstacles = world.sense(
            t0,
            x.p,
            params.sensing_radius.unwrap_or(f64::INFINITY),
            params.estimate_noise_std,
            &mut rng,
        );
        let req = HorizonRequest {
            spec,
            reference: &plan.reference,
            corridor: &corridor,
            params,
            t0,
            x0: &x,
            obstacles: &obstacles,
            floor,
            warm: prev.as_ref(),
        };
        let clock = Instant::now();
        let result = plan_horizon(&req);
        let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
        let hp = match result {
            Ok(hp) => hp,
            Err(e) => {
                log::warn!("t {t0:.2}: {e}");
                horizons.push(HorizonRecord {
                    t0,
                    ok: false,
                    objective: f64::NAN,
                    violation: match e {
                        NmpcError::PlanInfeasible { violation } => violation,
                        _ => f64::NAN,
                    },
                    outer_iters: 0,
                    inner_iters: 0,
                    warm_started: prev.is_some(),
                    wall_ms,
                });
                break SimStatus::PlanFailed;
            }
        };
        log::debug!(
            "t {t0:.2}: {:?} J {:.4} viol {:.1e} iters {}/{} {:.0} ms",
            hp.status,
            hp.objective,
            hp.violation,
            hp.outer_iters,
            hp.inner_iters,
            wall_ms
        );
        horizons.push(HorizonRecord {
            t0,
            ok: true,
            objective: hp.objective,
            violation: hp.violation,
            outer_iters: hp.outer_iters,
            inner_iters: hp.inner_iters,
            warm_started: hp.warm_started,
            wall_ms,
        });
        let mut done = None;
        for j in 0..exec {
            let u = hp.controls[j].clone();
            steps.push(record(step as f64 * tc, &x, u.clone(), world, spec, plan)?);
            let knot = &hp.states[j + 1];
            let robots = x.robots.iter().zip(&u).map(|(s, u)| step_state(s, u, tc)).collect();
            x = FormationConfig {
                p: knot.p,
                psi: knot.psi,
                robots,
            };
            step += 1;
            if reached(&x) {
                done = Some(SimStatus::GoalReached);
                break;
            }
        }
        if let Some(s) = done {
            break s;
        }
        floor = hp.region_after(exec);
        prev = Some(hp);
    };
    steps.push(record(step as f64 * tc, &x, zero, world, spec, plan)?);
    Ok(SimLog {
        scenario_name: sc.name.clone(),
        scenario_hash: sc.hash.clone(),
        seed,
        params: params.clone(),
        steps,
        status,
        horizons,
    })
}

impl SimLog {
    pub fn completion_time(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.t)
    }

    pub fn min_static_margin(&self) -> f64 {
        self.steps.iter().map(|s| s.static_margin).fold(f64::INFINITY, f64::min)
    }

    /// Smallest clearance per dynamic obstacle over the run.
    pub fn min_dynamic_margins(&self) -> Vec<f64> {
        let n = self.steps.first().map_or(0, |s| s.dynamic_margins.len());
        (0..n)
            .map(|d| self.steps.iter().map(|s| s.dynamic_margins[d]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    pub fn max_grasp_error(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| s.grasp_errors.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Column names in output order.
    pub fn csv_header(&self) -> Vec<String> {
        let n = self.steps.first().map_or(0, |s| s.config.robots.len());
        let d = self.steps.first().map_or(0, |s| s.dynamic_margins.len());
        let mut h: Vec<String> = ["t", "p_x", "p_y", "psi"].iter().map(|s| s.to_string()).collect();
        for i in 0..n {
            for c in ["x", "y", "phi", "q1", "q2", "q3"] {
                h.push(format!("r{i}_{c}"));
            }
        }
        for i in 0..n {
            for c in ["vx", "vy", "omega", "dq1", "dq2", "dq3"] {
                h.push(format!("r{i}_u_{c}"));
            }
        }
        h.push("static_margin".into());
        for k in 0..d {
            h.push(format!("dyn{k}_margin"));
        }
        h.push("tracking_error".into());
        for i in 0..n {
            h.push(format!("r{i}_grasp_error"));
        }
        h.push("status".into());
        h
    }

    /// `#` comment lines naming the scenario hash, seed and parameters, then
    /// one row per step; the last row carries the terminal status. Floats
    /// use the shortest round-trip representation.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<(), SimError> {
        writeln!(w, "# scenario: {}", self.scenario_name)?;
        writeln!(w, "# scenario_hash: {}", self.scenario_hash)?;
        writeln!(w, "# seed: {}", self.seed)?;
        let params = serde_json::to_string(&self.params).expect("params serialize");
        writeln!(w, "# params: {params}")?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.csv_header())?;
        let last = self.steps.len().saturating_sub(1);
        for (k, s) in self.steps.iter().enumerate() {
            let mut row: Vec<String> = vec![s.t, s.config.p.x, s.config.p.y, s.config.psi]
                .into_iter()
                .map(|v| v.to_string())
                .collect();
            for r in &s.config.robots {
                row.extend(r.to_array().iter().map(|v| v.to_string()));
            }
            for u in &s.controls {
                row.extend(u.iter().map(|v| v.to_string()));
            }
            row.push(s.static_margin.to_string());
            row.extend(s.dynamic_margins.iter().map(|v| v.to_string()));
            row.push(s.tracking_error.to_string());
            row.extend(s.grasp_errors.iter().map(|v| v.to_string()));
            let status = if k == last { self.status } else { SimStatus::Running };
            row.push(status.as_str().to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, SimError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub t: f64,
    pub what: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub status: SimStatus,
    pub completion_time: f64,
    pub min_static_margin: f64,
    pub min_dynamic_margins: Vec<f64>,
    pub max_grasp_error: f64,
    /// Largest deviation of `φ + q1 + q3` from `ψ` modulo 2π, rad.
    pub max_heading_error: f64,
    pub max_tracking_error: f64,
    /// Length of the executed CoM polyline, m.
    pub path_length: f64,
    pub wall_ms_per_horizon: Vec<f64>,
    /// Largest difference between logged and recomputed margins.
    pub margin_mismatch: f64,
    pub findings: Vec<AuditFinding>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.status == SimStatus::GoalReached && self.findings.is_empty()
    }
}

/// Recomputes every margin of `log` from the raw geometry (obstacle
/// polygons, wall faces, obstacle scripts) and flags steps below
/// `d_safe`/`d_safe,dyn` by more than [`AUDIT_TOL`], grasp errors above
/// [`GRASP_TOL`] and joints outside their cone-modified boxes.
pub fn audit(log: &SimLog, world: &World, spec: &FormationSpec, params: &PlannerParams) -> AuditReport {
    let mut findings = Vec::new();
    let mut min_static = f64::INFINITY;
    let mut min_dyn = vec![f64::INFINITY; world.dynamics.len()];
    let mut max_grasp: f64 = 0.0;
    let mut max_heading: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    for s in &log.steps {
        let mut flag = |what: &str, value: f64| {
            findings.push(AuditFinding {
                t: s.t,
                what: what.to_string(),
                value,
            })
        };
        let circles = match bounding_circles(&s.config, spec) {
            Ok(b) => b.all(),
            Err(e) => {
                flag(&format!("bounding circles: {e}"), f64::NAN);
                continue;
            }
        };
        let mut st = f64::INFINITY;
        for c in &circles {
            let walls = world
                .bounds
                .halfspaces()
                .iter()
                .map(|h| h.margin(c.center))
                .fold(f64::INFINITY, f64::min);
            let obs = world
                .statics
                .iter()
                .map(|o| point_polygon_signed_distance(c.center, &o.shape))
                .fold(f64::INFINITY, f64::min);
            st = st.min(walls.min(obs) - c.radius);
        }
        mismatch = mismatch.max((st - s.static_margin).abs());
        min_static = min_static.min(st);
        if st < params.d_safe - AUDIT_TOL {
            flag("static margin", st);
        }
        for (d, obs) in world.dynamics.iter().enumerate() {
            let o = dynamic_state(obs, s.t).0;
            let m = circles
                .iter()
                .map(|c| (c.center - o).norm() - c.radius - obs.radius)
                .fold(f64::INFINITY, f64::min);
            if let Some(logged) = s.dynamic_margins.get(d) {
                mismatch = mismatch.max((m - logged).abs());
            }
            min_dyn[d] = min_dyn[d].min(m);
            if m < params.d_safe_dyn - AUDIT_TOL {
                flag(&format!("dynamic margin {d}"), m);
            }
        }
        let g = spec.grasp_error(&s.config);
        max_grasp = max_grasp.max(g);
        if g > GRASP_TOL {
            flag("grasp error", g);
        }
        max_heading = max_heading.max(spec.heading_error(&s.config));
        if !spec.admissible(&s.config, 1e-6) {
            flag("joint limits", f64::NAN);
        }
    }
    let path_length = log
        .steps
        .windows(2)
        .map(|w| w[0].config.p.dist(w[1].config.p))
        .sum();
    AuditReport {
        status: log.status,
        completion_time: log.completion_time(),
        min_static_margin: min_static,
        min_dynamic_margins: min_dyn,
        max_grasp_error: max_grasp,
        max_heading_error: max_heading,
        max_tracking_error: log.steps.iter().map(|s| s.tracking_error).fold(0.0, f64::max),
        path_length,
        wall_ms_per_horizon: log.horizons.iter().map(|h| h.wall_ms).collect(),
        margin_mismatch: mismatch,
        findings,
    }
}

/// Executed CoM positions.
pub fn trajectory(log: &SimLog) -> Vec<Point2> {
    log.steps.iter().map(|s| s.config.p).collect()
}

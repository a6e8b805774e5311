//! Tunable parameters shared by the planners and the simulator.

use serde::{Deserialize, Serialize};

/// Per-robot control weights `[vx, vy, ω, q̇1, q̇2, q̇3]`.
pub const DEFAULT_W_U: [f64; 6] = [0.05, 0.05, 0.25, 2.5, 2.5, 2.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Knots per horizon.
    pub n_h: usize,
    pub t_h: f64,
    pub t_e: f64,
    pub t_c: f64,
    pub v_op: f64,
    pub d_safe: f64,
    pub d_safe_dyn: f64,
    /// Control weights per robot; repeated for every robot.
    pub w_u: [f64; 6],
    pub w_e: [f64; 2],
    pub w_n: f64,

    pub coverage_target: f64,
    pub max_regions: usize,
    pub coverage_samples: usize,

    /// Radius around the object CoM inside which dynamic obstacles are seen;
    /// absent means unlimited.
    pub sensing_radius: Option<f64>,
    /// Standard deviation of Gaussian noise on obstacle estimates.
    pub estimate_noise_std: f64,

    pub goal_tolerance: f64,
    /// Simulation stops after this multiple of the nominal trajectory time.
    pub timeout_factor: f64,

    pub solver_max_outer: usize,
    pub solver_max_inner: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            n_h: 24,
            t_h: 6.0,
            t_e: 2.0,
            t_c: 0.25,
            v_op: 0.15,
            d_safe: 0.05,
            d_safe_dyn: 0.1,
            w_u: DEFAULT_W_U,
            w_e: [0.01, 0.01],
            w_n: 1e3,
            coverage_target: 0.95,
            max_regions: 40,
            coverage_samples: 10_000,
            sensing_radius: None,
            estimate_noise_std: 0.0,
            goal_tolerance: 0.05,
            timeout_factor: 3.0,
            solver_max_outer: 20,
            solver_max_inner: 200,
        }
    }
}

impl PlannerParams {
    /// Knots executed per replanning cycle, `T_e / T_c`.
    pub fn exec_steps(&self) -> usize {
        (self.t_e / self.t_c).round() as usize
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                out.push(msg.to_string());
            }
        };
        need(self.t_c > 0.0, "t_c must be positive");
        need(self.t_e > 0.0 && self.t_e < self.t_h, "t_e must lie in (0, t_h)");
        need(self.n_h >= 1, "n_h must be at least 1");
        need(
            (self.n_h as f64 * self.t_c - self.t_h).abs() < 1e-9,
            "n_h * t_c must equal t_h",
        );
        need(
            ((self.t_e / self.t_c) - (self.t_e / self.t_c).round()).abs() < 1e-9,
            "t_e must be a whole number of t_c steps",
        );
        need(self.v_op > 0.0, "v_op must be positive");
        need(self.d_safe >= 0.0 && self.d_safe_dyn >= 0.0, "safety margins must be non-negative");
        need(
            self.w_u.iter().chain(&self.w_e).all(|w| *w >= 0.0) && self.w_n >= 0.0,
            "weights must be non-negative",
        );
        need(
            self.coverage_target > 0.0 && self.coverage_target <= 1.0,
            "coverage_target must lie in (0, 1]",
        );
        need(self.max_regions >= 1, "max_regions must be at least 1");
        need(self.coverage_samples >= 1, "coverage_samples must be at least 1");
        need(
            self.sensing_radius.is_none_or(|r| r > 0.0),
            "sensing_radius must be positive",
        );
        need(self.estimate_noise_std >= 0.0, "estimate_noise_std must be non-negative");
        need(self.goal_tolerance > 0.0, "goal_tolerance must be positive");
        need(self.timeout_factor >= 1.0, "timeout_factor must be at least 1");
        out
    }
}

//! Small dense constrained nonlinear programs:
//! `min f(x)  s.t.  h(x) = 0,  g(x) <= 0,  lb <= x <= ub`.
//!
//! Augmented Lagrangian outer loop over a projected limited-memory BFGS
//! inner loop on the box.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub trait NlpProblem {
    fn dim(&self) -> usize;

    fn n_eq(&self) -> usize {
        0
    }

    fn n_ineq(&self) -> usize {
        0
    }

    /// Box bounds; infinite entries are allowed.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn objective(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `g`. Returns false when no analytic gradient exists.
    fn gradient(&self, _x: &[f64], _g: &mut [f64]) -> bool {
        false
    }

    fn constraints(&self, _x: &[f64], _eq: &mut [f64], _ineq: &mut [f64]) {}

    /// Writes `J_hᵀ w_eq + J_gᵀ w_in` into `out`. Returns false when not supplied.
    fn constraint_jt(&self, _x: &[f64], _w_eq: &[f64], _w_in: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlpError {
    #[error("callback returned a non-finite value")]
    CallbackFailure,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest of `|h_i|`, `max(g_i, 0)`.
    pub violation: f64,
    /// Infinity norm of the projected Lagrangian gradient.
    pub stationarity: f64,
    pub status: SolveStatus,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    /// Accepted violation after each outer iteration.
    pub violation_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    pub feas_tol: f64,
    pub stat_tol: f64,
    pub rho0: f64,
    pub rho_factor: f64,
    pub rho_max: f64,
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer: 20,
            max_inner: 200,
            feas_tol: 1e-4,
            stat_tol: 1e-3,
            rho0: 10.0,
            rho_factor: 10.0,
            rho_max: 1e9,
            memory: 8,
        }
    }
}

fn fd_step(xi: f64) -> f64 {
    1e-6 * xi.abs().max(1.0)
}

fn check(v: &[f64]) -> Result<(), NlpError> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(NlpError::CallbackFailure)
    }
}

/// Central differences of a scalar function, stencil kept inside the box.
pub fn fd_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    lb: &[f64],
    ub: &[f64],
    out: &mut [f64],
) {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        let hp = h.min((ub[i] - x[i]).max(0.0));
        let hm = h.min((x[i] - lb[i]).max(0.0));
        let (hp, hm) = if hp + hm > 0.0 { (hp, hm) } else { (h, h) };
        xp[i] = x[i] + hp;
        let fp = f(&xp);
        xp[i] = x[i] - hm;
        let fm = f(&xp);
        xp[i] = x[i];
        out[i] = (fp - fm) / (hp + hm);
    }
}

/// Central-difference `J_hᵀ w_eq + J_gᵀ w_in`.
pub fn fd_constraint_jt<P: NlpProblem + ?Sized>(
    p: &P,
    x: &[f64],
    w_eq: &[f64],
    w_in: &[f64],
    out: &mut [f64],
) {
    let (lb, ub) = p.bounds();
    let mut eq = vec![0.0; p.n_eq()];
    let mut ineq = vec![0.0; p.n_ineq()];
    let mut f = |z: &[f64]| {
        p.constraints(z, &mut eq, &mut ineq);
        eq.iter().zip(w_eq).map(|(a, b)| a * b).sum::<f64>()
            + ineq.iter().zip(w_in).map(|(a, b)| a * b).sum::<f64>()
    };
    fd_gradient(&mut f, x, &lb, &ub, out);
}

struct Evaluator<'a, P: NlpProblem + ?Sized> {
    p: &'a P,
    lb: Vec<f64>,
    ub: Vec<f64>,
    eq: Vec<f64>,
    ineq: Vec<f64>,
}

impl<P: NlpProblem + ?Sized> Evaluator<'_, P> {
    fn constraints(&mut self, x: &[f64]) -> Result<f64, NlpError> {
        self.p.constraints(x, &mut self.eq, &mut self.ineq);
        check(&self.eq)?;
        check(&self.ineq)?;
        Ok(violation(&self.eq, &self.ineq))
    }

    fn objective(&self, x: &[f64]) -> Result<f64, NlpError> {
        let f = self.p.objective(x);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(NlpError::CallbackFailure)
        }
    }

    fn objective_grad(&self, x: &[f64], g: &mut [f64]) -> Result<(), NlpError> {
        if !self.p.gradient(x, g) {
            let p = self.p;
            fd_gradient(&mut |z| p.objective(z), x, &self.lb, &self.ub, g);
        }
        check(g)
    }

    /// Augmented Lagrangian value and gradient at `x`.
    fn merit(&mut self, x: &[f64], al: &AlState, grad: Option<&mut [f64]>) -> Result<f64, NlpError> {
        let f = self.objective(x)?;
        self.constraints(x)?;
        let rho = al.rho;
        let mut val = f;
        let mut w_eq = vec![0.0; self.eq.len()];
        for (k, h) in self.eq.iter().enumerate() {
            val += al.lam[k] * h + 0.5 * rho * h * h;
            w_eq[k] = al.lam[k] + rho * h;
        }
        let mut w_in = vec![0.0; self.ineq.len()];
        for (k, g) in self.ineq.iter().enumerate() {
            let s = (al.mu[k] + rho * g).max(0.0);
            val += (s * s - al.mu[k] * al.mu[k]) / (2.0 * rho);
            w_in[k] = s;
        }
        if let Some(grad) = grad {
            self.objective_grad(x, grad)?;
            let mut jt = vec![0.0; x.len()];
            if !self.p.constraint_jt(x, &w_eq, &w_in, &mut jt) {
                fd_constraint_jt(self.p, x, &w_eq, &w_in, &mut jt);
            }
            check(&jt)?;
            for (a, b) in grad.iter_mut().zip(&jt) {
                *a += b;
            }
        }
        if val.is_finite() {
            Ok(val)
        } else {
            Err(NlpError::CallbackFailure)
        }
    }
}

struct AlState {
    lam: Vec<f64>,
    mu: Vec<f64>,
    rho: f64,
}

fn violation(eq: &[f64], ineq: &[f64]) -> f64 {
    let a = eq.iter().fold(0.0f64, |m, h| m.max(h.abs()));
    ineq.iter().fold(a, |m, g| m.max(*g))
}

fn project(x: &mut [f64], lb: &[f64], ub: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lb[i], ub[i]);
    }
}

/// `‖P(x − g) − x‖∞`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lb: &[f64], ub: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lb[i], ub[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct InnerResult {
    iters: usize,
    pg: f64,
}

/// Projected L-BFGS on the box for the current augmented Lagrangian.
fn minimize_box<P: NlpProblem + ?Sized>(
    ev: &mut Evaluator<'_, P>,
    al: &AlState,
    x: &mut Vec<f64>,
    opts: &SolverOptions,
) -> Result<InnerResult, NlpError> {
    let n = x.len();
    let (lb, ub) = (ev.lb.clone(), ev.ub.clone());
    let mut g = vec![0.0; n];
    let mut f = ev.merit(x, al, Some(&mut g))?;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut iters = 0;
    let mut pg = projected_gradient_norm(x, &g, &lb, &ub);
    while iters < opts.max_inner && pg > opts.stat_tol {
        iters += 1;
        // Variables held at a bound by the gradient stay fixed this iteration.
        let fixed: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lb[i] && g[i] > 0.0) || (x[i] >= ub[i] && g[i] < 0.0))
            .collect();
        let mut d: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { -g[i] }).collect();
        let mut alpha = vec![0.0; mem.len()];
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= alpha[k] * y[i];
            }
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let beta = rho * dot(y, &d);
            for i in 0..n {
                d[i] += (alpha[k] - beta) * s[i];
            }
        }
        for i in 0..n {
            if fixed[i] {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) >= 0.0 {
            mem.clear();
            for i in 0..n {
                d[i] = if fixed[i] { 0.0 } else { -g[i] };
            }
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                xt[i] = x[i] + step * d[i];
            }
            project(&mut xt, &lb, &ub);
            let dec: f64 = (0..n).map(|i| g[i] * (xt[i] - x[i])).sum();
            let ft = ev.merit(&xt, al, None)?;
            if ft <= f + 1e-4 * dec && dec < 0.0 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if mem.is_empty() {
                break;
            }
            mem.clear();
            continue;
        }
        let ft = ev.merit(&xt, al, Some(&mut gt))?;
        let s: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        f = ft;
        pg = projected_gradient_norm(x, &g, &lb, &ub);
    }
    Ok(InnerResult { iters, pg })
}

/// Solves `p` from `x0` (clamped into the box).
pub fn solve<P: NlpProblem + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<NlpSolution, NlpError> {
    let n = p.dim();
    let (lb, ub) = p.bounds();
    if x0.len() != n || lb.len() != n || ub.len() != n {
        return Err(NlpError::Dimension(format!(
            "dim {n}, x0 {}, bounds {}/{}",
            x0.len(),
            lb.len(),
            ub.len()
        )));
    }
    let mut ev = Evaluator {
        p,
        lb: lb.clone(),
        ub: ub.clone(),
        eq: vec![0.0; p.n_eq()],
        ineq: vec![0.0; p.n_ineq()],
    };
    let mut x = x0.to_vec();
    project(&mut x, &lb, &ub);
    let mut al = AlState {
        lam: vec![0.0; p.n_eq()],
        mu: vec![0.0; p.n_ineq()],
        rho: opts.rho0,
    };
    let mut best_x = x.clone();
    let mut best_viol = ev.constraints(&x)?;
    let mut best_stat = f64::INFINITY;
    let mut prev_viol = best_viol;
    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;
    while outer < opts.max_outer {
        outer += 1;
        let r = minimize_box(&mut ev, &al, &mut x, opts)?;
        inner_total += r.iters;
        let viol = ev.constraints(&x)?;
        // Multipliers move only on sufficient feasibility progress; otherwise
        // the penalty grows.
        if viol <= opts.feas_tol || viol <= 0.25 * prev_viol {
            for (l, h) in al.lam.iter_mut().zip(&ev.eq) {
                *l += al.rho * h;
            }
            for (m, g) in al.mu.iter_mut().zip(&ev.ineq) {
                *m = (*m + al.rho * g).max(0.0);
            }
        } else {
            al.rho = (al.rho * opts.rho_factor).min(opts.rho_max);
        }
        log::trace!(
            "outer {outer}: inner {} pg {:.2e} viol {viol:.2e} rho {:.1e}",
            r.iters,
            r.pg,
            al.rho
        );
        prev_viol = viol;
        // Monotone acceptance on violation clamped at the feasibility tolerance.
        if viol.max(opts.feas_tol) <= best_viol.max(opts.feas_tol) {
            best_x.copy_from_slice(&x);
            best_viol = viol;
            best_stat = r.pg;
        }
        history.push(best_viol.max(opts.feas_tol));
        debug_assert!(history.windows(2).all(|w| w[1] <= w[0]));
        if viol <= opts.feas_tol && r.pg <= opts.stat_tol {
            converged = true;
            break;
        }
    }
    ev.constraints(&best_x)?;
    let objective = ev.objective(&best_x)?;
    let status = if converged {
        SolveStatus::Converged
    } else if best_viol <= opts.feas_tol {
        SolveStatus::MaxIter
    } else {
        SolveStatus::Infeasible
    };
    Ok(NlpSolution {
        x: best_x,
        objective,
        violation: best_viol,
        stationarity: best_stat,
        status,
        outer_iters: outer,
        inner_iters: inner_total,
        eq_multipliers: al.lam,
        ineq_multipliers: al.mu,
        violation_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fn1;
    impl NlpProblem for Fn1 {
        fn dim(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-5.0], vec![5.0])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0] * x[0]
        }
        fn constraints(&self, x: &[f64], _: &mut [f64], ineq: &mut [f64]) {
            ineq[0] = 1.0 - x[0];
        }
    }

    struct OnBound;
    impl NlpProblem for OnBound {
        fn dim(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![1.0], vec![f64::INFINITY])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0] * x[0]
        }
    }

    #[test]
    fn active_inequality_and_active_bound() {
        let opts = SolverOptions::default();
        let s = solve(&Fn1, &[3.0], &opts).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert!((s.x[0] - 1.0).abs() < 1e-4, "{:?}", s.x);
        assert!((s.objective - 1.0).abs() < 1e-3);
        let s = solve(&OnBound, &[3.0], &opts).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert_eq!(s.x[0], 1.0);
    }

    struct LineEq;
    impl NlpProblem for LineEq {
        fn dim(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2)
        }
        fn constraints(&self, x: &[f64], eq: &mut [f64], _: &mut [f64]) {
            eq[0] = x[0] + x[1] - 1.0;
        }
    }

    #[test]
    fn equality_constrained_quadratic() {
        let s = solve(&LineEq, &[0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert!((s.x[0] - 1.0).abs() < 1e-4 && s.x[1].abs() < 1e-4, "{:?}", s.x);
        assert!((s.objective - 2.0).abs() < 1e-3);
        assert!((s.eq_multipliers[0] - 2.0).abs() < 1e-2);
    }

    struct Contradiction;
    impl NlpProblem for Contradiction {
        fn dim(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            2
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-10.0], vec![10.0])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0]
        }
        fn constraints(&self, x: &[f64], _: &mut [f64], ineq: &mut [f64]) {
            ineq[0] = 1.0 - x[0];
            ineq[1] = x[0] + 1.0;
        }
    }

    #[test]
    fn infeasible_reported_with_monotone_violation() {
        let s = solve(&Contradiction, &[0.0], &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.violation >= 1.0 - 1e-6);
        assert!(s.violation_history.windows(2).all(|w| w[1] <= w[0]));
    }

    struct NanObjective;
    impl NlpProblem for NanObjective {
        fn dim(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-1.0], vec![1.0])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] - 2.0).sqrt()
        }
    }

    #[test]
    fn non_finite_callback_is_an_error() {
        assert_eq!(
            solve(&NanObjective, &[0.0], &SolverOptions::default()),
            Err(NlpError::CallbackFailure)
        );
    }

    /// `½xᵀQx + cᵀx` on `[-1, 1]^d`, with `aᵀx = b` and `eᵀx <= h`.
    #[derive(Clone, Debug)]
    struct Qp {
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        a: Vec<f64>,
        b: f64,
        e: Vec<f64>,
        h: f64,
        analytic: bool,
    }

    impl Qp {
        fn random(d: usize, rng: &mut ChaCha8Rng) -> Qp {
            // Q = R diag(λ) Rᵀ with λ in [0.5, 2] and R from Gram-Schmidt.
            let mut r: Vec<Vec<f64>> = Vec::new();
            while r.len() < d {
                let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                for u in &r {
                    let p = dot(&v, u);
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
                }
                let nv = dot(&v, &v).sqrt();
                if nv > 1e-3 {
                    r.push(v.iter().map(|a| a / nv).collect());
                }
            }
            let lam: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
            let q = (0..d)
                .map(|i| (0..d).map(|j| (0..d).map(|k| r[k][i] * lam[k] * r[k][j]).sum()).collect())
                .collect();
            let c = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let xf: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            // Unit constraint rows, so violation and distance agree.
            let mut unit = || {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nv = dot(&v, &v).sqrt().max(1e-9);
                v.into_iter().map(|a| a / nv).collect::<Vec<f64>>()
            };
            let a = unit();
            let e = unit();
            Qp {
                q,
                c,
                b: dot(&a, &xf),
                h: dot(&e, &xf) + 0.3,
                a,
                e,
                analytic: false,
            }
        }

        fn f(&self, x: &[f64]) -> f64 {
            let d = x.len();
            let mut v = dot(&self.c, x);
            for i in 0..d {
                for j in 0..d {
                    v += 0.5 * x[i] * self.q[i][j] * x[j];
                }
            }
            v
        }
    }

    impl NlpProblem for Qp {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-1.0; self.dim()], vec![1.0; self.dim()])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            self.f(x)
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) -> bool {
            if !self.analytic {
                return false;
            }
            for i in 0..x.len() {
                g[i] = self.c[i] + dot(&self.q[i], x);
            }
            true
        }
        fn constraints(&self, x: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
            eq[0] = dot(&self.a, x) - self.b;
            ineq[0] = dot(&self.e, x) - self.h;
        }
        fn constraint_jt(&self, _: &[f64], w_eq: &[f64], w_in: &[f64], out: &mut [f64]) -> bool {
            if !self.analytic {
                return false;
            }
            for i in 0..out.len() {
                out[i] = self.a[i] * w_eq[0] + self.e[i] * w_in[0];
            }
            true
        }
    }

    /// Zooming grid search over all coordinates but the one eliminated by
    /// the equality; infeasible grid points are skipped.
    fn grid_oracle(p: &Qp) -> Vec<f64> {
        let d = p.dim();
        let k = (0..d)
            .max_by(|&i, &j| p.a[i].abs().total_cmp(&p.a[j].abs()))
            .unwrap();
        let free: Vec<usize> = (0..d).filter(|&i| i != k).collect();
        let complete = |y: &[f64]| -> Option<Vec<f64>> {
            let mut x = vec![0.0; d];
            let mut s = 0.0;
            for (t, &i) in free.iter().enumerate() {
                x[i] = y[t];
                s += p.a[i] * y[t];
            }
            x[k] = (p.b - s) / p.a[k];
            let ok = x[k].abs() <= 1.0 && dot(&p.e, &x) <= p.h;
            ok.then_some(x)
        };
        let m = free.len();
        let pts = match m {
            0 => 1,
            1 => 201,
            2 => 101,
            _ => 41,
        };
        let mut center = vec![0.0; m];
        let mut half = 1.0;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..40 {
            let mut idx = vec![0usize; m];
            loop {
                let y: Vec<f64> = (0..m)
                    .map(|t| {
                        let v = center[t] - half + 2.0 * half * idx[t] as f64 / (pts - 1).max(1) as f64;
                        v.clamp(-1.0, 1.0)
                    })
                    .collect();
                if let Some(x) = complete(&y) {
                    let v = p.f(&x);
                    if best.as_ref().is_none_or(|b| v < b.0) {
                        best = Some((v, x));
                    }
                }
                let mut t = 0;
                while t < m {
                    idx[t] += 1;
                    if idx[t] < pts {
                        break;
                    }
                    idx[t] = 0;
                    t += 1;
                }
                if t == m {
                    break;
                }
            }
            let bx = &best.as_ref().unwrap().1;
            center = free.iter().map(|&i| bx[i]).collect();
            half *= 0.5;
        }
        best.unwrap().1
    }

    #[test]
    fn random_qps_match_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..12 {
            let d = 1 + trial % 4;
            let p = Qp::random(d, &mut rng);
            let x_ref = grid_oracle(&p);
            let s = solve(&p, &vec![0.0; d], &SolverOptions::default()).unwrap();
            assert_eq!(s.status, SolveStatus::Converged, "trial {trial}");
            let dx = s.x.iter().zip(&x_ref).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dx < 1e-3, "trial {trial}: {:?} vs {:?}", s.x, x_ref);
            assert!((s.objective - p.f(&x_ref)).abs() < 1e-3);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Qp::random(3, &mut rng);
        let a = solve(&p, &[0.0; 3], &SolverOptions::default()).unwrap();
        let b = solve(&p, &[0.0; 3], &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.x.iter().zip(&b.x).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    proptest! {
        #[test]
        fn fd_matches_analytic(seed in 0u64..1000, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = Qp::random(d, &mut rng);
            p.analytic = true;
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.9..0.9)).collect();
            let (lb, ub) = p.bounds();
            let mut ga = vec![0.0; d];
            p.gradient(&x, &mut ga);
            let mut gf = vec![0.0; d];
            fd_gradient(&mut |z| p.objective(z), &x, &lb, &ub, &mut gf);
            let w_eq = [rng.random_range(-2.0..2.0)];
            let w_in = [rng.random_range(0.0..2.0)];
            let mut ja = vec![0.0; d];
            p.constraint_jt(&x, &w_eq, &w_in, &mut ja);
            let mut jf = vec![0.0; d];
            fd_constraint_jt(&p, &x, &w_eq, &w_in, &mut jf);
            for i in 0..d {
                prop_assert!((ga[i] - gf[i]).abs() <= 1e-5 * ga[i].abs().max(1.0));
                prop_assert!((ja[i] - jf[i]).abs() <= 1e-5 * ja[i].abs().max(1.0));
            }
        }

        #[test]
        fn analytic_and_fd_solves_agree(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 1 + (seed as usize) % 4;
            let mut p = Qp::random(d, &mut rng);
            let a = solve(&p, &vec![0.0; d], &SolverOptions::default()).unwrap();
            p.analytic = true;
            let b = solve(&p, &vec![0.0; d], &SolverOptions::default()).unwrap();
            for i in 0..d {
                prop_assert!((a.x[i] - b.x[i]).abs() < 1e-3);
            }
        }
    }
}

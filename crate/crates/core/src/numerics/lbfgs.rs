//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The public contract is maximization; internally the negated objective is
//! minimized following the two-loop recursion and the bracketing/zoom line
//! search of Nocedal & Wright (Alg. 7.4, 3.5, 3.6).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the Euclidean norm of the real gradient drops below this.
    pub grad_tol: f64,
    /// Stop when an accepted step improves the objective by less than
    /// `rel_tol * max(1, |f|)`. Zero disables the test.
    pub rel_tol: f64,
    /// Sufficient-increase constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 500,
            grad_tol: 1e-8,
            rel_tol: 0.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "line-search constants must satisfy 0 < c1 < c2 < 1 (c1={}, c2={})",
                self.c1, self.c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::Config("optimizer memory must be at least 1".into()));
        }
        if self.max_line_search == 0 {
            return Err(Error::Config("max_line_search must be at least 1".into()));
        }
        if !(self.grad_tol >= 0.0) || !(self.rel_tol >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimStatus {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    /// No step satisfying sufficient increase was found; the best iterate is
    /// returned.
    LineSearchFailed,
}

impl OptimStatus {
    pub fn is_failure(self) -> bool {
        matches!(self, OptimStatus::LineSearchFailed)
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// `trace[k]` is the objective after `k` iterations; `trace[0]` is the
    /// starting value.
    pub trace: Vec<f64>,
    pub status: OptimStatus,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Maximizes `objective` given its real gradient.
pub fn lbfgs_maximize<F, G>(
    mut objective: F,
    mut gradient: G,
    x0: &[f64],
    opts: &OptimizerOptions,
) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    lbfgs_maximize_with(
        |x, g| {
            let grad = gradient(x);
            g.copy_from_slice(&grad);
            objective(x)
        },
        x0,
        opts,
        |_, _, _| {},
    )
}

struct Point {
    x: Vec<f64>,
    /// Negated objective.
    phi: f64,
    /// Gradient of the negated objective.
    grad: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximizes `fg`, which returns the objective and writes the real gradient
/// into its second argument. `observer(k, x, f)` runs after the start point
/// (`k = 0`) and after every accepted iteration.
pub fn lbfgs_maximize_with<FG, O>(
    mut fg: FG,
    x0: &[f64],
    opts: &OptimizerOptions,
    mut observer: O,
) -> OptimResult
where
    FG: FnMut(&[f64], &mut [f64]) -> f64,
    O: FnMut(usize, &[f64], f64),
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| -> Point {
        let mut g = vec![0.0; n];
        let f = fg(x, &mut g);
        g.iter_mut().for_each(|v| *v = -*v);
        let phi = if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            -f
        } else {
            f64::INFINITY
        };
        Point {
            x: x.to_vec(),
            phi,
            grad: g,
        }
    };

    let mut cur = eval(x0);
    evaluations += 1;
    let mut trace = vec![-cur.phi];
    observer(0, &cur.x, -cur.phi);

    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut status = OptimStatus::MaxIterations;
    let mut iterations = 0usize;

    if !cur.phi.is_finite() {
        status = OptimStatus::LineSearchFailed;
    } else if norm(&cur.grad) <= opts.grad_tol {
        status = OptimStatus::GradientTolerance;
    } else {
        while iterations < opts.max_iters {
            let mut dir = two_loop(&cur.grad, &hist);
            let mut slope = dot(&cur.grad, &dir);
            if !(slope < 0.0) {
                hist.clear();
                dir = cur.grad.iter().map(|v| -v).collect();
                slope = dot(&cur.grad, &dir);
            }
            let alpha0 = if hist.is_empty() {
                (1.0 / norm(&cur.grad)).min(1.0)
            } else {
                1.0
            };

            let ls = wolfe_search(&mut eval, &cur, &dir, slope, alpha0, opts, &mut evaluations);
            let next = match ls {
                Some(p) => p,
                None => {
                    if !hist.is_empty() {
                        // retry once along steepest descent with fresh memory
                        hist.clear();
                        let sd: Vec<f64> = cur.grad.iter().map(|v| -v).collect();
                        let slope_sd = dot(&cur.grad, &sd);
                        let a0 = (1.0 / norm(&cur.grad)).min(1.0);
                        match wolfe_search(&mut eval, &cur, &sd, slope_sd, a0, opts, &mut evaluations) {
                            Some(p) => p,
                            None => {
                                status = OptimStatus::LineSearchFailed;
                                break;
                            }
                        }
                    } else {
                        status = OptimStatus::LineSearchFailed;
                        break;
                    }
                }
            };

            let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                if hist.len() == opts.memory {
                    hist.pop_front();
                }
                hist.push_back((s, y, 1.0 / sy));
            }

            let improvement = cur.phi - next.phi;
            let scale = next.phi.abs().max(1.0);
            cur = next;
            iterations += 1;
            trace.push(-cur.phi);
            observer(iterations, &cur.x, -cur.phi);

            if norm(&cur.grad) <= opts.grad_tol {
                status = OptimStatus::GradientTolerance;
                break;
            }
            if opts.rel_tol > 0.0 && improvement <= opts.rel_tol * scale {
                status = OptimStatus::FunctionTolerance;
                break;
            }
        }
    }

    OptimResult {
        value: -cur.phi,
        x: cur.x,
        trace,
        status,
        iterations,
        evaluations,
    }
}

fn two_loop(grad: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizer of the cubic interpolating (a, fa, da), (b, fb, db), clamped to
/// the inner 80% of the bracket.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let width = hi - lo;
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mut t = if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
    } else {
        f64::NAN
    };
    if !t.is_finite() {
        t = 0.5 * (lo + hi);
    }
    t.clamp(lo + 0.1 * width, hi - 0.1 * width)
}

fn wolfe_search<E>(
    eval: &mut E,
    start: &Point,
    dir: &[f64],
    slope0: f64,
    alpha0: f64,
    opts: &OptimizerOptions,
    evaluations: &mut usize,
) -> Option<Point>
where
    E: FnMut(&[f64]) -> Point,
{
    let phi0 = start.phi;
    let at = |alpha: f64| -> Vec<f64> {
        start.x.iter().zip(dir).map(|(x, d)| x + alpha * d).collect()
    };
    let armijo = |alpha: f64, phi: f64| phi <= phi0 + opts.c1 * alpha * slope0;
    let curvature = |d: f64| d.abs() <= -opts.c2 * slope0;

    // best point with sufficient decrease, used if the search runs out
    let mut fallback: Option<(f64, Point)> = None;
    let keep = |alpha: f64, p: &Point, fallback: &mut Option<(f64, Point)>| {
        if p.phi < phi0 && armijo(alpha, p.phi) {
            let better = fallback.as_ref().map_or(true, |(_, q)| p.phi < q.phi);
            if better {
                *fallback = Some((
                    alpha,
                    Point {
                        x: p.x.clone(),
                        phi: p.phi,
                        grad: p.grad.clone(),
                    },
                ));
            }
        }
    };

    let mut prev_alpha = 0.0;
    let mut prev_phi = phi0;
    let mut prev_d = slope0;
    let mut alpha = alpha0;
    let mut budget = opts.max_line_search;

    let (mut lo, mut lo_phi, mut lo_d, mut hi, mut hi_phi, mut hi_d);
    let mut first = true;
    loop {
        if budget == 0 {
            return fallback.map(|(_, p)| p);
        }
        budget -= 1;
        let p = eval(&at(alpha));
        *evaluations += 1;
        let d = dot(&p.grad, dir);
        keep(alpha, &p, &mut fallback);
        if !p.phi.is_finite() || !armijo(alpha, p.phi) || (!first && p.phi >= prev_phi) {
            lo = prev_alpha;
            lo_phi = prev_phi;
            lo_d = prev_d;
            hi = alpha;
            hi_phi = p.phi;
            hi_d = d;
            break;
        }
        if curvature(d) {
            return Some(p);
        }
        if d >= 0.0 {
            lo = alpha;
            lo_phi = p.phi;
            lo_d = d;
            hi = prev_alpha;
            hi_phi = prev_phi;
            hi_d = prev_d;
            break;
        }
        prev_alpha = alpha;
        prev_phi = p.phi;
        prev_d = d;
        alpha *= 2.0;
        first = false;
    }

    // zoom
    loop {
        if budget == 0 || (hi - lo).abs() < 1e-16 * lo.abs().max(1e-300) {
            return fallback.map(|(_, p)| p);
        }
        budget -= 1;
        let trial = if hi_phi.is_finite() && hi_d.is_finite() {
            cubic_step(lo, lo_phi, lo_d, hi, hi_phi, hi_d)
        } else {
            0.5 * (lo + hi)
        };
        let p = eval(&at(trial));
        *evaluations += 1;
        let d = dot(&p.grad, dir);
        keep(trial, &p, &mut fallback);
        if !p.phi.is_finite() || !armijo(trial, p.phi) || p.phi >= lo_phi {
            hi = trial;
            hi_phi = p.phi;
            hi_d = d;
        } else {
            if curvature(d) {
                return Some(p);
            }
            if d * (hi - lo) >= 0.0 {
                hi = lo;
                hi_phi = lo_phi;
                hi_d = lo_d;
            }
            lo = trial;
            lo_phi = p.phi;
            lo_d = d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let a = [1.5, -2.0, 0.25, 4.0];
        let f = |x: &[f64]| -x.iter().zip(&a).map(|(xi, ai)| (xi - ai).powi(2)).sum::<f64>();
        let g = |x: &[f64]| x.iter().zip(&a).map(|(xi, ai)| -2.0 * (xi - ai)).collect();
        let res = lbfgs_maximize(f, g, &[0.0; 4], &OptimizerOptions::default());
        for (xi, ai) in res.x.iter().zip(&a) {
            assert!((xi - ai).abs() < 1e-8);
        }
        assert_eq!(res.status, OptimStatus::GradientTolerance);
        assert_eq!(res.trace.len(), res.iterations + 1);
    }

    #[test]
    fn concave_quadratic_closed_form() {
        // f = -x^T Q x + b^T x, optimum Q^{-1} b / 2
        let q = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = [1.0, -2.0, 0.5];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s -= x[i] * q[i][j] * x[j];
                }
                s += b[i] * x[i];
            }
            s
        };
        let g = |x: &[f64]| {
            (0..3)
                .map(|i| b[i] - 2.0 * (0..3).map(|j| q[i][j] * x[j]).sum::<f64>())
                .collect()
        };
        let res = lbfgs_maximize(f, g, &[0.0; 3], &OptimizerOptions::default());
        let q_na = nalgebra::Matrix3::new(4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0);
        let opt = q_na.try_inverse().unwrap() * nalgebra::Vector3::new(b[0], b[1], b[2]) / 2.0;
        for i in 0..3 {
            assert!((res.x[i] - opt[i]).abs() < 1e-6);
        }
        assert!(res.iterations <= 6, "took {} iterations", res.iterations);
    }

    #[test]
    fn rosenbrock_trace_is_monotone() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let g = |x: &[f64]| {
            vec![
                2.0 * (1.0 - x[0]) + 400.0 * x[0] * (x[1] - x[0] * x[0]),
                -200.0 * (x[1] - x[0] * x[0]),
            ]
        };
        let res = lbfgs_maximize(f, g, &[-1.2, 1.0], &OptimizerOptions::default());
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unbounded_objective_hits_iteration_cap() {
        let f = |x: &[f64]| x[0];
        let g = |_: &[f64]| vec![1.0];
        let opts = OptimizerOptions {
            max_iters: 5,
            ..Default::default()
        };
        let res = lbfgs_maximize(f, g, &[0.0], &opts);
        assert_eq!(res.iterations, 5);
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn inconsistent_gradient_fails_softly() {
        // the gradient points the wrong way: no ascent step exists
        let f = |x: &[f64]| -x[0] * x[0];
        let g = |x: &[f64]| vec![2.0 * x[0] + 1.0];
        let res = lbfgs_maximize(f, g, &[0.0], &OptimizerOptions::default());
        assert_eq!(res.status, OptimStatus::LineSearchFailed);
        assert_eq!(res.x, vec![0.0]);
    }

    #[test]
    fn options_validation() {
        let bad = OptimizerOptions {
            c1: 0.95,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(OptimizerOptions::default().validate().is_ok());
    }
}

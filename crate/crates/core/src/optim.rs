//! Limited-memory BFGS with central finite-difference gradients.
//!
//! Non-finite objective values are treated as infeasible: the line search
//! backtracks away from them.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the gradient ∞-norm falls below this.
    pub grad_tol: f64,
    /// Stop when `|Δf| <= rel_tol · max(|f|, 1)`.
    pub rel_tol: f64,
    /// Largest ∞-norm of a single trial step.
    pub max_step: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 400,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            max_step: 2.0,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective value after each accepted iteration, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

/// Central differences with step `h_i = fd_step · max(|x_i|, 1)`.
///
/// Falls back to a one-sided difference when one neighbour is infeasible and
/// to zero when both are.
pub fn central_gradient<F>(f: &F, x: &[f64], fx: f64, fd_step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = fd_step * x[i].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fx) / h,
                (false, true) => (fx - fm) / h,
                (false, false) => 0.0,
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Two-loop recursion: returns `-H·g`.
fn search_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let scale = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= scale);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Minimises `f` from `x0` using finite-difference gradients.
pub fn minimize<F>(f: F, x0: &[f64], opts: &LbfgsOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evaluations = 1;
    let mut trace = vec![fx];
    if !fx.is_finite() || n == 0 {
        return OptimResult {
            x,
            f: fx,
            iterations: 0,
            evaluations,
            converged: n == 0 && fx.is_finite(),
            trace,
        };
    }
    let mut g = central_gradient(&f, &x, fx, opts.fd_step);
    evaluations += 2 * n;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if inf_norm(&g) < opts.grad_tol {
            converged = true;
            break;
        }
        let mut d = search_direction(&g, &history);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|gi| -gi).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if history.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };
        let d_norm = inf_norm(&d);
        if step * d_norm > opts.max_step {
            step = opts.max_step / d_norm;
        }

        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let ft = f(&trial);
            evaluations += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if history.is_empty() {
                // no descent possible along the gradient at this resolution
                converged = inf_norm(&g) < 1e3 * opts.grad_tol;
                break;
            }
            history.clear();
            continue;
        };
        iterations += 1;
        let g_new = central_gradient(&f, &x_new, f_new, opts.fd_step);
        evaluations += 2 * n;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let change = (fx - f_new).abs();
        x = x_new;
        g = g_new;
        let previous = fx;
        fx = f_new;
        trace.push(fx);
        if change <= opts.rel_tol * previous.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    OptimResult {
        x,
        f: fx,
        iterations,
        evaluations,
        converged,
        trace,
    }
}

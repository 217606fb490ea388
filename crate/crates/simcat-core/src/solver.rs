//! Limited-memory BFGS with a strong Wolfe line search. Written for
//! smooth convex objectives in the few-thousand-parameter range; the
//! stopping rule is the sup norm of the gradient.

use std::collections::VecDeque;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait Objective {
    fn eval(&self, x: &ArrayView1<f64>) -> Result<(f64, Array1<f64>)>;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub history: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iterations: 1500, tolerance: 1e-3, history: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: Array1<f64>,
    pub loss: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Eval {
    alpha: f64,
    f: f64,
    g: Array1<f64>,
    dphi: f64,
}

fn eval_at<O: Objective>(
    obj: &O,
    x: &Array1<f64>,
    d: &Array1<f64>,
    alpha: f64,
) -> Result<Eval> {
    let xa = x + &(d * alpha);
    let (f, g) = obj.eval(&xa.view())?;
    let dphi = g.dot(d);
    Ok(Eval { alpha, f, g, dphi })
}

/// Cubic minimizer of the interpolant through (a, fa, da) and
/// (b, fb, db); falls back to the midpoint when the cubic is
/// degenerate or lands outside the bracket.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mid = 0.5 * (a + b);
    if disc <= 0.0 || !disc.is_finite() {
        return mid;
    }
    let d2 = disc.sqrt() * (b - a).signum();
    let t = b - (b - a) * ((db + d2 - d1) / (db - da + 2.0 * d2));
    if !t.is_finite() {
        return mid;
    }
    let lo = a.min(b);
    let hi = a.max(b);
    let margin = 0.1 * (hi - lo);
    t.clamp(lo + margin, hi - margin)
}

/// Strong Wolfe search (bracket then zoom). Returns the accepted
/// evaluation, or the best Armijo point found when curvature cannot be
/// met, or None when no progress is possible.
fn wolfe_search<O: Objective>(
    obj: &O,
    x: &Array1<f64>,
    f0: f64,
    dphi0: f64,
    d: &Array1<f64>,
    alpha_init: f64,
) -> Result<Option<Eval>> {
    debug_assert!(dphi0 < 0.0);
    let mut prev = Eval { alpha: 0.0, f: f0, g: Array1::zeros(0), dphi: dphi0 };
    let mut alpha = alpha_init.max(1e-16);
    const ALPHA_MAX: f64 = 1e6;
    for i in 0..25 {
        let cur = match eval_at(obj, x, d, alpha) {
            Ok(e) => e,
            Err(_) => {
                // objective blew up out here: bring the bracket in
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
        };
        if !cur.f.is_finite() {
            let hi = Eval { alpha: cur.alpha, f: f64::INFINITY, g: cur.g, dphi: cur.dphi };
            return zoom(obj, x, f0, dphi0, d, prev, hi);
        }
        if cur.f > f0 + C1 * cur.alpha * dphi0 || (i > 0 && cur.f >= prev.f) {
            return zoom(obj, x, f0, dphi0, d, prev, cur);
        }
        if cur.dphi.abs() <= -C2 * dphi0 {
            return Ok(Some(cur));
        }
        if cur.dphi >= 0.0 {
            return zoom(obj, x, f0, dphi0, d, cur, prev);
        }
        prev = cur;
        alpha = (2.0 * alpha).min(ALPHA_MAX);
        if alpha >= ALPHA_MAX {
            return Ok(Some(prev));
        }
    }
    Ok(Some(prev))
}

/// `lo` always satisfies Armijo with the lowest f seen; `hi` is the
/// other end of the bracket.
fn zoom<O: Objective>(
    obj: &O,
    x: &Array1<f64>,
    f0: f64,
    dphi0: f64,
    d: &Array1<f64>,
    mut lo: Eval,
    mut hi: Eval,
) -> Result<Option<Eval>> {
    for _ in 0..30 {
        if (hi.alpha - lo.alpha).abs() < 1e-16 * (1.0 + lo.alpha.abs()) {
            break;
        }
        let alpha = if lo.f.is_finite() && hi.f.is_finite() {
            cubic_step(lo.alpha, lo.f, lo.dphi, hi.alpha, hi.f, hi.dphi)
        } else {
            0.5 * (lo.alpha + hi.alpha)
        };
        let cur = match eval_at(obj, x, d, alpha) {
            Ok(e) if e.f.is_finite() => e,
            _ => {
                hi = Eval { alpha, f: f64::INFINITY, g: Array1::zeros(0), dphi: 0.0 };
                continue;
            }
        };
        if cur.f > f0 + C1 * cur.alpha * dphi0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dphi.abs() <= -C2 * dphi0 {
                return Ok(Some(cur));
            }
            if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, cur);
            } else {
                lo = cur;
            }
        }
    }
    if lo.alpha > 0.0 && lo.f < f0 {
        // curvature never satisfied; take the best Armijo point
        return Ok(Some(lo));
    }
    Ok(None)
}

/// Two-loop recursion over the stored (s, y) pairs, scaled by the
/// standard gamma = s.y / y.y initial Hessian guess.
fn two_loop(
    g: &Array1<f64>,
    hist: &VecDeque<(Array1<f64>, Array1<f64>, f64)>,
) -> Array1<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * s.dot(&q);
        q.zip_mut_with(y, |qv, &yv| *qv -= a * yv);
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = s.dot(y) / y.dot(y).max(1e-300);
        q.mapv_inplace(|v| v * gamma);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * y.dot(&q);
        q.zip_mut_with(s, |qv, &sv| *qv += (a - b) * sv);
    }
    q.mapv_inplace(|v| -v);
    q
}

pub fn minimize<O: Objective>(
    obj: &O,
    x0: Array1<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if cfg.tolerance <= 0.0 {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    if cfg.history == 0 {
        return Err(Error::invalid("history must be at least 1"));
    }
    let (mut f, mut g) = obj.eval(&x0.view())?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("objective is not finite at the initial point"));
    }
    let mut x = x0;
    let mut hist: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= cfg.tolerance;
    while !converged && iterations < cfg.max_iterations {
        let mut d = two_loop(&g, &hist);
        let mut dphi0 = d.dot(&g);
        if dphi0 >= -1e-14 * inf_norm(&d).max(1.0) * inf_norm(&g).max(1.0) {
            // curvature information went stale; restart from steepest descent
            hist.clear();
            d = g.mapv(|v| -v);
            dphi0 = d.dot(&g);
            if dphi0 >= 0.0 {
                break;
            }
        }
        let alpha_init = if hist.is_empty() {
            (1.0 / (1.0 + g.dot(&g).sqrt())).min(1.0)
        } else {
            1.0
        };
        let step = wolfe_search(obj, &x, f, dphi0, &d, alpha_init)?;
        let step = match step {
            Some(e) if e.alpha > 0.0 && e.f <= f => e,
            _ => break,
        };
        let x_new = &x + &(&d * step.alpha);
        let s = &x_new - &x;
        let y = &step.g - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.dot(&s).sqrt() * y.dot(&y).sqrt() {
            if hist.len() == cfg.history {
                hist.pop_front();
            }
            hist.push_back((s, y.clone(), 1.0 / sy));
        }
        x = x_new;
        f = step.f;
        g = step.g;
        iterations += 1;
        converged = inf_norm(&g) <= cfg.tolerance;
    }
    Ok(SolveResult {
        grad_inf_norm: inf_norm(&g),
        x,
        loss: f,
        iterations,
        converged,
    })
}

//! Riemannian conjugate gradient on `ℝ³ × S³` with the grasp type frozen.

use serde::{Deserialize, Serialize};

use super::{CostEval, MapProblem};
use crate::error::{Error, Result};
use crate::geometry::TangentVector;
use crate::hand::HandConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Length of the first trial step along the search direction.
    pub initial_step: f64,
    /// Longest trial step.
    pub max_step: f64,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 30,
            initial_step: 0.05,
            max_step: 0.5,
            grad_tol: 1e-10,
        }
    }
}

/// One iteration of the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iter: usize,
    /// Cost after the iteration (unchanged when no step was accepted).
    pub cost: f64,
    /// Gradient norm at the start of the iteration.
    pub grad_norm: f64,
    /// Accepted step size `α`, zero when the line search failed.
    pub step_size: f64,
    pub accepted: bool,
    /// Trial steps rejected before acceptance.
    pub rejected: usize,
    /// The direction was reset to steepest descent.
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub steps: Vec<TraceStep>,
    pub cost_evaluations: usize,
    /// Largest `|qᵀ d_q|` over the search directions; zero up to rounding.
    pub tangent_error: f64,
    /// Reason the run ended early, if abnormal.
    pub error: Option<String>,
}

impl OptTrace {
    /// Accepted costs never increase.
    pub fn is_monotone(&self) -> bool {
        let mut last = self.initial_cost;
        for s in self.steps.iter().filter(|s| s.accepted) {
            if s.cost > last {
                return false;
            }
            last = s.cost;
        }
        self.final_cost <= self.initial_cost
    }
}

fn transport(v: &TangentVector, to: &HandConfig) -> TangentVector {
    v.projected(&to.q)
}

/// Minimizes the problem cost from `h0` with Polak–Ribière⁺ conjugate gradient,
/// vector transport by projection and backtracking Armijo line search.
///
/// A non-finite cost during the run ends it with the best point so far and
/// the reason recorded in the trace; only a non-finite start is an error.
pub fn geometric_cg(prob: &MapProblem<'_>, h0: &HandConfig, cfg: &CgConfig) -> Result<(HandConfig, OptTrace)> {
    let first = prob.cost_grad(h0)?;
    if !first.cost.is_finite() {
        return Err(Error::Planning(format!("initial cost {} is not finite", first.cost)));
    }
    let mut trace = OptTrace {
        initial_cost: first.cost,
        final_cost: first.cost,
        steps: Vec::new(),
        cost_evaluations: 1,
        tangent_error: 0.0,
        error: None,
    };
    let mut h = *h0;
    let mut cur: CostEval = first;
    let mut dir = cur.grad.scale(-1.0);
    let mut steepest = true;
    // Barzilai–Borwein scale `sᵀs / sᵀy` from the last accepted step.
    let mut bb: Option<f64> = None;

    for iter in 0..cfg.max_iters {
        let grad_norm = cur.grad.norm();
        if grad_norm < cfg.grad_tol {
            break;
        }
        let mut restarted = false;
        let mut slope = cur.grad.dot(&dir);
        if slope >= 0.0 {
            dir = cur.grad.scale(-1.0);
            slope = -grad_norm * grad_norm;
            restarted = true;
            steepest = true;
        }
        trace.tangent_error = trace.tangent_error.max(dir.dq.dot(&h.q.as_vector()).abs());
        let dnorm = dir.norm();
        let mut alpha = match bb {
            Some(a) => a,
            None => cfg.initial_step / dnorm,
        };
        alpha = alpha.min(cfg.max_step / dnorm);

        let mut accepted: Option<(HandConfig, f64)> = None;
        let mut rejected = 0;
        let mut failure: Option<String> = None;
        for _ in 0..=cfg.max_backtracks {
            let trial = match h.retract(&dir.scale(alpha)) {
                Ok(t) => t,
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            };
            trace.cost_evaluations += 1;
            let c = match prob.cost(&trial) {
                Ok(c) => c,
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            };
            if c <= cur.cost + cfg.armijo_c * alpha * slope {
                accepted = Some((trial, alpha));
                break;
            }
            rejected += 1;
            alpha *= cfg.shrink;
        }
        let Some((next, alpha)) = accepted else {
            trace.steps.push(TraceStep {
                iter,
                cost: cur.cost,
                grad_norm,
                step_size: 0.0,
                accepted: false,
                rejected,
                restarted,
            });
            trace.error = failure;
            if trace.error.is_some() || steepest {
                break;
            }
            // A conjugate direction failed; retry along steepest descent.
            dir = cur.grad.scale(-1.0);
            steepest = true;
            bb = None;
            continue;
        };
        let next_eval = match prob.cost_grad(&next) {
            Ok(e) => e,
            Err(e) => {
                trace.steps.push(TraceStep {
                    iter,
                    cost: cur.cost,
                    grad_norm,
                    step_size: 0.0,
                    accepted: false,
                    rejected,
                    restarted,
                });
                trace.error = Some(e.to_string());
                break;
            }
        };
        trace.cost_evaluations += 1;

        let g_old = transport(&cur.grad, &next);
        let d_old = transport(&dir, &next);
        let g = next_eval.grad;
        let s = d_old.scale(alpha);
        let y = g.add(&g_old.scale(-1.0));
        let sy = s.dot(&y);
        bb = (sy > 0.0).then(|| s.dot(&s) / sy);
        let beta = (g.dot(&g.add(&g_old.scale(-1.0))) / (grad_norm * grad_norm)).max(0.0);
        dir = g.scale(-1.0).add(&d_old.scale(beta)).projected(&next.q);
        steepest = beta == 0.0;

        h = next;
        cur = next_eval;
        trace.steps.push(TraceStep {
            iter,
            cost: cur.cost,
            grad_norm,
            step_size: alpha,
            accepted: true,
            rejected,
            restarted,
        });
    }
    trace.final_cost = cur.cost;
    Ok((h, trace))
}

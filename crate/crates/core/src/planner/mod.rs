//! MAP and MLE grasp planning: the cost `−log r̂(S=1|h) − log r̂(c|S=1,h) − log p(h)`,
//! conjugate gradient on `ℝ³ × S³`, and the candidate sweep over grasp types.

mod cg;
mod strategy;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cg::{geometric_cg, CgConfig, OptTrace, TraceStep};
pub use strategy::{plan_strategy, Observation, Strategy, StrategyModels};

use crate::distributions::HandPrior;
use crate::error::{Error, Result};
use crate::geometry::TangentVector;
use crate::hand::{GraspType, HandConfig};
use crate::ratio::HandRatio;

/// The optimization problem for one observation.
pub struct MapProblem<'a> {
    success: &'a dyn HandRatio,
    conditioning: Option<&'a dyn HandRatio>,
    prior: &'a HandPrior,
    use_prior: bool,
}

/// The individual terms of the cost at one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    /// `−log r̂(S = 1 | h)`.
    pub success: f64,
    /// `−log r̂(c | S = 1, h)` when a conditioning model is used.
    pub conditioning: Option<f64>,
    /// `−log p(h)` when the prior is used.
    pub prior: Option<f64>,
    pub total: f64,
}

/// Cost and Riemannian gradient at one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEval {
    pub cost: f64,
    pub grad: TangentVector,
    /// Set when the prior is used and `h` leaves its support; the cost is then `+∞`.
    pub out_of_support: bool,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_nan() || v == f64::INFINITY {
        Err(Error::NonFinite(format!("{what} log-ratio {v}")))
    } else {
        Ok(v)
    }
}

impl<'a> MapProblem<'a> {
    /// `conditioning` enables the second ratio term; `use_prior` the `−log p(h)` term.
    pub fn new(
        success: &'a dyn HandRatio,
        conditioning: Option<&'a dyn HandRatio>,
        prior: &'a HandPrior,
        use_prior: bool,
    ) -> Self {
        Self { success, conditioning, prior, use_prior }
    }

    pub fn prior(&self) -> &HandPrior {
        self.prior
    }

    pub fn use_prior(&self) -> bool {
        self.use_prior
    }

    pub fn use_conditioning(&self) -> bool {
        self.conditioning.is_some()
    }

    fn outside(&self, h: &HandConfig) -> bool {
        self.use_prior && self.prior.support_violation(h)
    }

    pub fn terms(&self, h: &HandConfig) -> Result<CostTerms> {
        let one = std::slice::from_ref(h);
        if self.outside(h) {
            return Ok(CostTerms {
                success: f64::NAN,
                conditioning: None,
                prior: Some(f64::INFINITY),
                total: f64::INFINITY,
            });
        }
        let success = -finite(self.success.log_ratio_batch(one)?[0], "success")?;
        let conditioning = match self.conditioning {
            Some(c) => Some(-finite(c.log_ratio_batch(one)?[0], "conditioning")?),
            None => None,
        };
        let prior = self.use_prior.then(|| -self.prior.log_prob(h));
        let total = success + conditioning.unwrap_or(0.0) + prior.unwrap_or(0.0);
        Ok(CostTerms { success, conditioning, prior, total })
    }

    pub fn cost(&self, h: &HandConfig) -> Result<f64> {
        Ok(self.terms(h)?.total)
    }

    /// Costs of many configurations, with the networks evaluated in one batch.
    pub fn costs(&self, hands: &[HandConfig]) -> Result<Vec<f64>> {
        let inside: Vec<usize> = (0..hands.len()).filter(|&i| !self.outside(&hands[i])).collect();
        let batch: Vec<HandConfig> = inside.iter().map(|&i| hands[i]).collect();
        let mut out = vec![f64::INFINITY; hands.len()];
        if batch.is_empty() {
            return Ok(out);
        }
        let s = self.success.log_ratio_batch(&batch)?;
        let c = match self.conditioning {
            Some(c) => Some(c.log_ratio_batch(&batch)?),
            None => None,
        };
        for (k, &i) in inside.iter().enumerate() {
            let mut total = -finite(s[k], "success")?;
            if let Some(c) = &c {
                total += -finite(c[k], "conditioning")?;
            }
            if self.use_prior {
                total += -self.prior.log_prob(&hands[i]);
            }
            out[i] = total;
        }
        Ok(out)
    }

    pub fn cost_grad(&self, h: &HandConfig) -> Result<CostEval> {
        if self.outside(h) {
            return Ok(CostEval { cost: f64::INFINITY, grad: TangentVector::zero(), out_of_support: true });
        }
        let (ls, gs) = self.success.log_ratio_grad(h)?;
        let mut cost = -finite(ls, "success")?;
        let mut grad = gs.scale(-1.0);
        if let Some(c) = self.conditioning {
            let (lc, gc) = c.log_ratio_grad(h)?;
            cost += -finite(lc, "conditioning")?;
            grad = grad.add(&gc.scale(-1.0));
        }
        if self.use_prior {
            cost += -self.prior.log_prob(h);
            grad = grad.add(&self.prior.grad(h).scale(-1.0));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("cost gradient".into()));
        }
        Ok(CostEval { cost, grad: grad.projected(&h.q), out_of_support: false })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    /// Initial `(x, q)` candidates drawn from the prior.
    pub candidates: usize,
    pub cg: CgConfig,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { candidates: 1000, cg: CgConfig::default() }
    }
}

/// Result of optimizing one grasp type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRun {
    pub g: GraspType,
    /// Cost evaluations spent on the candidate sweep.
    pub candidate_evaluations: usize,
    /// Index of the best candidate; ties go to the lowest index.
    pub start_index: usize,
    pub start_cost: f64,
    pub hand: HandConfig,
    pub cost: f64,
    pub trace: OptTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub hand: HandConfig,
    pub cost: f64,
    pub terms: Option<CostTerms>,
    /// One run per grasp type, in `basic, wide, pinch` order.
    pub runs: Vec<GraspRun>,
    pub wall_time_s: f64,
}

impl PlanOutcome {
    /// Lowest cost among all initial candidates of all grasp types.
    pub fn best_start_cost(&self) -> f64 {
        self.runs.iter().map(|r| r.start_cost).fold(f64::INFINITY, f64::min)
    }
}

fn argmin(costs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in costs.iter().enumerate() {
        if c < f64::INFINITY && best.is_none_or(|b| c < costs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Samples candidates `(x, q) ∼ p(x) p(q)`, starts conjugate gradient from the
/// best candidate of each grasp type and returns the lowest-cost result.
pub fn plan<R: Rng + ?Sized>(prob: &MapProblem<'_>, cfg: &PlanConfig, rng: &mut R) -> Result<PlanOutcome> {
    let start = Instant::now();
    if cfg.candidates == 0 {
        return Err(Error::Config("at least one planning candidate is required".into()));
    }
    let prior = prob.prior();
    let poses: Vec<HandConfig> = (0..cfg.candidates)
        .map(|_| {
            let x = prior.sample_position(rng);
            let q = prior.rotation.sample(rng);
            HandConfig::new(x, q, GraspType::Basic)
        })
        .collect();
    let runs: Vec<Result<GraspRun>> = GraspType::ALL
        .par_iter()
        .map(|&g| {
            let hands: Vec<HandConfig> = poses.iter().map(|p| HandConfig { g, ..*p }).collect();
            let costs = prob.costs(&hands)?;
            let i = argmin(&costs)
                .ok_or_else(|| Error::Planning(format!("every {} candidate has infinite cost", g.name())))?;
            let (hand, trace) = geometric_cg(prob, &hands[i], &cfg.cg)?;
            Ok(GraspRun {
                g,
                candidate_evaluations: hands.len(),
                start_index: i,
                start_cost: costs[i],
                hand,
                cost: trace.final_cost,
                trace,
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let best = runs.iter().enumerate().fold(0, |b, (i, r)| if r.cost < runs[b].cost { i } else { b });
    let hand = runs[best].hand;
    let terms = prob.terms(&hand)?;
    Ok(PlanOutcome {
        hand,
        cost: runs[best].cost,
        terms: Some(terms),
        runs,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

//! The inference strategies compared in the benchmark.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{plan, MapProblem, PlanConfig, PlanOutcome};
use crate::distributions::HandPrior;
use crate::error::{Error, Result};
use crate::ratio::{BoundRatio, Conditioning, ConstantRatio, HandRatio, RatioModel};
use crate::world::{DepthImage, ObjectSpec, ScenePose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// `h ∼ p(h)`.
    PriorSample,
    /// The planner with both ratios set to 1.
    PriorArgmax,
    /// Success ratio only, without the prior.
    MetricMle,
    /// Success ratio and prior.
    MetricMap,
    /// Success and image ratios, without the prior.
    ImageMle,
    /// Success and image ratios and prior.
    ImageMap,
    /// Success and ground-truth-scene ratios, without the prior.
    OracleMle,
    /// Success and ground-truth-scene ratios and prior.
    OracleMap,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::PriorSample,
        Strategy::PriorArgmax,
        Strategy::MetricMle,
        Strategy::MetricMap,
        Strategy::ImageMle,
        Strategy::ImageMap,
        Strategy::OracleMle,
        Strategy::OracleMap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::PriorSample => "prior-sample",
            Strategy::PriorArgmax => "prior-argmax",
            Strategy::MetricMle => "metric-mle",
            Strategy::MetricMap => "metric-map",
            Strategy::ImageMle => "image-mle",
            Strategy::ImageMap => "image-map",
            Strategy::OracleMle => "oracle-mle",
            Strategy::OracleMap => "oracle-map",
        }
    }

    pub fn uses_prior(self) -> bool {
        matches!(self, Strategy::PriorArgmax | Strategy::MetricMap | Strategy::ImageMap | Strategy::OracleMap)
    }

    pub fn needs_success_model(self) -> bool {
        !matches!(self, Strategy::PriorSample | Strategy::PriorArgmax)
    }

    pub fn needs_image_model(self) -> bool {
        matches!(self, Strategy::ImageMle | Strategy::ImageMap)
    }

    pub fn needs_oracle_model(self) -> bool {
        matches!(self, Strategy::OracleMle | Strategy::OracleMap)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Strategy::ALL.iter().map(|k| k.name()).collect();
            Error::Invalid(format!("unknown strategy {s:?} ({})", names.join(", ")))
        })
    }
}

/// Trained models available to the planner.
#[derive(Debug, Clone, Copy, Default)]
pub struct StrategyModels<'a> {
    pub success: Option<&'a RatioModel>,
    pub image: Option<&'a RatioModel>,
    pub oracle: Option<&'a RatioModel>,
}

/// What the robot knows about the scene.
#[derive(Debug, Clone, Copy, Default)]
pub struct Observation<'a> {
    pub image: Option<&'a DepthImage>,
    /// Ground truth, seen only by the oracle strategies.
    pub scene: Option<(&'a ObjectSpec, &'a ScenePose)>,
}

fn require<'a, T>(v: Option<&'a T>, strategy: Strategy, what: &str) -> Result<&'a T> {
    v.ok_or_else(|| Error::MissingModel(format!("{strategy} ({what})")))
}

/// Plans a grasp with the given strategy.
pub fn plan_strategy<R: Rng + ?Sized>(
    strategy: Strategy,
    models: &StrategyModels<'_>,
    observation: &Observation<'_>,
    prior: &HandPrior,
    cfg: &PlanConfig,
    rng: &mut R,
) -> Result<PlanOutcome> {
    let start = Instant::now();
    match strategy {
        Strategy::PriorSample => {
            let hand = prior.sample(rng);
            Ok(PlanOutcome {
                hand,
                cost: -prior.log_prob(&hand),
                terms: None,
                runs: Vec::new(),
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        }
        Strategy::PriorArgmax => plan(&MapProblem::new(&ConstantRatio(0.0), None, prior, true), cfg, rng),
        _ => {
            let success_model = require(models.success, strategy, "success model")?;
            let success = success_model.bind(&Conditioning::Success(true))?;
            let conditioning: Option<BoundRatio<'_>> = if strategy.needs_image_model() {
                let m = require(models.image, strategy, "image model")?;
                let img = require(observation.image, strategy, "depth image")?;
                Some(m.bind(&Conditioning::Image(img))?)
            } else if strategy.needs_oracle_model() {
                let m = require(models.oracle, strategy, "oracle model")?;
                let (object, pose) =
                    observation.scene.ok_or_else(|| Error::MissingModel(format!("{strategy} (scene ground truth)")))?;
                Some(m.bind(&Conditioning::Oracle { object, pose })?)
            } else {
                None
            };
            let conditioning = conditioning.as_ref().map(|c| c as &dyn HandRatio);
            plan(&MapProblem::new(&success, conditioning, prior, strategy.uses_prior()), cfg, rng)
        }
    }
}

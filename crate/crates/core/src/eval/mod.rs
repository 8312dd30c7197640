//! Success-rate benchmarks of the planning strategies and posterior export.

mod posterior;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use posterior::{
    export_posterior, write_posterior, PositionDensity, PosteriorExport, PosteriorGrid, RotationDensity,
};

use crate::distributions::{HandPrior, ScenePrior};
use crate::error::{Error, Result};
use crate::planner::{plan_strategy, Observation, PlanConfig, Strategy, StrategyModels};
use crate::world::{render_depth, sample_nuisances, simulate_grasp, ObjectSpec, WorldParams};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.low <= other.high && other.low <= self.high
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> Result<Interval> {
    if n == 0 {
        return Err(Error::Invalid("interval of an empty sample".into()));
    }
    if successes > n {
        return Err(Error::Invalid(format!("{successes} successes out of {n} trials")));
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At 0 or n successes the bound is exactly 0 or 1.
    let low = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if p == 1.0 { 1.0 } else { (center + half).min(1.0) };
    Ok(Interval { low, high })
}

/// Per-object bucket: shape family and size class of the largest extent.
pub fn object_key(object: &ObjectSpec) -> String {
    let e = object.extents();
    let size = e.x.max(e.y).max(e.z);
    let bucket = if size < 0.10 {
        "small"
    } else if size < 0.16 {
        "medium"
    } else {
        "large"
    };
    format!("{}/{bucket}", object.shape.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectStats {
    pub key: String,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub n_trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Wilson 95% interval of the success rate.
    pub interval: Interval,
    /// Trials whose planning failed; they count as failed grasps.
    pub planning_failures: usize,
    pub per_object: Vec<ObjectStats>,
    pub mean_planning_time_s: f64,
    pub wall_time_s: f64,
}

/// Outcome of one benchmark trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub object_key: String,
    pub success: bool,
    pub planning_error: Option<String>,
    pub planning_time_s: f64,
}

/// Everything a benchmark needs besides the strategy.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkSetup<'a> {
    pub models: StrategyModels<'a>,
    pub hand_prior: &'a HandPrior,
    pub scene_prior: &'a ScenePrior,
    pub world: &'a WorldParams,
    pub plan: &'a PlanConfig,
}

/// Runs one trial: scene and observation from the priors, a planned grasp and
/// a lift test under freshly drawn nuisances.
pub fn run_trial(strategy: Strategy, setup: &BenchmarkSetup<'_>, index: usize, seed: u64) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let scene = setup.scene_prior.sample(&mut rng);
    let seen = sample_nuisances(&setup.world.camera, &mut rng);
    let image =
        strategy.needs_image_model().then(|| render_depth(&scene.object, &scene.pose, &seen, &setup.world.camera));
    let obs = Observation { image: image.as_ref(), scene: Some((&scene.object, &scene.pose)) };
    let mut plan_rng = ChaCha8Rng::seed_from_u64(rand::Rng::random(&mut rng));
    let start = Instant::now();
    let planned = plan_strategy(strategy, &setup.models, &obs, setup.hand_prior, setup.plan, &mut plan_rng);
    let planning_time_s = start.elapsed().as_secs_f64();
    let fresh = sample_nuisances(&setup.world.camera, &mut rng);
    let (success, planning_error) = match planned {
        Ok(out) => {
            let outcome = simulate_grasp(&out.hand, &scene.object, &scene.pose, &fresh, &setup.world.gripper, &mut rng);
            (outcome.success, None)
        }
        Err(e) => (false, Some(e.to_string())),
    };
    TrialRecord { index, object_key: object_key(&scene.object), success, planning_error, planning_time_s }
}

/// Checks that the strategy's models are present before any trial runs.
fn check_models(strategy: Strategy, models: &StrategyModels<'_>) -> Result<()> {
    let missing = (strategy.needs_success_model() && models.success.is_none())
        || (strategy.needs_image_model() && models.image.is_none())
        || (strategy.needs_oracle_model() && models.oracle.is_none());
    if missing {
        return Err(Error::MissingModel(strategy.name().into()));
    }
    Ok(())
}

/// Benchmarks a strategy over `n_trials` independent trials; trial `t` uses
/// the seed `seed + t`, so results do not depend on the thread count.
pub fn run_benchmark(
    strategy: Strategy,
    setup: &BenchmarkSetup<'_>,
    n_trials: usize,
    seed: u64,
) -> Result<BenchmarkResult> {
    let start = Instant::now();
    if n_trials == 0 {
        return Err(Error::Invalid("a benchmark needs at least one trial".into()));
    }
    check_models(strategy, &setup.models)?;
    let records: Vec<TrialRecord> =
        (0..n_trials).into_par_iter().map(|t| run_trial(strategy, setup, t, seed)).collect();
    Ok(summarize(strategy, seed, &records, start.elapsed().as_secs_f64()))
}

/// Aggregates trial records in index order.
pub fn summarize(strategy: Strategy, seed: u64, records: &[TrialRecord], wall_time_s: f64) -> BenchmarkResult {
    let n = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let mut objects: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = objects.entry(&r.object_key).or_default();
        e.0 += 1;
        e.1 += usize::from(r.success);
    }
    let per_object = objects
        .into_iter()
        .map(|(k, (t, s))| ObjectStats { key: k.to_string(), trials: t, successes: s, rate: s as f64 / t as f64 })
        .collect();
    BenchmarkResult {
        strategy,
        seed,
        n_trials: n,
        successes,
        rate: successes as f64 / n.max(1) as f64,
        interval: wilson_interval(successes, n.max(1), Z95).expect("counts are consistent"),
        planning_failures: records.iter().filter(|r| r.planning_error.is_some()).count(),
        per_object,
        mean_planning_time_s: records.iter().map(|r| r.planning_time_s).sum::<f64>() / n.max(1) as f64,
        wall_time_s,
    }
}

//! Run configuration: every setting that affects results, loaded from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::{HandPrior, ScenePrior};
use crate::error::{Error, Result};
use crate::eval::PosteriorGrid;
use crate::planner::PlanConfig;
use crate::ratio::{Architecture, TrainConfig};
use crate::world::WorldParams;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "LFGRASP_CONFIG";

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Fraction of failed episodes kept; successes are always kept. Success
    /// estimators draw their negatives from the prior, so thinning does not
    /// bias them.
    pub failure_keep: f64,
    /// Simulation budget for filling a dataset.
    pub max_attempts: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { failure_keep: 0.015, max_attempts: 100_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Base seed of every random stream of a command.
    pub seed: u64,
    pub hand_prior: HandPrior,
    pub scene_prior: ScenePrior,
    pub world: WorldParams,
    pub architecture: Architecture,
    pub training: TrainConfig,
    pub data: DataConfig,
    pub planner: PlanConfig,
    pub posterior: PosteriorGrid,
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.into()))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The file's config if a path is given, the defaults otherwise.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hand_prior.validate()?;
        self.scene_prior.validate()?;
        self.world.validate()?;
        let a = &self.architecture;
        check(
            !a.hidden.is_empty() && !a.hidden.contains(&0) && a.embed_dim > 0,
            "architecture widths must be positive",
        )?;
        check(
            !a.encoder.conv_filters.is_empty()
                && !a.encoder.conv_filters.contains(&0)
                && a.encoder.squeeze > 0
                && a.encoder.embedding > 0,
            "encoder widths must be positive",
        )?;
        let t = &self.training;
        check(t.max_epochs > 0 && t.batch_size > 0 && t.chunk_size > 0, "training sizes must be positive")?;
        check(t.holdout_fraction > 0.0 && t.holdout_fraction < 1.0, "held-out fraction must lie in (0, 1)")?;
        check(t.lr_decay > 0.0 && t.lr_decay <= 1.0 && t.decay_after > 0, "learning-rate decay out of range")?;
        check(t.adam.lr > 0.0, "learning rate must be positive")?;
        let d = &self.data;
        check(d.failure_keep > 0.0 && d.failure_keep <= 1.0, "failure_keep must lie in (0, 1]")?;
        check(d.max_attempts > 0, "max_attempts must be positive")?;
        let p = &self.planner;
        check(p.candidates > 0, "planner needs at least one candidate")?;
        check(
            p.cg.armijo_c > 0.0 && p.cg.armijo_c < 1.0 && p.cg.shrink > 0.0 && p.cg.shrink < 1.0,
            "line search constants must lie in (0, 1)",
        )?;
        check(p.cg.initial_step > 0.0 && p.cg.max_step >= p.cg.initial_step, "line search steps out of range")?;
        let g = &self.posterior;
        check(
            !g.cells.contains(&0) && g.position_mc > 0 && g.rotations > 0 && g.marginal_mc > 0,
            "posterior grid sizes must be positive",
        )?;
        Ok(())
    }

    /// SHA-256 of the compact JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

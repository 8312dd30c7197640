//! Command-line front end: one subcommand per pipeline stage.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Config, CONFIG_ENV};
use crate::error::{Error, Result};
use crate::eval::{export_posterior, run_benchmark, write_posterior, BenchmarkSetup};
use crate::nets::save_checkpoint;
use crate::persist::write_json_atomic;
use crate::planner::{plan_strategy, Observation, Strategy, StrategyModels};
use crate::ratio::{
    train_image_ratio, train_oracle_ratio, train_success_ratio, BoundRatio, Conditioning, HandRatio, RatioKind,
    RatioModel,
};
use crate::world::{
    collect_episodes, read_episodes, render_depth, sample_nuisances, write_episodes, Collected, EpisodeSet, Nuisances,
    ObjectSpec, ScenePose,
};

/// File name of the episode list inside a dataset directory.
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "lfgrasp", version, about = "Likelihood-free grasp planning")]
pub struct Cli {
    /// JSON config; defaults apply when absent.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate grasp episodes into a dataset directory.
    GenData(GenDataArgs),
    /// Train a ratio estimator on a dataset.
    Train(TrainArgs),
    /// Plan a grasp for one scene.
    Plan(PlanArgs),
    /// Benchmark a strategy over random scenes.
    Eval(EvalArgs),
    /// Export posterior marginals for one scene.
    ExportPosterior(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageMode {
    None,
    Success,
    All,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Episodes to write. Failures are thinned by `data.failure_keep` and the
    /// simulator runs until this many survive.
    #[arg(long)]
    pub episodes: usize,
    /// Dataset directory (episodes.jsonl, images, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Which episodes get a depth image.
    #[arg(long, value_enum, default_value = "success")]
    pub images: ImageMode,
    /// Keep successful episodes only, each with an image.
    #[arg(long)]
    pub positives: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Estimator to train: success, image or oracle.
    #[arg(long, value_parser = parse_kind)]
    pub kind: RatioKind,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint file.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report; `<out>.report.json` by default.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Train the oracle estimator without object scale and friction.
    #[arg(long)]
    pub ablate_scale_friction: bool,
}

/// Trained models and the scene they are applied to.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Success-ratio checkpoint.
    #[arg(long)]
    pub success: Option<PathBuf>,
    /// Image-conditioned ratio checkpoint.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Oracle-conditioned ratio checkpoint.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "scene_source", required = true, multiple = false, args = ["scene", "sample"])]
pub struct SceneArgs {
    /// JSON scene with `object`, `pose` and optional camera `nuisances`.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Draw the scene from the scene prior.
    #[arg(long)]
    pub sample: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// One of prior-sample, prior-argmax, metric-mle, metric-map, image-mle,
    /// image-map, oracle-mle, oracle-map.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Strategy,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub models: ModelArgs,
    /// Plan record (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Strategy to benchmark; same names as for `plan`.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Strategy,
    /// Number of sampled scenes.
    #[arg(long)]
    pub trials: usize,
    #[command(flatten)]
    pub models: ModelArgs,
    /// Benchmark result (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub models: ModelArgs,
    /// Output directory for the CSV marginals.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<RatioKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub object: ObjectSpec,
    pub pose: ScenePose,
    /// Camera and friction draw used to render the observation; sampled when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuisances: Option<Nuisances>,
}

/// Dataset manifest written next to the episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub simulated: u64,
    pub positives_only: bool,
    pub failure_keep: f64,
    pub images: usize,
    pub file: String,
    pub config: Config,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::resolve(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let pool = match cli.workers {
        Some(0) => return Err(Error::Config("--workers must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenData(a) => gen_data(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Plan(a) => plan(&cfg, a),
        Command::Eval(a) => eval(&cfg, a),
        Command::ExportPosterior(a) => export(&cfg, a),
    })
}

/// Serializes `body` with a leading `config_hash` field.
fn with_hash<T: Serialize>(hash: &str, body: &T) -> Result<Value> {
    let mut out = serde_json::Map::new();
    out.insert("config_hash".into(), Value::String(hash.into()));
    match serde_json::to_value(body)? {
        Value::Object(m) => out.extend(m),
        other => {
            out.insert("result".into(), other);
        }
    }
    Ok(Value::Object(out))
}

pub fn gen_data(cfg: &Config, a: &GenDataArgs) -> Result<()> {
    if a.episodes == 0 {
        return Err(Error::Invalid("--episodes must be positive".into()));
    }
    let images = match a.images {
        _ if a.positives => EpisodeSet::SuccessImages,
        ImageMode::None => EpisodeSet::NoImages,
        ImageMode::Success => EpisodeSet::SuccessImages,
        ImageMode::All => EpisodeSet::AllImages,
    };
    let keep = if a.positives { 0.0 } else { cfg.data.failure_keep };
    let Collected { episodes, simulated } = collect_episodes(
        a.episodes,
        cfg.seed,
        &cfg.hand_prior,
        &cfg.scene_prior,
        &cfg.world,
        images,
        keep,
        cfg.data.max_attempts,
    )?;
    write_episodes(&a.out, EPISODES_FILE, &episodes)?;
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        episodes: episodes.len(),
        successes: episodes.iter().filter(|e| e.success).count(),
        simulated,
        positives_only: a.positives,
        failure_keep: keep,
        images: episodes.iter().filter(|e| e.image.is_some()).count(),
        file: EPISODES_FILE.into(),
        config: cfg.clone(),
    };
    write_json_atomic(&a.out.join(MANIFEST_FILE), &manifest)?;
    eprintln!("wrote {} episodes ({} successes) to {}", manifest.episodes, manifest.successes, a.out.display());
    Ok(())
}

fn default_report_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

pub fn train(cfg: &Config, a: &TrainArgs) -> Result<()> {
    let manifest: Option<Manifest> = match std::fs::read(a.data.join(MANIFEST_FILE)) {
        Ok(b) => Some(serde_json::from_slice(&b).map_err(|e| Error::Dataset(format!("manifest: {e}")))?),
        Err(_) => None,
    };
    let episodes = read_episodes(&a.data, EPISODES_FILE)?;
    let (arch, tc, prior) = (&cfg.architecture, &cfg.training, &cfg.hand_prior);
    let (model, report) = match a.kind {
        RatioKind::Success => train_success_ratio(&episodes, prior, arch, tc, cfg.seed)?,
        RatioKind::Image => train_image_ratio(&episodes, prior, arch, tc, cfg.seed)?,
        RatioKind::Oracle => train_oracle_ratio(&episodes, prior, arch, tc, a.ablate_scale_friction, cfg.seed)?,
    };
    let hash = cfg.hash();
    let mut ckpt = model.to_checkpoint()?;
    if let Value::Object(m) = &mut ckpt.meta {
        m.insert("config_hash".into(), Value::String(hash.clone()));
    }
    let mut body = with_hash(&hash, &report)?;
    body["data_config_hash"] = manifest.map_or(Value::Null, |m| Value::String(m.config_hash));
    save_checkpoint(&a.out, &ckpt)?;
    write_json_atomic(&a.report.clone().unwrap_or_else(|| default_report_path(&a.out)), &body)?;
    eprintln!(
        "{} ratio: held-out BCE {:.4} after {} epochs{}",
        a.kind.name(),
        report.best_heldout_loss,
        report.epochs.len(),
        report.calibration.map_or(String::new(), |c| format!(", calibration {c:.3}"))
    );
    Ok(())
}

struct LoadedModels {
    success: Option<RatioModel>,
    image: Option<RatioModel>,
    oracle: Option<RatioModel>,
}

impl LoadedModels {
    fn load(a: &ModelArgs) -> Result<Self> {
        let load = |p: &Option<PathBuf>, kind: RatioKind| -> Result<Option<RatioModel>> {
            let Some(p) = p else { return Ok(None) };
            let m = RatioModel::load(p)?;
            if m.kind() != kind {
                return Err(Error::Invalid(format!(
                    "{} holds a {} model, expected {}",
                    p.display(),
                    m.kind().name(),
                    kind.name()
                )));
            }
            Ok(Some(m))
        };
        Ok(Self {
            success: load(&a.success, RatioKind::Success)?,
            image: load(&a.image, RatioKind::Image)?,
            oracle: load(&a.oracle, RatioKind::Oracle)?,
        })
    }

    fn view(&self) -> StrategyModels<'_> {
        StrategyModels { success: self.success.as_ref(), image: self.image.as_ref(), oracle: self.oracle.as_ref() }
    }
}

/// The scene of `plan` and `export-posterior`, with the nuisances used to render it.
fn resolve_scene<R: Rng>(cfg: &Config, a: &SceneArgs, rng: &mut R) -> Result<SceneFile> {
    let mut scene = match &a.scene {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Dataset(format!("{}: {e}", p.display())))?;
            let s: SceneFile =
                serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", p.display())))?;
            let o = &s.object;
            if !(o.scale > 0.0 && o.friction > 0.0) || o.dims.iter().any(|&d| !(d > 0.0)) {
                return Err(Error::Dataset(format!(
                    "{}: object dimensions, scale and friction must be > 0",
                    p.display()
                )));
            }
            s
        }
        None => {
            let s = cfg.scene_prior.sample(rng);
            SceneFile { object: s.object, pose: s.pose, nuisances: None }
        }
    };
    if scene.nuisances.is_none() {
        scene.nuisances = Some(sample_nuisances(&cfg.world.camera, rng));
    }
    Ok(scene)
}

/// Output of `plan`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanRecord {
    pub strategy: Strategy,
    pub seed: u64,
    pub scene: SceneFile,
    #[serde(flatten)]
    pub outcome: crate::planner::PlanOutcome,
}

pub fn plan(cfg: &Config, a: &PlanArgs) -> Result<()> {
    let models = LoadedModels::load(&a.models)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = resolve_scene(cfg, &a.scene, &mut rng)?;
    let nuisances = scene.nuisances.expect("resolved");
    let image =
        a.strategy.needs_image_model().then(|| render_depth(&scene.object, &scene.pose, &nuisances, &cfg.world.camera));
    let obs = Observation { image: image.as_ref(), scene: Some((&scene.object, &scene.pose)) };
    let mut plan_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let outcome = plan_strategy(a.strategy, &models.view(), &obs, &cfg.hand_prior, &cfg.planner, &mut plan_rng)?;
    let h = outcome.hand;
    eprintln!(
        "{}: g={} x=({:.4}, {:.4}, {:.4}) cost {:.4} in {:.3}s",
        a.strategy, h.g, h.x.x, h.x.y, h.x.z, outcome.cost, outcome.wall_time_s
    );
    let record = PlanRecord { strategy: a.strategy, seed: cfg.seed, scene, outcome };
    write_json_atomic(&a.out, &with_hash(&cfg.hash(), &record)?)
}

pub fn eval(cfg: &Config, a: &EvalArgs) -> Result<()> {
    let models = LoadedModels::load(&a.models)?;
    let setup = BenchmarkSetup {
        models: models.view(),
        hand_prior: &cfg.hand_prior,
        scene_prior: &cfg.scene_prior,
        world: &cfg.world,
        plan: &cfg.planner,
    };
    let r = run_benchmark(a.strategy, &setup, a.trials, cfg.seed)?;
    eprintln!(
        "{}: {}/{} = {:.1}% [{:.1}, {:.1}]",
        a.strategy,
        r.successes,
        r.n_trials,
        100.0 * r.rate,
        100.0 * r.interval.low,
        100.0 * r.interval.high
    );
    write_json_atomic(&a.out, &with_hash(&cfg.hash(), &r)?)
}

pub fn export(cfg: &Config, a: &ExportArgs) -> Result<()> {
    let models = LoadedModels::load(&a.models)?;
    let success =
        models.success.as_ref().ok_or_else(|| Error::MissingModel("export-posterior (success model)".into()))?;
    if models.image.is_some() && models.oracle.is_some() {
        return Err(Error::Invalid("give at most one of --image and --oracle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = resolve_scene(cfg, &a.scene, &mut rng)?;
    let nuisances = scene.nuisances.expect("resolved");
    let image = models.image.as_ref().map(|_| render_depth(&scene.object, &scene.pose, &nuisances, &cfg.world.camera));
    let s = success.bind(&Conditioning::Success(true))?;
    let c: Option<BoundRatio<'_>> = match (&models.image, &models.oracle, &image) {
        (Some(m), _, Some(img)) => Some(m.bind(&Conditioning::Image(img))?),
        (_, Some(m), _) => Some(m.bind(&Conditioning::Oracle { object: &scene.object, pose: &scene.pose })?),
        _ => None,
    };
    let start = Instant::now();
    let out = export_posterior(&s, c.as_ref().map(|c| c as &dyn HandRatio), &cfg.hand_prior, &cfg.posterior, &mut rng)?;
    let conditioning = if models.image.is_some() {
        "image"
    } else if models.oracle.is_some() {
        "oracle"
    } else {
        "none"
    };
    let meta = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "conditioning": conditioning,
        "scene": scene,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    write_posterior(&a.out, &out, &meta)?;
    eprintln!("posterior p(g) = {:.3?} written to {}", out.grasp, a.out.display());
    Ok(())
}

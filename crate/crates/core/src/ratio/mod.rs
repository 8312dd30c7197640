//! Likelihood-to-evidence ratio estimators for grasp planning.
//!
//! Three classifiers share one design: a dense head on `[c, x̃, vec(R), embed(g)]`
//! where `c` is the conditioning features. For the success model `c = [S]`,
//! for the image model `c` is a convolutional embedding of the depth image,
//! and for the oracle model `c` is a vector of ground-truth scene properties.
//! The classifier logit is the log-ratio.

mod fit;

use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use fit::{
    derangement, fit_ratio, Architecture, CondInputs, EncoderSpec, EpochStats, FitOutcome, Negatives, PairData,
    RatioNetworks, ThetaSampler, TrainConfig,
};

use crate::distributions::HandPrior;
use crate::error::{Error, Result};
use crate::geometry::{pullback_rotmat_grad, TangentVector};
use crate::hand::{GraspType, HandConfig};
use crate::nets::{load_checkpoint, save_checkpoint, Checkpoint, Module, Tensor};
use crate::world::{DepthImage, Episode, ObjectSpec, ScenePose, Shape};

/// Width of the oracle conditioning vector.
pub const ORACLE_DIM: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    Success,
    Image,
    Oracle,
}

impl RatioKind {
    pub fn name(self) -> &'static str {
        match self {
            RatioKind::Success => "success",
            RatioKind::Image => "image",
            RatioKind::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for RatioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "success" => Ok(RatioKind::Success),
            "image" => Ok(RatioKind::Image),
            "oracle" => Ok(RatioKind::Oracle),
            _ => Err(Error::Invalid(format!("unknown ratio kind {s:?} (success, image, oracle)"))),
        }
    }
}

/// How a hand configuration becomes dense features `[x̃, vec(R)]`;
/// `x̃ = (x − center) / half_extent` and the grasp type is embedded separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandLayout {
    pub x_center: [f64; 3],
    pub x_half_extent: [f64; 3],
}

impl HandLayout {
    pub const DIM: usize = 12;

    pub fn from_prior(prior: &HandPrior) -> Self {
        let mut c = [0.0; 3];
        let mut h = [0.0; 3];
        for i in 0..3 {
            c[i] = 0.5 * (prior.x_low[i] + prior.x_high[i]);
            h[i] = 0.5 * (prior.x_high[i] - prior.x_low[i]);
        }
        Self { x_center: c, x_half_extent: h }
    }

    pub fn write(&self, h: &HandConfig, out: &mut Vec<f64>) {
        for i in 0..3 {
            out.push((h.x[i] - self.x_center[i]) / self.x_half_extent[i]);
        }
        out.extend_from_slice(&h.rotation().flatten());
    }

    pub fn features(&self, h: &HandConfig) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        self.write(h, &mut v);
        v
    }
}

/// What the classifier is conditioned on and how raw inputs are encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditioningLayout {
    /// `[S]`.
    Success,
    /// Depth image as `[1, height, width]`, valid pixels mapped to `(d − offset)·scale`, invalid to 0.
    Image { width: usize, height: usize, offset: f64, scale: f64 },
    /// `[one-hot shape (4), base dims / 0.1 m (3), (β − 1)·10, μ, x_O / 0.05, y_O / 0.05, sin φ, cos φ]`.
    /// With `ablate_scale_friction` the β and μ slots are zero.
    Oracle { ablate_scale_friction: bool },
}

impl ConditioningLayout {
    pub fn kind(&self) -> RatioKind {
        match self {
            ConditioningLayout::Success => RatioKind::Success,
            ConditioningLayout::Image { .. } => RatioKind::Image,
            ConditioningLayout::Oracle { .. } => RatioKind::Oracle,
        }
    }

    pub fn image(width: usize, height: usize) -> Self {
        ConditioningLayout::Image { width, height, offset: 0.77, scale: 5.0 }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match *self {
            ConditioningLayout::Success => vec![1],
            ConditioningLayout::Image { width, height, .. } => vec![1, height, width],
            ConditioningLayout::Oracle { .. } => vec![ORACLE_DIM],
        }
    }

    /// Encodes a conditioning value as network input.
    pub fn encode(&self, cond: &Conditioning<'_>) -> Result<Vec<f64>> {
        match (self, cond) {
            (ConditioningLayout::Success, Conditioning::Success(s)) => Ok(vec![if *s { 1.0 } else { 0.0 }]),
            (ConditioningLayout::Image { width, height, offset, scale }, Conditioning::Image(img)) => {
                if img.width != *width || img.height != *height || img.depths.len() != width * height {
                    return Err(Error::LayoutMismatch {
                        expected: format!("{width}x{height} image"),
                        got: format!("{}x{} image", img.width, img.height),
                    });
                }
                Ok(img.depths.iter().map(|&d| if d == 0.0 { 0.0 } else { (d as f64 - offset) * scale }).collect())
            }
            (ConditioningLayout::Oracle { ablate_scale_friction }, Conditioning::Oracle { object, pose }) => {
                Ok(oracle_vector(object, pose, *ablate_scale_friction).to_vec())
            }
            (layout, cond) => {
                Err(Error::LayoutMismatch { expected: layout.kind().name().into(), got: cond.kind().name().into() })
            }
        }
    }
}

/// Ground-truth scene description fed to the oracle model.
pub fn oracle_vector(object: &ObjectSpec, pose: &ScenePose, ablate_scale_friction: bool) -> [f64; ORACLE_DIM] {
    let mut v = [0.0; ORACLE_DIM];
    v[object.shape.index()] = 1.0;
    for i in 0..3 {
        v[4 + i] = object.dims[i] / 0.1;
    }
    if !ablate_scale_friction {
        v[7] = (object.scale - 1.0) * 10.0;
        v[8] = object.friction;
    }
    v[9] = pose.x / 0.05;
    v[10] = pose.y / 0.05;
    v[11] = pose.yaw.sin();
    v[12] = pose.yaw.cos();
    v
}

/// Inverse of [`oracle_vector`] for the fields it keeps.
pub fn decode_oracle_vector(v: &[f64; ORACLE_DIM]) -> Option<(Shape, [f64; 3], f64, f64, ScenePose)> {
    let shape = (0..4).find(|&i| v[i] == 1.0).and_then(Shape::from_index)?;
    let dims = [v[4] * 0.1, v[5] * 0.1, v[6] * 0.1];
    let pose = ScenePose { x: v[9] * 0.05, y: v[10] * 0.05, yaw: v[11].atan2(v[12]) };
    Some((shape, dims, v[7] / 10.0 + 1.0, v[8], pose))
}

/// A conditioning value for one query.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    Success(bool),
    Image(&'a DepthImage),
    Oracle { object: &'a ObjectSpec, pose: &'a ScenePose },
}

impl Conditioning<'_> {
    pub fn kind(&self) -> RatioKind {
        match self {
            Conditioning::Success(_) => RatioKind::Success,
            Conditioning::Image(_) => RatioKind::Image,
            Conditioning::Oracle { .. } => RatioKind::Oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLayout {
    pub conditioning: ConditioningLayout,
    pub hand: HandLayout,
}

/// A trained ratio estimator `log r̂(c | h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    pub layout: InputLayout,
    pub nets: RatioNetworks,
}

#[derive(Serialize, Deserialize)]
struct RatioMeta {
    kind: RatioKind,
    layout: InputLayout,
    cond_dim: usize,
    theta_dim: usize,
}

impl RatioModel {
    pub fn kind(&self) -> RatioKind {
        self.layout.conditioning.kind()
    }

    /// Conditioning features entering the head (the encoder runs here, once).
    pub fn features(&self, cond: &Conditioning<'_>) -> Result<Vec<f64>> {
        let raw = self.layout.conditioning.encode(cond)?;
        let mut shape = vec![1];
        shape.extend(self.layout.conditioning.input_shape());
        Ok(self.nets.cond_features(&Tensor::new(shape, raw)?)?.into_data())
    }

    /// Binds the model to a conditioning value, giving a function of `h` only.
    pub fn bind(&self, cond: &Conditioning<'_>) -> Result<BoundRatio<'_>> {
        Ok(BoundRatio { model: self, features: self.features(cond)? })
    }

    pub fn log_ratio(&self, cond: &Conditioning<'_>, h: &HandConfig) -> Result<f64> {
        Ok(self.bind(cond)?.log_ratio_batch(std::slice::from_ref(h))?[0])
    }

    pub fn log_ratio_grad_h(&self, cond: &Conditioning<'_>, h: &HandConfig) -> Result<(f64, TangentVector)> {
        self.bind(cond)?.log_ratio_grad(h)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = RatioMeta {
            kind: self.kind(),
            layout: self.layout.clone(),
            cond_dim: self.nets.cond_dim,
            theta_dim: self.nets.theta_dim,
        };
        let mut modules = Vec::new();
        if let Some(e) = &self.nets.encoder {
            modules.push(("encoder".to_string(), Module::Net(e.clone())));
        }
        modules.push(("head".to_string(), Module::Net(self.nets.head.clone())));
        if let Some(e) = &self.nets.embedding {
            modules.push(("grasp_embedding".to_string(), Module::Embedding(e.clone())));
        }
        Ok(Checkpoint { meta: serde_json::to_value(meta)?, modules })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: RatioMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| Error::Checkpoint { path: "<memory>".into(), reason: format!("not a ratio model: {e}") })?;
        let head = ckpt
            .net("head")
            .cloned()
            .ok_or_else(|| Error::Checkpoint { path: "<memory>".into(), reason: "missing head".into() })?;
        let nets = RatioNetworks {
            encoder: ckpt.net("encoder").cloned(),
            head,
            embedding: ckpt.embedding("grasp_embedding").cloned(),
            cond_dim: meta.cond_dim,
            theta_dim: meta.theta_dim,
        };
        let edim = nets.embedding.as_ref().map_or(0, |e| e.dim());
        if nets.head.input_len() != meta.cond_dim + meta.theta_dim + edim
            || meta.layout.conditioning.kind() != meta.kind
        {
            return Err(Error::Checkpoint { path: "<memory>".into(), reason: "layout disagrees with networks".into() });
        }
        Ok(Self { layout: meta.layout, nets })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.to_checkpoint()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&load_checkpoint(path)?).map_err(|e| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint { path: path.display().to_string(), reason },
            e => e,
        })
    }
}

/// A log-ratio as a function of the hand configuration alone.
pub trait HandRatio: Sync {
    fn log_ratio_batch(&self, hands: &[HandConfig]) -> Result<Vec<f64>>;

    /// Value and Riemannian gradient on `ℝ³ × S³` (grasp type held fixed).
    fn log_ratio_grad(&self, h: &HandConfig) -> Result<(f64, TangentVector)>;
}

/// A ratio model with its conditioning features precomputed.
#[derive(Debug, Clone)]
pub struct BoundRatio<'a> {
    model: &'a RatioModel,
    features: Vec<f64>,
}

impl BoundRatio<'_> {
    fn row(&self, h: &HandConfig, out: &mut Vec<f64>) -> Result<()> {
        let mut theta = Vec::with_capacity(HandLayout::DIM);
        self.model.layout.hand.write(h, &mut theta);
        self.model.nets.push_row(&self.features, &theta, Some(h.g.index()), out)
    }
}

impl HandRatio for BoundRatio<'_> {
    fn log_ratio_batch(&self, hands: &[HandConfig]) -> Result<Vec<f64>> {
        let mut rows = Vec::with_capacity(hands.len() * self.model.nets.head_width());
        for h in hands {
            self.row(h, &mut rows)?;
        }
        self.model.nets.head_logits(rows)
    }

    fn log_ratio_grad(&self, h: &HandConfig) -> Result<(f64, TangentVector)> {
        let nets = &self.model.nets;
        let mut row = Vec::with_capacity(nets.head_width());
        self.row(h, &mut row)?;
        let trace = nets.head.forward(&Tensor::new(vec![1, nets.head_width()], row)?)?;
        let value = trace.output().data()[0];
        let din = nets.head.backward(&trace, &Tensor::new(vec![1, 1], vec![1.0])?, None)?;
        let d = &din.data()[nets.cond_dim..nets.cond_dim + HandLayout::DIM];
        let s = &self.model.layout.hand.x_half_extent;
        let dx = Vector3::new(d[0] / s[0], d[1] / s[1], d[2] / s[2]);
        let mut dr = [0.0; 9];
        dr.copy_from_slice(&d[3..12]);
        let dq = pullback_rotmat_grad(&h.q, &dr);
        Ok((value, TangentVector::new(dx, dq).projected(&h.q)))
    }
}

/// The constant log-ratio, e.g. `0` for "ignore this term".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRatio(pub f64);

impl HandRatio for ConstantRatio {
    fn log_ratio_batch(&self, hands: &[HandConfig]) -> Result<Vec<f64>> {
        Ok(vec![self.0; hands.len()])
    }

    fn log_ratio_grad(&self, _h: &HandConfig) -> Result<(f64, TangentVector)> {
        Ok((self.0, TangentVector::zero()))
    }
}

/// Monte Carlo estimate of `E_{h∼p(h)}[r̂(h)]`, which is 1 for a calibrated ratio.
pub fn calibration_diagnostic<R: Rng + ?Sized>(
    ratio: &dyn HandRatio,
    prior: &HandPrior,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("calibration needs at least one sample".into()));
    }
    let hands: Vec<HandConfig> = (0..n).map(|_| prior.sample(rng)).collect();
    let mut total = 0.0;
    for chunk in hands.chunks(1024) {
        total += ratio.log_ratio_batch(chunk)?.iter().map(|l| l.exp()).sum::<f64>();
    }
    Ok(total / n as f64)
}

/// Summary of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: RatioKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_heldout: usize,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_heldout_loss: f64,
    pub stopped_early: bool,
    /// `E_{p(h)}[r̂(S = 1 | h)]` for success models.
    pub calibration: Option<f64>,
    pub wall_time_s: f64,
}

fn hand_pairs(cond: CondInputs, episodes: &[Episode], layout: &HandLayout) -> PairData {
    let mut theta = Vec::with_capacity(episodes.len() * HandLayout::DIM);
    for e in episodes {
        layout.write(&e.hand, &mut theta);
    }
    PairData {
        cond,
        theta,
        theta_dim: HandLayout::DIM,
        category: Some((episodes.iter().map(|e| e.hand.g.index()).collect(), GraspType::ALL.len())),
    }
}

fn finish(
    kind: RatioKind,
    layout: InputLayout,
    fit: FitOutcome,
    seed: u64,
    start: Instant,
    calibration: Option<f64>,
) -> (RatioModel, TrainReport) {
    let report = TrainReport {
        kind,
        seed,
        n_train: fit.n_train,
        n_heldout: fit.n_heldout,
        epochs: fit.epochs,
        best_epoch: fit.best_epoch,
        best_heldout_loss: fit.best_heldout_loss,
        stopped_early: fit.stopped_early,
        calibration,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    (RatioModel { layout, nets: fit.nets }, report)
}

/// Samples used by the calibration statistic in training reports.
pub const CALIBRATION_SAMPLES: usize = 10_000;

struct PriorHands<'a> {
    prior: &'a HandPrior,
    layout: &'a HandLayout,
}

impl ThetaSampler for PriorHands<'_> {
    fn sample(&self, rng: &mut ChaCha8Rng, theta: &mut Vec<f64>) -> Option<usize> {
        let h = self.prior.sample(rng);
        self.layout.write(&h, theta);
        Some(h.g.index())
    }
}

/// Trains `d_φ(S, h)`: positives are episodes `(S, h)`, negatives pair each
/// `S` with a fresh `h' ∼ p(h)`. Because `h'` comes from the prior rather than
/// the dataset, failures may be subsampled without biasing the ratio.
pub fn train_success_ratio(
    episodes: &[Episode],
    prior: &HandPrior,
    arch: &Architecture,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(RatioModel, TrainReport)> {
    let start = Instant::now();
    if episodes.is_empty() {
        return Err(Error::Dataset("no episodes".into()));
    }
    let layout = InputLayout { conditioning: ConditioningLayout::Success, hand: HandLayout::from_prior(prior) };
    let cond =
        CondInputs { shape: vec![1], data: episodes.iter().map(|e| if e.success { 1.0 } else { 0.0 }).collect() };
    let data = hand_pairs(cond, episodes, &layout.hand);
    let sampler = PriorHands { prior, layout: &layout.hand };
    let fit = fit_ratio(&data, Negatives::Marginal(&sampler), arch, cfg, seed)?;
    let model = RatioModel { layout: layout.clone(), nets: fit.nets.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCA11_B4A7);
    let cal = calibration_diagnostic(&model.bind(&Conditioning::Success(true))?, prior, CALIBRATION_SAMPLES, &mut rng)?;
    Ok(finish(RatioKind::Success, layout, fit, seed, start, Some(cal)))
}

fn successful(episodes: &[Episode], min: usize) -> Result<Vec<&Episode>> {
    let pos: Vec<&Episode> = episodes.iter().filter(|e| e.success).collect();
    if pos.len() < min.max(4) {
        return Err(Error::Dataset(format!("{} successful episodes, at least {} required", pos.len(), min.max(4))));
    }
    Ok(pos)
}

/// Trains `d_θ(i, h)` on successful episodes with rendered images.
pub fn train_image_ratio(
    episodes: &[Episode],
    prior: &HandPrior,
    arch: &Architecture,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(RatioModel, TrainReport)> {
    let start = Instant::now();
    let pos = successful(episodes, cfg.min_examples)?;
    let first = pos[0].depth.as_ref().ok_or_else(|| Error::Dataset("successful episode without an image".into()))?;
    let conditioning = ConditioningLayout::image(first.width, first.height);
    let mut data = Vec::with_capacity(pos.len() * first.depths.len());
    for e in &pos {
        let img = e.depth.as_ref().ok_or_else(|| Error::Dataset(format!("episode {} has no image", e.index)))?;
        data.extend(conditioning.encode(&Conditioning::Image(img))?);
    }
    let layout = InputLayout { conditioning: conditioning.clone(), hand: HandLayout::from_prior(prior) };
    let owned: Vec<Episode> = pos
        .into_iter()
        .cloned()
        .map(|mut e| {
            e.depth = None;
            e
        })
        .collect();
    let pairs = hand_pairs(CondInputs { shape: conditioning.input_shape(), data }, &owned, &layout.hand);
    let fit = fit_ratio(&pairs, Negatives::Derangement, arch, cfg, seed)?;
    Ok(finish(RatioKind::Image, layout, fit, seed, start, None))
}

/// Trains `d_ψ(o, h)` on successful episodes, conditioned on the true scene.
pub fn train_oracle_ratio(
    episodes: &[Episode],
    prior: &HandPrior,
    arch: &Architecture,
    cfg: &TrainConfig,
    ablate_scale_friction: bool,
    seed: u64,
) -> Result<(RatioModel, TrainReport)> {
    let start = Instant::now();
    let pos = successful(episodes, cfg.min_examples)?;
    let conditioning = ConditioningLayout::Oracle { ablate_scale_friction };
    let mut data = Vec::with_capacity(pos.len() * ORACLE_DIM);
    for e in &pos {
        data.extend(conditioning.encode(&Conditioning::Oracle { object: &e.object, pose: &e.pose })?);
    }
    let layout = InputLayout { conditioning: conditioning.clone(), hand: HandLayout::from_prior(prior) };
    let owned: Vec<Episode> = pos.into_iter().cloned().collect();
    let pairs = hand_pairs(CondInputs { shape: conditioning.input_shape(), data }, &owned, &layout.hand);
    let fit = fit_ratio(&pairs, Negatives::Derangement, arch, cfg, seed)?;
    Ok(finish(RatioKind::Oracle, layout, fit, seed, start, None))
}

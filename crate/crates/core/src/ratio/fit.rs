//! Classifier-based ratio fitting: joint pairs against pairs with a resampled or deranged parameter.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{bce_loss, AdamConfig, AdamState, Embedding, Grads, NetSpec, Sequential, Tensor, Trace};

/// Network sizes of a ratio classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Hidden widths of the classifier head.
    pub hidden: Vec<usize>,
    /// Width of the learned grasp-type embedding.
    pub embed_dim: usize,
    /// Image encoder, used when the conditioning input is an image.
    pub encoder: EncoderSpec,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { hidden: vec![256, 256], embed_dim: 4, encoder: EncoderSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub conv_filters: Vec<usize>,
    pub squeeze: usize,
    pub embedding: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self { conv_filters: vec![32, 32, 32], squeeze: 8, embedding: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    pub holdout_fraction: f64,
    /// Learning-rate factor applied after `decay_after` epochs without improvement.
    pub lr_decay: f64,
    pub decay_after: usize,
    /// Swaps the joint and marginal labels so the classifier learns `1/r`;
    /// only useful as a negative control.
    pub flip_labels: bool,
    /// Smallest usable dataset.
    pub min_examples: usize,
    /// Examples per gradient work unit; fixes the summation order.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 40,
            batch_size: 256,
            adam: AdamConfig::default(),
            patience: 5,
            holdout_fraction: 0.1,
            lr_decay: 0.5,
            decay_after: 2,
            flip_labels: false,
            min_examples: 50,
            chunk_size: 64,
        }
    }
}

/// Conditioning inputs, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct CondInputs {
    /// Per-example shape (a flat vector or `[1, height, width]`).
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl CondInputs {
    pub fn item_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.item_len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn item(&self, i: usize) -> &[f64] {
        let n = self.item_len();
        &self.data[i * n..(i + 1) * n]
    }

    fn gather(&self, idx: &[usize]) -> Tensor {
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(&self.shape);
        let mut data = Vec::with_capacity(idx.len() * self.item_len());
        for &i in idx {
            data.extend_from_slice(self.item(i));
        }
        Tensor::new(shape, data).expect("consistent shape")
    }
}

/// Paired examples `(c_k, θ_k)` drawn from the joint distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PairData {
    pub cond: CondInputs,
    /// Dense parameter features, `theta_dim` per example.
    pub theta: Vec<f64>,
    pub theta_dim: usize,
    /// Categorical parameter per example, passed through a learned embedding.
    pub category: Option<(Vec<usize>, usize)>,
}

impl PairData {
    pub fn len(&self) -> usize {
        self.cond.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.theta_dim == 0 || self.theta.len() != n * self.theta_dim {
            return Err(Error::Dataset("parameter features do not match the number of examples".into()));
        }
        if let Some((c, k)) = &self.category {
            if c.len() != n || c.iter().any(|&v| v >= *k) {
                return Err(Error::Dataset("categorical parameter out of range".into()));
            }
        }
        Ok(())
    }
}

/// The classifier `d(c, θ)`: optional encoder on `c`, optional embedding of
/// the categorical part of `θ`, and a dense head on the concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioNetworks {
    pub encoder: Option<Sequential>,
    pub head: Sequential,
    pub embedding: Option<Embedding>,
    /// Width of the conditioning features entering the head.
    pub cond_dim: usize,
    pub theta_dim: usize,
}

impl RatioNetworks {
    pub fn new<R: Rng + ?Sized>(
        arch: &Architecture,
        cond_shape: &[usize],
        theta_dim: usize,
        categories: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let (encoder, cond_dim) = if cond_shape.len() == 3 {
            let e = &arch.encoder;
            let spec = NetSpec::image_encoder(
                [cond_shape[0], cond_shape[1], cond_shape[2]],
                &e.conv_filters,
                e.squeeze,
                e.embedding,
            );
            (Some(Sequential::new(spec, rng)?), e.embedding)
        } else if cond_shape.len() == 1 {
            (None, cond_shape[0])
        } else {
            return Err(Error::InvalidSpec(format!("conditioning shape {cond_shape:?}")));
        };
        let embedding = categories.map(|k| Embedding::new(k, arch.embed_dim, rng));
        let edim = embedding.as_ref().map_or(0, |e| e.dim());
        let mut head = Sequential::new(NetSpec::mlp(cond_dim + theta_dim + edim, &arch.hidden, 1), rng)?;
        // A zero output layer starts the classifier at r = 1 everywhere.
        for block in head.params_mut().into_iter().rev().take(2) {
            block.fill(0.0);
        }
        Ok(Self { encoder, head, embedding, cond_dim, theta_dim })
    }

    pub fn head_width(&self) -> usize {
        self.head.input_len()
    }

    /// Conditioning features for a batch of raw conditioning inputs.
    pub fn cond_features(&self, cond: &Tensor) -> Result<Tensor> {
        match &self.encoder {
            Some(e) => e.output(cond),
            None => Ok(cond.clone()),
        }
    }

    /// Appends one head input row `[c, θ, embed(g)]`.
    pub fn push_row(&self, cond: &[f64], theta: &[f64], category: Option<usize>, out: &mut Vec<f64>) -> Result<()> {
        out.extend_from_slice(cond);
        out.extend_from_slice(theta);
        if let Some(e) = &self.embedding {
            let g = category.ok_or_else(|| Error::Invalid("categorical parameter required".into()))?;
            out.extend_from_slice(e.row(g)?);
        }
        Ok(())
    }

    /// Logits (log-ratios) of head input rows.
    pub fn head_logits(&self, rows: Vec<f64>) -> Result<Vec<f64>> {
        let n = rows.len() / self.head_width();
        Ok(self.head.output(&Tensor::new(vec![n, self.head_width()], rows)?)?.into_data())
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.encoder {
            out.extend(e.params_mut());
        }
        out.extend(self.head.params_mut());
        if let Some(e) = &mut self.embedding {
            out.push(e.table_mut());
        }
        out
    }

    fn zero_grads(&self) -> (Option<Grads>, Grads, Option<Vec<f64>>) {
        (
            self.encoder.as_ref().map(|e| e.zero_grads()),
            self.head.zero_grads(),
            self.embedding.as_ref().map(|e| vec![0.0; e.table().len()]),
        )
    }
}

/// Negative partners `θ'` for a run of examples.
#[derive(Clone, Copy)]
struct NegRows<'a> {
    theta: &'a [f64],
    category: Option<&'a [usize]>,
    dim: usize,
}

impl NegRows<'_> {
    fn theta(&self, k: usize) -> &[f64] {
        &self.theta[k * self.dim..(k + 1) * self.dim]
    }

    fn category(&self, k: usize) -> Option<usize> {
        self.category.map(|c| c[k])
    }
}

/// Owned negatives for one batch.
#[derive(Debug, Clone)]
struct NegBatch {
    theta: Vec<f64>,
    category: Option<Vec<usize>>,
}

impl NegBatch {
    fn chunk(&self, dim: usize, start: usize, len: usize) -> NegRows<'_> {
        NegRows {
            theta: &self.theta[start * dim..(start + len) * dim],
            category: self.category.as_ref().map(|c| &c[start..start + len]),
            dim,
        }
    }
}

/// Draws `θ'` from the marginal of the parameters.
pub trait ThetaSampler: Sync {
    /// Appends one sample's dense features to `theta` and returns its category.
    fn sample(&self, rng: &mut ChaCha8Rng, theta: &mut Vec<f64>) -> Option<usize>;
}

/// How the negative pairs `(c_k, θ')` are formed.
#[derive(Clone, Copy)]
pub enum Negatives<'a> {
    /// `θ'` from another example of the same batch (a derangement).
    Derangement,
    /// `θ'` drawn fresh from the parameter marginal.
    Marginal(&'a dyn ThetaSampler),
}

fn negatives_for(data: &PairData, batch: &[usize], mode: Negatives<'_>, rng: &mut ChaCha8Rng) -> NegBatch {
    match mode {
        Negatives::Derangement => {
            let partners = deranged_partners(batch, rng);
            assert!(partners.iter().zip(batch).all(|(a, b)| a != b), "derangement kept a pair");
            let d = data.theta_dim;
            let mut theta = Vec::with_capacity(batch.len() * d);
            for &j in &partners {
                theta.extend_from_slice(&data.theta[j * d..(j + 1) * d]);
            }
            let category = data.category.as_ref().map(|(c, _)| partners.iter().map(|&j| c[j]).collect());
            NegBatch { theta, category }
        }
        Negatives::Marginal(sampler) => {
            let mut theta = Vec::with_capacity(batch.len() * data.theta_dim);
            let mut cats = Vec::with_capacity(batch.len());
            for _ in batch {
                cats.push(sampler.sample(rng, &mut theta));
            }
            let category = if data.category.is_some() {
                Some(cats.into_iter().map(|c| c.expect("sampler yields a category")).collect())
            } else {
                None
            };
            NegBatch { theta, category }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_chunks(
    nets: &RatioNetworks,
    data: &PairData,
    batch: &[usize],
    neg: &NegBatch,
    chunk: usize,
    scale: f64,
    grads: bool,
    flip: bool,
) -> Vec<Result<ChunkResult>> {
    let starts: Vec<usize> = (0..batch.len()).step_by(chunk).collect();
    starts
        .par_iter()
        .map(|&s| {
            let len = chunk.min(batch.len() - s);
            chunk_pass(nets, data, &batch[s..s + len], neg.chunk(data.theta_dim, s, len), scale, grads, flip)
        })
        .collect()
}

struct ChunkResult {
    loss: f64,
    encoder: Option<Grads>,
    head: Grads,
    embedding: Option<Vec<f64>>,
}

/// Loss sum and gradients of `scale · Σ BCE` over positives `(c_k, θ_k)` and
/// negatives `(c_k, θ_neg[k])`.
fn chunk_pass(
    nets: &RatioNetworks,
    data: &PairData,
    idx: &[usize],
    neg: NegRows<'_>,
    scale: f64,
    grads: bool,
    flip: bool,
) -> Result<ChunkResult> {
    let b = idx.len();
    let cond_in = data.cond.gather(idx);
    let enc_trace: Option<Trace> = match &nets.encoder {
        Some(e) => Some(e.forward(&cond_in)?),
        None => None,
    };
    let feats = match &enc_trace {
        Some(t) => t.output().clone(),
        None => cond_in,
    };
    let cat = |i: usize| data.category.as_ref().map(|(c, _)| c[i]);
    let theta = |i: usize| &data.theta[i * data.theta_dim..(i + 1) * data.theta_dim];
    let mut rows = Vec::with_capacity(2 * b * nets.head_width());
    for (k, &i) in idx.iter().enumerate() {
        nets.push_row(feats.item(k), theta(i), cat(i), &mut rows)?;
    }
    for k in 0..b {
        nets.push_row(feats.item(k), neg.theta(k), neg.category(k), &mut rows)?;
    }
    let input = Tensor::new(vec![2 * b, nets.head_width()], rows)?;
    let trace = nets.head.forward(&input)?;
    let logits = trace.output().data();
    let mut loss = 0.0;
    let mut up = vec![0.0; 2 * b];
    for (r, &l) in logits.iter().enumerate() {
        let (v, d) = bce_loss(l, if (r < b) != flip { 1.0 } else { 0.0 });
        loss += v;
        up[r] = d * scale;
    }
    let (mut genc, mut ghead, mut gemb) = nets.zero_grads();
    if grads {
        let upstream = Tensor::new(vec![2 * b, 1], up)?;
        let din = nets.head.backward(&trace, &upstream, Some(&mut ghead))?;
        let w = nets.head_width();
        let off = nets.cond_dim + nets.theta_dim;
        if let (Some(e), Some(g)) = (&nets.embedding, gemb.as_mut()) {
            let mut cats = Vec::with_capacity(2 * b);
            let mut ups = Vec::with_capacity(2 * b * e.dim());
            let joint = idx.iter().map(|&i| cat(i));
            for (r, g) in joint.chain((0..b).map(|r| neg.category(r))).enumerate() {
                cats.push(g.expect("categorical data"));
                ups.extend_from_slice(&din.data()[r * w + off..r * w + off + e.dim()]);
            }
            e.backward(&cats, &ups, g);
        }
        if let (Some(e), Some(t), Some(g)) = (&nets.encoder, &enc_trace, genc.as_mut()) {
            let c = nets.cond_dim;
            let mut dc = vec![0.0; b * c];
            for k in 0..b {
                for j in 0..c {
                    dc[k * c + j] = din.data()[k * w + j] + din.data()[(b + k) * w + j];
                }
            }
            e.backward(t, &Tensor::new(vec![b, c], dc)?, Some(g))?;
        }
    }
    Ok(ChunkResult { loss, encoder: genc, head: ghead, embedding: gemb })
}

/// Random permutation without fixed points (Sattolo's single-cycle shuffle).
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

/// Splits `order` into batches of `size`; a trailing singleton joins the previous batch.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size.max(2)).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let n = out.len();
        let start = order.len() - out[n - 2].len() - 1;
        out.truncate(n - 2);
        out.push(&order[start..]);
    }
    out
}

/// Negative partners for every element of every batch.
fn deranged_partners<R: Rng + ?Sized>(batch: &[usize], rng: &mut R) -> Vec<usize> {
    derangement(batch.len(), rng).into_iter().map(|k| batch[k]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub nets: RatioNetworks,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_heldout_loss: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_heldout: usize,
}

fn mean_loss(
    nets: &RatioNetworks,
    data: &PairData,
    batches: &[(Vec<usize>, NegBatch)],
    chunk: usize,
    flip: bool,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (idx, neg) in batches {
        for p in run_chunks(nets, data, idx, neg, chunk, 1.0, false, flip) {
            total += p?.loss;
        }
        count += 2 * idx.len();
    }
    Ok(if count == 0 { f64::NAN } else { total / count as f64 })
}

/// Trains the classifier with BCE and Adam, early-stopping on held-out loss.
pub fn fit_ratio(
    data: &PairData,
    negatives: Negatives<'_>,
    arch: &Architecture,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FitOutcome> {
    data.validate()?;
    let n = data.len();
    if n < cfg.min_examples.max(4) {
        return Err(Error::Dataset(format!("{n} training examples, at least {} required", cfg.min_examples.max(4))));
    }
    if cfg.batch_size < 2
        || cfg.chunk_size == 0
        || !(0.0..0.5).contains(&cfg.holdout_fraction)
        || !(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)
    {
        return Err(Error::Config("batch size, chunk size, held-out fraction or decay out of range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets =
        RatioNetworks::new(arch, &data.cond.shape, data.theta_dim, data.category.as_ref().map(|c| c.1), &mut rng)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_held = ((n as f64 * cfg.holdout_fraction).round() as usize).min(n - 2);
    let n_held = if n_held == 1 { 2 } else { n_held };
    let (held, train) = order.split_at(n_held);
    let mut train = train.to_vec();
    let held_batches: Vec<(Vec<usize>, NegBatch)> = batches(held, cfg.batch_size)
        .into_iter()
        .map(|b| (b.to_vec(), negatives_for(data, b, negatives, &mut rng)))
        .collect();

    let mut adam = {
        let lens: Vec<usize> = nets.blocks_mut().iter().map(|b| b.len()).collect();
        AdamState::new(cfg.adam, &lens)
    };
    let mut epochs = Vec::new();
    let mut best = (nets.clone(), f64::INFINITY, 0usize);
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in batches(&train, cfg.batch_size) {
            let neg = negatives_for(data, batch, negatives, &mut rng);
            let scale = 1.0 / (2 * batch.len()) as f64;
            let parts = run_chunks(&nets, data, batch, &neg, cfg.chunk_size, scale, true, cfg.flip_labels);
            let mut acc: Option<ChunkResult> = None;
            for p in parts {
                let p = p?;
                total += p.loss;
                match acc.as_mut() {
                    None => acc = Some(p),
                    Some(a) => {
                        if let (Some(x), Some(y)) = (a.encoder.as_mut(), p.encoder.as_ref()) {
                            x.add(y);
                        }
                        a.head.add(&p.head);
                        if let (Some(x), Some(y)) = (a.embedding.as_mut(), p.embedding.as_ref()) {
                            x.iter_mut().zip(y).for_each(|(u, v)| *u += v);
                        }
                    }
                }
            }
            let acc = acc.expect("non-empty batch");
            let mut grads: Vec<&[f64]> = Vec::new();
            if let Some(g) = &acc.encoder {
                grads.extend(g.0.iter().map(|v| v.as_slice()));
            }
            grads.extend(acc.head.0.iter().map(|v| v.as_slice()));
            if let Some(g) = &acc.embedding {
                grads.push(g);
            }
            if !grads.iter().all(|g| g.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite(format!("gradient in epoch {epoch}")));
            }
            adam.update(&mut nets.blocks_mut(), &grads);
        }
        let train_loss = total / (2 * train.len()) as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
        }
        let heldout_loss = if held_batches.is_empty() {
            train_loss
        } else {
            mean_loss(&nets, data, &held_batches, cfg.chunk_size, cfg.flip_labels)?
        };
        epochs.push(EpochStats { epoch, train_loss, heldout_loss });
        if heldout_loss < best.1 {
            best = (nets.clone(), heldout_loss, epoch);
            stale = 0;
        } else {
            stale += 1;
            if cfg.decay_after > 0 && stale % cfg.decay_after == 0 {
                adam.config.lr *= cfg.lr_decay;
            }
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (nets, best_heldout_loss, best_epoch) = best;
    Ok(FitOutcome {
        nets,
        epochs,
        best_epoch,
        best_heldout_loss,
        stopped_early,
        n_train: train.len(),
        n_heldout: n_held,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derangements_have_no_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 2..60 {
            let p = derangement(n, &mut rng);
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
            let mut s = p.clone();
            s.sort();
            assert_eq!(s, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn batches_never_leave_a_singleton() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order, 3);
        assert_eq!(b.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for batch in batches(&order, 4) {
            let neg = deranged_partners(batch, &mut rng);
            assert!(batch.iter().zip(&neg).all(|(a, b)| a != b));
        }
    }
}

//! Episode generation and the JSONL + raw-f32 on-disk dataset format.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{HandPrior, ScenePrior};
use crate::error::{Error, Result};
use crate::hand::HandConfig;
use crate::persist::write_atomic;
use crate::world::{
    render_depth, sample_nuisances, simulate_grasp, DepthImage, FailureReason, Nuisances, ObjectSpec, ScenePose,
    WorldParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub file: String,
    pub width: usize,
    pub height: usize,
}

/// One simulated scene and grasp attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub index: u64,
    pub seed: u64,
    pub hand: HandConfig,
    pub object: ObjectSpec,
    pub pose: ScenePose,
    pub nuisances: Nuisances,
    pub success: bool,
    pub failure: FailureReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
    #[serde(skip)]
    pub depth: Option<DepthImage>,
}

/// Which episodes get a rendered depth image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeSet {
    NoImages,
    SuccessImages,
    AllImages,
}

/// Simulates episode `index`; its RNG stream is seeded with `base_seed + index`.
pub fn generate_episode(
    index: u64,
    base_seed: u64,
    hands: &HandPrior,
    scenes: &ScenePrior,
    world: &WorldParams,
    images: EpisodeSet,
) -> Episode {
    let seed = base_seed.wrapping_add(index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hand = hands.sample(&mut rng);
    let scene = scenes.sample(&mut rng);
    let nuisances = sample_nuisances(&world.camera, &mut rng);
    let outcome = simulate_grasp(&hand, &scene.object, &scene.pose, &nuisances, &world.gripper, &mut rng);
    let mut ep = Episode {
        index,
        seed,
        hand,
        object: scene.object,
        pose: scene.pose,
        nuisances,
        success: outcome.success,
        failure: outcome.failure_reason,
        image: None,
        depth: None,
    };
    let render = match images {
        EpisodeSet::NoImages => false,
        EpisodeSet::SuccessImages => ep.success,
        EpisodeSet::AllImages => true,
    };
    if render {
        attach_image(&mut ep, world);
    }
    ep
}

fn attach_image(ep: &mut Episode, world: &WorldParams) {
    let img = render_depth(&ep.object, &ep.pose, &ep.nuisances, &world.camera);
    ep.image = Some(ImageRef { file: image_file_name(ep.index), width: img.width, height: img.height });
    ep.depth = Some(img);
}

fn image_file_name(index: u64) -> String {
    format!("images/{index:08}.f32")
}

/// Draws `n` episodes from the joint generative model.
pub fn generate_episodes(
    n: usize,
    base_seed: u64,
    hands: &HandPrior,
    scenes: &ScenePrior,
    world: &WorldParams,
    images: EpisodeSet,
) -> Vec<Episode> {
    (0..n as u64).into_par_iter().map(|i| generate_episode(i, base_seed, hands, scenes, world, images)).collect()
}

fn kept(e: &Episode, keep: f64) -> bool {
    e.success || (keep > 0.0 && (keep >= 1.0 || ChaCha8Rng::seed_from_u64(e.seed ^ 0x7415_F00D).random::<f64>() < keep))
}

/// Keeps every success and each failure with probability `keep`, decided by
/// the episode's own seed so the result does not depend on order.
pub fn thin_failures(episodes: Vec<Episode>, keep: f64) -> Vec<Episode> {
    if keep >= 1.0 {
        return episodes;
    }
    episodes.into_iter().filter(|e| kept(e, keep)).collect()
}

/// Episodes drawn from the joint model until `n` survive failure thinning.
#[derive(Debug, Clone)]
pub struct Collected {
    pub episodes: Vec<Episode>,
    /// Episodes simulated to find them.
    pub simulated: u64,
}

/// Simulates episodes in index order and keeps the first `n` that survive
/// thinning with `keep` (0 keeps successes only). Images are rendered for the
/// kept episodes selected by `images`. Gives up after `max_attempts`.
#[allow(clippy::too_many_arguments)]
pub fn collect_episodes(
    n: usize,
    base_seed: u64,
    hands: &HandPrior,
    scenes: &ScenePrior,
    world: &WorldParams,
    images: EpisodeSet,
    keep: f64,
    max_attempts: u64,
) -> Result<Collected> {
    const CHUNK: u64 = 8192;
    let mut out = Vec::with_capacity(n);
    let mut start = 0u64;
    while out.len() < n {
        if start >= max_attempts {
            return Err(Error::Dataset(format!("only {} usable episodes in {max_attempts} attempts", out.len())));
        }
        let end = (start + CHUNK).min(max_attempts);
        let found: Vec<Episode> = (start..end)
            .into_par_iter()
            .map(|i| generate_episode(i, base_seed, hands, scenes, world, EpisodeSet::NoImages))
            .filter(|e| kept(e, keep))
            .collect();
        out.extend(found.into_iter().take(n - out.len()));
        start = end;
    }
    let simulated = out.last().map_or(0, |e| e.index + 1);
    out.par_iter_mut().for_each(|e| {
        let render = match images {
            EpisodeSet::NoImages => false,
            EpisodeSet::SuccessImages => e.success,
            EpisodeSet::AllImages => true,
        };
        if render {
            attach_image(e, world);
        }
    });
    Ok(Collected { episodes: out, simulated })
}

/// Collects `n` successful episodes by rejection from the joint model, in
/// attempt order, with images rendered. Gives up after `max_attempts`.
pub fn generate_positive_episodes(
    n: usize,
    base_seed: u64,
    hands: &HandPrior,
    scenes: &ScenePrior,
    world: &WorldParams,
    max_attempts: u64,
) -> Result<Vec<Episode>> {
    Ok(collect_episodes(n, base_seed, hands, scenes, world, EpisodeSet::SuccessImages, 0.0, max_attempts)?.episodes)
}

/// Writes `<dir>/<name>` as JSONL and every attached image under `<dir>/images/`.
/// Each file is written atomically.
pub fn write_episodes(dir: &Path, name: &str, episodes: &[Episode]) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    let mut buf = Vec::new();
    for ep in episodes {
        serde_json::to_writer(&mut buf, ep)?;
        buf.push(b'\n');
        if let (Some(r), Some(img)) = (&ep.image, &ep.depth) {
            write_atomic(&dir.join(&r.file), &img.to_le_bytes())?;
        }
    }
    write_atomic(&dir.join(name), &buf)
}

pub fn read_image(dir: &Path, r: &ImageRef) -> Result<DepthImage> {
    let bytes = fs::read(dir.join(&r.file))?;
    DepthImage::from_le_bytes(r.width, r.height, &bytes)
        .ok_or_else(|| Error::Dataset(format!("image {} has the wrong size", r.file)))
}

/// Reads a JSONL episode file, loading referenced images.
pub fn read_episodes(dir: &Path, name: &str) -> Result<Vec<Episode>> {
    let f = fs::File::open(dir.join(name)).map_err(|e| Error::Dataset(format!("{}: {e}", dir.join(name).display())))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut ep: Episode =
            serde_json::from_str(&line).map_err(|e| Error::Dataset(format!("{name} line {}: {e}", lineno + 1)))?;
        if let Some(r) = &ep.image {
            ep.depth = Some(read_image(dir, r)?);
        }
        out.push(ep);
    }
    Ok(out)
}

//! Trains compact estimators and exports the marginals of the grasp
//! posterior for one centered object as CSV files.
//!
//! Usage: `cargo run --release --example export_posterior [out_dir] [object_index]`

use lfgrasp::distributions::{HandPrior, ScenePrior};
use lfgrasp::eval::{export_posterior, write_posterior, PosteriorGrid};
use lfgrasp::ratio::{train_oracle_ratio, train_success_ratio, Architecture, Conditioning, HandRatio, TrainConfig};
use lfgrasp::world::{collect_episodes, generate_positive_episodes, EpisodeSet, ScenePose, WorldParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lfgrasp::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "posterior".into());
    let index: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let (hands, scenes, world) = (HandPrior::default(), ScenePrior::default(), WorldParams::default());
    let arch = Architecture { hidden: vec![128, 128], ..Default::default() };
    let cfg = TrainConfig { max_epochs: 20, ..Default::default() };

    let joint = collect_episodes(30_000, 1, &hands, &scenes, &world, EpisodeSet::NoImages, 0.015, 100_000_000)?;
    let (success, _) = train_success_ratio(&joint.episodes, &hands, &arch, &cfg, 2)?;
    let positives = generate_positive_episodes(5000, 3, &hands, &scenes, &world, 100_000_000)?;
    let (oracle, _) = train_oracle_ratio(&positives, &hands, &arch, &cfg, false, 4)?;

    let catalog = scenes.objects.get(index).ok_or_else(|| lfgrasp::Error::Invalid(format!("no object {index}")))?;
    let object = catalog.instantiate(index, 1.0);
    let pose = ScenePose::default();
    let success = success.bind(&Conditioning::Success(true))?;
    let oracle = oracle.bind(&Conditioning::Oracle { object: &object, pose: &pose })?;
    let grid = PosteriorGrid::default();
    let export =
        export_posterior(&success, Some(&oracle as &dyn HandRatio), &hands, &grid, &mut ChaCha8Rng::seed_from_u64(5))?;
    write_posterior(out.as_ref(), &export, &serde_json::json!({ "object": catalog.name }))?;

    println!("{} (height {:.3} m), posterior mass per z layer:", catalog.name, object.height());
    let dz = (hands.x_high[2] - hands.x_low[2]) / grid.cells[2] as f64;
    for k in 0..grid.cells[2] {
        let z = hands.x_low[2] + (k as f64 + 0.5) * dz;
        println!("  z = {z:.3}  {:.4}", export.layer_mass(k));
    }
    println!("p(g | S = 1, c): {:?}", export.grasp);
    println!("written to {out}/");
    Ok(())
}

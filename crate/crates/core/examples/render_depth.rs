//! Renders a depth image of a sampled scene and writes it as a binary PGM
//! (invalid pixels black, near surfaces bright).
//!
//! Usage: `cargo run --release --example render_depth [out.pgm] [seed]`

use lfgrasp::distributions::ScenePrior;
use lfgrasp::world::{render_depth, sample_nuisances, WorldParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "depth.pgm".into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = WorldParams::default();
    let scenes = ScenePrior::default();
    let scene = scenes.sample(&mut rng);
    let nuisances = sample_nuisances(&world.camera, &mut rng);
    let img = render_depth(&scene.object, &scene.pose, &nuisances, &world.camera);

    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.depths.iter().map(|&d| {
        if d == 0.0 {
            0
        } else {
            (255.0 * (1.0 - d) / 0.55).round().clamp(1.0, 255.0) as u8
        }
    }));
    std::fs::write(&out, bytes)?;
    let valid = img.depths.iter().filter(|&&d| d > 0.0).count();
    println!(
        "{} at ({:+.3}, {:+.3}): {}×{} image, {valid} valid pixels, written to {out}",
        scenes.objects[scene.object.id].name, scene.pose.x, scene.pose.y, img.width, img.height
    );
    Ok(())
}

//! Draws hand configurations and scenes from the priors and prints summary
//! statistics: the grasp-type frequencies, the rotation-mode occupancy and a
//! few sampled scenes.
//!
//! Usage: `cargo run --release --example sample_priors [n] [seed]`

use lfgrasp::distributions::{HandPrior, ScenePrior};
use lfgrasp::GraspType;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = HandPrior::default();

    let mut types = [0usize; 3];
    let mut modes = vec![0usize; prior.rotation.modes().len()];
    let mut angle_sum = 0.0;
    for _ in 0..n {
        let h = prior.sample(&mut rng);
        types[h.g.index()] += 1;
        let (k, angle) = prior
            .rotation
            .modes()
            .iter()
            .map(|m| m.rotation_angle_to(&h.q))
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, a)| if a < best.1 { (k, a) } else { best });
        modes[k] += 1;
        angle_sum += angle;
    }
    println!("{n} hand samples, rotation concentration κ = {}", prior.rotation.kappa());
    for g in GraspType::ALL {
        println!(
            "  {:<6} {:.4} (prior {:.4})",
            g.name(),
            types[g.index()] as f64 / n as f64,
            prior.grasp_probs[g.index()]
        );
    }
    for (k, c) in modes.iter().enumerate() {
        println!("  nearest mode {k}: {:.4}", *c as f64 / n as f64);
    }
    println!("  mean angle to the nearest mode {:.1}°", (angle_sum / n as f64).to_degrees());

    let scenes = ScenePrior::default();
    println!("scene samples:");
    for _ in 0..5 {
        let s = scenes.sample(&mut rng);
        let e = s.object.extents();
        println!(
            "  {:<14} extents {:.3}×{:.3}×{:.3} m  μ = {:.2}  at ({:+.3}, {:+.3}) yaw {:+.2} rad",
            scenes.objects[s.object.id].name, e.x, e.y, e.z, s.object.friction, s.pose.x, s.pose.y, s.pose.yaw
        );
    }
}

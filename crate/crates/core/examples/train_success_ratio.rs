//! Simulates grasp episodes from the priors and trains the success-ratio
//! classifier `d(S, h)`, then reports held-out loss and calibration.
//!
//! Usage: `cargo run --release --example train_success_ratio [simulated] [keep] [seed]`
//!
//! Failures are thinned to the `keep` fraction; every success is kept.

use lfgrasp::distributions::{HandPrior, ScenePrior};
use lfgrasp::ratio::{train_success_ratio, Architecture, TrainConfig};
use lfgrasp::world::{generate_episodes, thin_failures, EpisodeSet, WorldParams};

fn main() -> lfgrasp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2_000_000);
    let keep: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.015);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let prior = HandPrior::default();
    let t = std::time::Instant::now();
    let episodes =
        generate_episodes(n, seed, &prior, &ScenePrior::default(), &WorldParams::default(), EpisodeSet::NoImages);
    let episodes = thin_failures(episodes, keep);
    let successes = episodes.iter().filter(|e| e.success).count();
    println!("{n} simulated, {} kept, {successes} successful ({:.1}s)", episodes.len(), t.elapsed().as_secs_f64());

    let (_model, report) =
        train_success_ratio(&episodes, &prior, &Architecture::default(), &TrainConfig::default(), seed)?;
    for e in &report.epochs {
        println!("epoch {:>3}  train {:.5}  held-out {:.5}", e.epoch, e.train_loss, e.heldout_loss);
    }
    println!(
        "best epoch {} held-out BCE {:.5} (ln 2 = {:.5}), calibration {:.3}, {:.1}s",
        report.best_epoch,
        report.best_heldout_loss,
        std::f64::consts::LN_2,
        report.calibration.unwrap_or(f64::NAN),
        report.wall_time_s
    );
    Ok(())
}

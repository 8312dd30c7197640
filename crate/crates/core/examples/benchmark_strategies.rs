//! Trains the success, image and oracle ratio models on the toy world and
//! benchmarks the planning strategies against each other.
//!
//! Usage: `cargo run --release --example benchmark_strategies [trials] [image-positives]`

use std::time::Instant;

use lfgrasp::distributions::{HandPrior, ScenePrior};
use lfgrasp::eval::{run_benchmark, BenchmarkSetup};
use lfgrasp::planner::{PlanConfig, Strategy, StrategyModels};
use lfgrasp::ratio::{train_image_ratio, train_oracle_ratio, train_success_ratio, Architecture, TrainConfig};
use lfgrasp::world::{generate_episodes, generate_positive_episodes, thin_failures, EpisodeSet, WorldParams};

fn main() -> lfgrasp::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let positives: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let hands = HandPrior::default();
    let scenes = ScenePrior::default();
    let world = WorldParams::default();
    let arch = Architecture::default();
    let cfg = TrainConfig::default();

    let t = Instant::now();
    let joint = thin_failures(generate_episodes(2_000_000, 1, &hands, &scenes, &world, EpisodeSet::NoImages), 0.015);
    let (success, report) = train_success_ratio(&joint, &hands, &arch, &cfg, 2)?;
    println!(
        "success ratio: {} examples, BCE {:.4}, calibration {:.3}, {:.0}s",
        joint.len(),
        report.best_heldout_loss,
        report.calibration.unwrap_or(f64::NAN),
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let pos = generate_positive_episodes(positives, 3, &hands, &scenes, &world, 100_000_000)?;
    println!("{} positives with images, {:.0}s", pos.len(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let (oracle, report) = train_oracle_ratio(&pos, &hands, &arch, &cfg, false, 4)?;
    println!(
        "oracle ratio: BCE {:.4}, {} epochs, {:.0}s",
        report.best_heldout_loss,
        report.epochs.len(),
        t.elapsed().as_secs_f64()
    );
    let t = Instant::now();
    let (image, report) = train_image_ratio(&pos, &hands, &arch, &cfg, 5)?;
    println!(
        "image ratio: BCE {:.4}, {} epochs, {:.0}s",
        report.best_heldout_loss,
        report.epochs.len(),
        t.elapsed().as_secs_f64()
    );

    let models = StrategyModels { success: Some(&success), image: Some(&image), oracle: Some(&oracle) };
    let plan = PlanConfig::default();
    let setup = BenchmarkSetup { models, hand_prior: &hands, scene_prior: &scenes, world: &world, plan: &plan };
    for s in [Strategy::PriorSample, Strategy::MetricMap, Strategy::ImageMap, Strategy::OracleMap] {
        let r = run_benchmark(s, &setup, trials, 100)?;
        println!(
            "{:<13} {:>4}/{:<4} {:5.1}%  [{:5.1}, {:5.1}]  plan {:.3}s  total {:.0}s",
            s.name(),
            r.successes,
            r.n_trials,
            100.0 * r.rate,
            100.0 * r.interval.low,
            100.0 * r.interval.high,
            r.mean_planning_time_s,
            r.wall_time_s
        );
    }
    Ok(())
}

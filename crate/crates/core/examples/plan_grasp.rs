//! Trains compact success and oracle estimators, plans grasps for a few
//! sampled scenes with every strategy that needs no image, and executes each
//! plan in the simulator.
//!
//! Usage: `cargo run --release --example plan_grasp [scenes] [seed]`

use lfgrasp::distributions::{HandPrior, ScenePrior};
use lfgrasp::planner::{plan_strategy, Observation, PlanConfig, Strategy, StrategyModels};
use lfgrasp::ratio::{train_oracle_ratio, train_success_ratio, Architecture, TrainConfig};
use lfgrasp::world::{
    collect_episodes, generate_positive_episodes, sample_nuisances, simulate_grasp, EpisodeSet, WorldParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lfgrasp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let (hands, scenes, world) = (HandPrior::default(), ScenePrior::default(), WorldParams::default());
    let arch = Architecture { hidden: vec![128, 128], ..Default::default() };
    let cfg = TrainConfig { max_epochs: 20, ..Default::default() };

    let joint = collect_episodes(30_000, seed, &hands, &scenes, &world, EpisodeSet::NoImages, 0.015, 100_000_000)?;
    let (success, r) = train_success_ratio(&joint.episodes, &hands, &arch, &cfg, seed + 1)?;
    println!("success estimator: held-out BCE {:.4}", r.best_heldout_loss);
    let positives = generate_positive_episodes(5000, seed + 2, &hands, &scenes, &world, 100_000_000)?;
    let (oracle, r) = train_oracle_ratio(&positives, &hands, &arch, &cfg, false, seed + 3)?;
    println!("oracle estimator: held-out BCE {:.4}", r.best_heldout_loss);

    let models = StrategyModels { success: Some(&success), image: None, oracle: Some(&oracle) };
    let plan = PlanConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 4);
    for _ in 0..n {
        let scene = scenes.sample(&mut rng);
        let nuisances = sample_nuisances(&world.camera, &mut rng);
        println!("{} at ({:+.3}, {:+.3})", scenes.objects[scene.object.id].name, scene.pose.x, scene.pose.y);
        let obs = Observation { image: None, scene: Some((&scene.object, &scene.pose)) };
        for s in [Strategy::PriorSample, Strategy::MetricMap, Strategy::OracleMle, Strategy::OracleMap] {
            let out = plan_strategy(s, &models, &obs, &hands, &plan, &mut rng)?;
            let h = out.hand;
            let result = simulate_grasp(&h, &scene.object, &scene.pose, &nuisances, &world.gripper, &mut rng);
            println!(
                "  {:<13} x = ({:+.3}, {:+.3}, {:.3}) {:<5}  cost {:8.3}  {}",
                s.name(),
                h.x.x,
                h.x.y,
                h.x.z,
                h.g.name(),
                out.cost,
                if result.success { "lifted".to_string() } else { format!("failed ({:?})", result.failure_reason) }
            );
        }
    }
    Ok(())
}

//! Monte Carlo estimate of how often a grasp drawn from the hand prior lifts a
//! random object, with the failure breakdown per lift-test phase.

use std::collections::BTreeMap;

use lfgrasp::distributions::{HandPrior, ScenePrior};
use lfgrasp::world::{generate_episodes, EpisodeSet, WorldParams};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let episodes = generate_episodes(
        n,
        1,
        &HandPrior::default(),
        &ScenePrior::default(),
        &WorldParams::default(),
        EpisodeSet::NoImages,
    );
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_object: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let catalog = lfgrasp::world::default_catalog();
    for e in &episodes {
        *reasons.entry(format!("{:?}", e.failure)).or_default() += 1;
        let slot = per_object.entry(catalog[e.object.id].name.clone()).or_default();
        slot.0 += e.success as usize;
        slot.1 += 1;
    }
    let ok = episodes.iter().filter(|e| e.success).count();
    println!("success {ok}/{n} = {:.3}%", 100.0 * ok as f64 / n as f64);
    for (r, c) in reasons {
        println!("  {r:<12} {:.2}%", 100.0 * c as f64 / n as f64);
    }
    for (name, (s, t)) in per_object {
        println!("  {name:<12} {:.2}%", 100.0 * s as f64 / t as f64);
    }
}

//! Runs Riemannian conjugate gradient on `ℝ³ × S³` for two problems with
//! known answers: the prior alone (which converges to a rotation mode) and a
//! quadratic well in position.
//!
//! Usage: `cargo run --release --example manifold_cg [seed]`

use lfgrasp::distributions::HandPrior;
use lfgrasp::planner::{geometric_cg, CgConfig, MapProblem};
use lfgrasp::ratio::{ConstantRatio, HandRatio};
use lfgrasp::{GraspType, HandConfig, Result, TangentVector};
use nalgebra::{Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `log r(h) = −100 |x − target|²`, independent of rotation.
struct Well(Vector3<f64>);

impl HandRatio for Well {
    fn log_ratio_batch(&self, hands: &[HandConfig]) -> Result<Vec<f64>> {
        Ok(hands.iter().map(|h| -100.0 * (h.x - self.0).norm_squared()).collect())
    }

    fn log_ratio_grad(&self, h: &HandConfig) -> Result<(f64, TangentVector)> {
        let d = h.x - self.0;
        Ok((-100.0 * d.norm_squared(), TangentVector::new(-200.0 * d, Vector4::zeros())))
    }
}

fn main() -> Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = HandPrior::default();
    let cfg = CgConfig::default();

    let flat = MapProblem::new(&ConstantRatio(0.0), None, &prior, true);
    let h0 = HandConfig::new(prior.sample_position(&mut rng), prior.rotation.sample(&mut rng), GraspType::Basic);
    let (h, trace) = geometric_cg(&flat, &h0, &cfg)?;
    let angle = prior.rotation.modes().iter().map(|m| m.rotation_angle_to(&h.q)).fold(f64::INFINITY, f64::min);
    println!(
        "prior only: {} iterations, −log p(h) {:.4} → {:.4}",
        trace.steps.len(),
        trace.initial_cost,
        trace.final_cost
    );
    println!("  final angle to the nearest mode {:.4}°, monotone: {}", angle.to_degrees(), trace.is_monotone());

    let target = Vector3::new(0.02, -0.05, 0.18);
    let well = Well(target);
    let prob = MapProblem::new(&well, None, &prior, false);
    let (h, trace) = geometric_cg(&prob, &prior.sample(&mut rng), &cfg)?;
    println!("quadratic well: {} iterations, distance to target {:.2e}", trace.steps.len(), (h.x - target).norm());
    for it in &trace.steps {
        println!("  cost {:.6e}  |grad| {:.3e}  step {:.3e}", it.cost, it.grad_norm, it.step_size);
    }
    Ok(())
}

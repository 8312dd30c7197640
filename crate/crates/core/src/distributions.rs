//! Prior densities over hand configurations and scenes.
//!
//! The rotation prior is an antipodally symmetric mixture of power-spherical
//! distributions on S³. Every density here exposes its log-density, an
//! analytic gradient where it is differentiable, and a sampler driven by a
//! caller-owned RNG.

use std::f64::consts::PI;

use nalgebra::{Vector3, Vector4};
use rand::Rng;
use rand_distr::{Beta, Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{project_sphere_tangent, TangentVector, UnitQuaternion, UNIT_TOLERANCE};
use crate::hand::{GraspType, HandConfig};
use crate::world::{CatalogObject, ObjectSpec, Scene, ScenePose};

/// Ambient dimension of S³.
const DIM: f64 = 4.0;

/// Power-spherical distribution on S³ with density `C(κ) (1 + μᵀq)^κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSpherical {
    mu: Vector4<f64>,
    kappa: f64,
    log_norm: f64,
}

impl PowerSpherical {
    pub fn new(mu: Vector4<f64>, kappa: f64) -> Result<Self> {
        let n = mu.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitQuaternion(n));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::Invalid(format!("concentration must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { mu: mu / n, kappa, log_norm: log_normalizer(kappa) })
    }

    pub fn mu(&self) -> &Vector4<f64> {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `log C(κ)`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_prob(&self, q: &Vector4<f64>) -> Result<f64> {
        check_unit(q)?;
        Ok(self.log_prob_ambient(q))
    }

    /// The density formula evaluated at any point of ℝ⁴ (no unit check).
    pub fn log_prob_ambient(&self, q: &Vector4<f64>) -> f64 {
        self.log_prob_from_dot(self.mu.dot(q))
    }

    fn log_prob_from_dot(&self, t: f64) -> f64 {
        if self.kappa == 0.0 {
            return self.log_norm;
        }
        let base = 1.0 + t;
        if base <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_norm + self.kappa * base.ln()
        }
    }

    pub fn prob_ambient(&self, q: &Vector4<f64>) -> f64 {
        self.log_prob_ambient(q).exp()
    }

    /// Gradient of the density (not the log-density) with respect to ambient `q`:
    /// `C(κ) κ μ (1 + μᵀq)^(κ-1)`.
    pub fn grad(&self, q: &Vector4<f64>) -> Result<Vector4<f64>> {
        check_unit(q)?;
        Ok(self.grad_ambient(q))
    }

    pub fn grad_ambient(&self, q: &Vector4<f64>) -> Vector4<f64> {
        if self.kappa == 0.0 {
            return Vector4::zeros();
        }
        let base = (1.0 + self.mu.dot(q)).max(0.0);
        let scale = if self.kappa == 1.0 {
            self.log_norm.exp()
        } else if base == 0.0 {
            if self.kappa < 1.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            (self.log_norm + (self.kappa - 1.0) * base.ln()).exp() * self.kappa
        };
        self.mu * scale
    }

    /// Exact sampler: draw `t = μᵀq` from its Beta marginal, a uniform direction
    /// on the orthogonal 2-sphere, then reflect `e₁` onto `μ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        let beta = (DIM - 1.0) / 2.0;
        let alpha = beta + self.kappa;
        let z: f64 = Beta::new(alpha, beta).expect("valid beta parameters").sample(rng);
        let t = 2.0 * z - 1.0;
        let v: [f64; 3] = UnitSphere.sample(rng);
        let r = (1.0 - t * t).max(0.0).sqrt();
        let y = Vector4::new(t, r * v[0], r * v[1], r * v[2]);
        householder_to(&self.mu, &y)
    }
}

/// Applies the reflection that maps `e₁` to `mu`.
fn householder_to(mu: &Vector4<f64>, y: &Vector4<f64>) -> Vector4<f64> {
    let u = Vector4::new(1.0, 0.0, 0.0, 0.0) - mu;
    let n = u.norm();
    if n < 1e-12 {
        return *y;
    }
    let u = u / n;
    let out = y - u * (2.0 * u.dot(y));
    out / out.norm()
}

/// `log C(κ)` for the power-spherical distribution on S³:
/// `C(κ)⁻¹ = 2^(α+β) π^β Γ(α) / Γ(α+β)` with `β = 3/2`, `α = κ + 3/2`.
pub fn log_normalizer(kappa: f64) -> f64 {
    let beta = (DIM - 1.0) / 2.0;
    let alpha = beta + kappa;
    -((alpha + beta) * 2f64.ln() + beta * PI.ln() + ln_gamma(alpha) - ln_gamma(alpha + beta))
}

fn check_unit(q: &Vector4<f64>) -> Result<()> {
    let n = q.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitQuaternion(n));
    }
    Ok(())
}

/// Four modes obtained by rotating the top-down base mode by multiples of π/2
/// about the world z axis.
pub fn default_modes() -> Vec<UnitQuaternion> {
    let base = base_mode();
    (0..4)
        .map(|k| {
            let turn = UnitQuaternion::from_axis_angle(&Vector3::z(), k as f64 * PI / 2.0);
            turn.mul(&base)
        })
        .collect()
}

/// Rotation taking the gripper approach axis (hand x) to world `-z`.
pub fn base_mode() -> UnitQuaternion {
    UnitQuaternion::from_axis_angle(&Vector3::y(), PI / 2.0)
}

/// `p(q) = 1/N Σᵢ ½ PS(q; μᵢ, κ) + ½ PS(q; -μᵢ, κ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureParams", into = "MixtureParams")]
pub struct QuaternionMixturePrior {
    modes: Vec<UnitQuaternion>,
    kappa: f64,
    /// `(PS(μᵢ), PS(-μᵢ))` per mode.
    components: Vec<(PowerSpherical, PowerSpherical)>,
}

#[derive(Serialize, Deserialize)]
struct MixtureParams {
    modes: Vec<UnitQuaternion>,
    kappa: f64,
}

impl TryFrom<MixtureParams> for QuaternionMixturePrior {
    type Error = Error;

    fn try_from(p: MixtureParams) -> Result<Self> {
        QuaternionMixturePrior::new(p.modes, p.kappa)
    }
}

impl From<QuaternionMixturePrior> for MixtureParams {
    fn from(m: QuaternionMixturePrior) -> Self {
        MixtureParams { modes: m.modes, kappa: m.kappa }
    }
}

impl Default for QuaternionMixturePrior {
    fn default() -> Self {
        Self::new(default_modes(), 30.0).expect("default prior is valid")
    }
}

impl QuaternionMixturePrior {
    pub fn new(modes: Vec<UnitQuaternion>, kappa: f64) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Invalid("rotation prior needs at least one mode".into()));
        }
        let components = modes
            .iter()
            .map(|m| {
                let mu = m.as_vector();
                Ok((PowerSpherical::new(mu, kappa)?, PowerSpherical::new(-mu, kappa)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { modes, kappa, components })
    }

    pub fn modes(&self) -> &[UnitQuaternion] {
        &self.modes
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn log_weight(&self) -> f64 {
        -((2 * self.modes.len()) as f64).ln()
    }

    /// Log-density at any point of ℝ⁴. Each antipodal pair is summed first so
    /// that `q` and `-q` give bitwise-identical results.
    pub fn log_prob_ambient(&self, q: &Vector4<f64>) -> f64 {
        let logs: Vec<(f64, f64)> = self
            .components
            .iter()
            .map(|(p, n)| {
                let t = p.mu.dot(q);
                (p.log_prob_from_dot(t), n.log_prob_from_dot(-t))
            })
            .collect();
        let m = logs.iter().fold(f64::NEG_INFINITY, |m, &(a, b)| m.max(a).max(b));
        if m == f64::NEG_INFINITY {
            return m;
        }
        let s: f64 = logs.iter().map(|&(a, b)| (a - m).exp() + (b - m).exp()).sum();
        self.log_weight() + m + s.ln()
    }

    pub fn log_prob(&self, q: &UnitQuaternion) -> f64 {
        self.log_prob_ambient(&q.as_vector())
    }

    /// Ambient gradient of the mixture log-density: the density-weighted sum of
    /// component gradients divided by the mixture density.
    pub fn grad_log_ambient(&self, q: &Vector4<f64>) -> Vector4<f64> {
        let mut terms = Vec::with_capacity(2 * self.components.len());
        for (p, n) in &self.components {
            let t = p.mu.dot(q);
            terms.push((p.log_prob_from_dot(t), p.mu, 1.0 + t));
            terms.push((n.log_prob_from_dot(-t), n.mu, 1.0 - t));
        }
        let m = terms.iter().fold(f64::NEG_INFINITY, |m, t| m.max(t.0));
        if m == f64::NEG_INFINITY {
            return Vector4::zeros();
        }
        let mut num = Vector4::zeros();
        let mut den = 0.0;
        for (lp, mu, base) in terms {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let w = (lp - m).exp();
            den += w;
            // ∇p_k / p_k = κ μ_k / (1 + μ_kᵀq)
            num += mu * (w * self.kappa / base);
        }
        num / den
    }

    pub fn grad_log(&self, q: &UnitQuaternion) -> Vector4<f64> {
        self.grad_log_ambient(&q.as_vector())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UnitQuaternion {
        let k = rng.random_range(0..2 * self.components.len());
        let (p, n) = &self.components[k / 2];
        let v = if k % 2 == 0 { p.sample(rng) } else { n.sample(rng) };
        UnitQuaternion::from_vector_unchecked(v)
    }
}

/// `p(h) = p(x) p(q) p(g)` with a uniform position box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPrior {
    pub x_low: [f64; 3],
    pub x_high: [f64; 3],
    pub rotation: QuaternionMixturePrior,
    pub grasp_probs: [f64; 3],
}

impl Default for HandPrior {
    fn default() -> Self {
        Self {
            x_low: [-0.15, -0.15, 0.12],
            x_high: [0.15, 0.15, 0.34],
            rotation: QuaternionMixturePrior::default(),
            grasp_probs: [1.0 / 3.0; 3],
        }
    }
}

impl HandPrior {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.x_low[i] < self.x_high[i]) {
                return Err(Error::Config(format!("position limits unordered on axis {i}")));
            }
        }
        let s: f64 = self.grasp_probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.grasp_probs.iter().any(|&p| p < 0.0) {
            return Err(Error::Config(format!("grasp probabilities must sum to 1, got {s}")));
        }
        if !(self.rotation.kappa() > 0.0) {
            return Err(Error::Config("rotation concentration must be > 0".into()));
        }
        Ok(())
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        (0..3).all(|i| x[i] >= self.x_low[i] && x[i] <= self.x_high[i])
    }

    pub fn box_volume(&self) -> f64 {
        (0..3).map(|i| self.x_high[i] - self.x_low[i]).product()
    }

    pub fn position_log_prob(&self, x: &Vector3<f64>) -> f64 {
        if self.contains(x) {
            -self.box_volume().ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn grasp_log_prob(&self, g: GraspType) -> f64 {
        self.grasp_probs[g.index()].ln()
    }

    pub fn log_prob(&self, h: &HandConfig) -> f64 {
        self.position_log_prob(&h.x) + self.rotation.log_prob(&h.q) + self.grasp_log_prob(h.g)
    }

    /// True when `h` lies outside the position box (its log-density is `-∞`).
    pub fn support_violation(&self, h: &HandConfig) -> bool {
        !self.contains(&h.x)
    }

    /// Riemannian gradient of `log p(h)`: zero in position, projected mixture
    /// gradient in rotation.
    pub fn grad(&self, h: &HandConfig) -> TangentVector {
        TangentVector::new(Vector3::zeros(), project_sphere_tangent(&h.q, &self.rotation.grad_log(&h.q)))
    }

    pub fn sample_position<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        Vector3::from_fn(|i, _| rng.random_range(self.x_low[i]..self.x_high[i]))
    }

    pub fn sample_grasp<R: Rng + ?Sized>(&self, rng: &mut R) -> GraspType {
        sample_categorical(&self.grasp_probs, rng).and_then(GraspType::from_index).unwrap_or(GraspType::Pinch)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HandConfig {
        let x = self.sample_position(rng);
        let q = self.rotation.sample(rng);
        let g = self.sample_grasp(rng);
        HandConfig { x, q, g }
    }
}

/// Draws an index with the given (normalized) probabilities.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    probs.iter().rposition(|&p| p > 0.0)
}

/// Priors over the object and its planar pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePrior {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub yaw_range: [f64; 2],
    pub scale_range: [f64; 2],
    pub objects: Vec<CatalogObject>,
}

impl Default for ScenePrior {
    fn default() -> Self {
        Self {
            x_range: [-0.05, 0.05],
            y_range: [-0.05, 0.05],
            yaw_range: [-PI, PI],
            scale_range: [0.9, 1.1],
            objects: crate::world::default_catalog(),
        }
    }
}

impl ScenePrior {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in
            [("x", self.x_range), ("y", self.y_range), ("yaw", self.yaw_range), ("scale", self.scale_range)]
        {
            if !(r[0] < r[1]) {
                return Err(Error::Config(format!("scene prior range {name} unordered")));
            }
        }
        if self.objects.is_empty() {
            return Err(Error::Config("object catalog is empty".into()));
        }
        for o in &self.objects {
            o.validate()?;
        }
        Ok(())
    }

    pub fn sample_pose<R: Rng + ?Sized>(&self, rng: &mut R) -> ScenePose {
        ScenePose {
            x: rng.random_range(self.x_range[0]..self.x_range[1]),
            y: rng.random_range(self.y_range[0]..self.y_range[1]),
            yaw: rng.random_range(self.yaw_range[0]..self.yaw_range[1]),
        }
    }

    pub fn sample_object<R: Rng + ?Sized>(&self, rng: &mut R) -> ObjectSpec {
        let id = rng.random_range(0..self.objects.len());
        let scale = rng.random_range(self.scale_range[0]..self.scale_range[1]);
        self.objects[id].instantiate(id, scale)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Scene {
        let object = self.sample_object(rng);
        let pose = self.sample_pose(rng);
        Scene { object, pose }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn uniform_s3(rng: &mut impl Rng) -> Vector4<f64> {
        let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        v / v.norm()
    }

    #[test]
    fn normalizer_reduces_to_sphere_area() {
        assert!((log_normalizer(0.0) + (2.0 * PI * PI).ln()).abs() < 1e-12);
        let d = PowerSpherical::new(Vector4::new(0.0, 1.0, 0.0, 0.0), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let q = uniform_s3(&mut rng);
            assert!((d.log_prob(&q).unwrap() + (2.0 * PI * PI).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_depends_only_on_alignment() {
        let mu = Vector4::new(1.0, 0.0, 0.0, 0.0);
        let d = PowerSpherical::new(mu, 7.0).unwrap();
        let a = Vector4::new(0.6, 0.8, 0.0, 0.0);
        let b = Vector4::new(0.6, 0.0, 0.0, -0.8);
        assert_eq!(d.log_prob(&a).unwrap(), d.log_prob(&b).unwrap());
        assert_eq!(d.log_prob(&-mu).unwrap(), f64::NEG_INFINITY);
        assert!(d.log_prob(&Vector4::new(2.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn grad_is_parallel_to_mu_and_vanishes_at_antipode() {
        let mu = Vector4::new(0.5, 0.5, -0.5, 0.5);
        let d = PowerSpherical::new(mu, 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let q = uniform_s3(&mut rng);
            let g = d.grad(&q).unwrap();
            if g.norm() > 0.0 {
                let dir = g / g.norm();
                assert!((dir - mu).norm() < 1e-12 || (dir + mu).norm() < 1e-12);
            }
        }
        assert_eq!(d.grad(&-mu).unwrap(), Vector4::zeros());
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for kappa in [0.5, 1.0, 4.0, 30.0] {
            let d = PowerSpherical::new(uniform_s3(&mut rng), kappa).unwrap();
            for _ in 0..50 {
                let q = uniform_s3(&mut rng);
                if 1.0 + d.mu().dot(&q) < 0.05 {
                    continue;
                }
                let g = d.grad_ambient(&q);
                let fd = Vector4::from_fn(|i, _| {
                    let mut p = q;
                    let mut m = q;
                    p[i] += h;
                    m[i] -= h;
                    (d.prob_ambient(&p) - d.prob_ambient(&m)) / (2.0 * h)
                });
                let rel = (fd - g).norm() / g.norm().max(1e-12);
                assert!(rel < 1e-5, "kappa {kappa}: rel {rel}");
            }
        }
    }

    #[test]
    fn mixture_is_antipodally_symmetric_bitwise() {
        let m = QuaternionMixturePrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let q = uniform_s3(&mut rng);
            assert_eq!(m.log_prob_ambient(&q).to_bits(), m.log_prob_ambient(&-q).to_bits());
        }
    }

    #[test]
    fn mixture_grad_matches_finite_differences() {
        let m = QuaternionMixturePrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-6;
        for _ in 0..100 {
            let q = m.sample(&mut rng).as_vector();
            let g = m.grad_log_ambient(&q);
            let fd = Vector4::from_fn(|i, _| {
                let mut p = q;
                let mut n = q;
                p[i] += h;
                n[i] -= h;
                (m.log_prob_ambient(&p) - m.log_prob_ambient(&n)) / (2.0 * h)
            });
            assert!((fd - g).norm() / g.norm().max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn modes_are_quarter_turns_of_the_base_mode() {
        let modes = default_modes();
        assert_eq!(modes.len(), 4);
        let base = base_mode();
        for (k, m) in modes.iter().enumerate() {
            // gripper approach axis points to -z for every mode
            let a = m.to_rotation().column(0);
            assert!((a - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
            let turn = UnitQuaternion::from_axis_angle(&Vector3::z(), k as f64 * PI / 2.0);
            assert!(m.rotation_angle_to(&turn.mul(&base)) < 1e-9);
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                let gap = modes[i].rotation_angle_to(&modes[j]);
                assert!(gap > PI / 2.0 - 1e-9);
            }
        }
    }

    #[test]
    fn sampler_concentrates_around_mu() {
        let mu = Vector4::new(0.5, -0.5, 0.5, 0.5);
        let d = PowerSpherical::new(mu, 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mean = Vector4::zeros();
        let n = 100_000;
        for _ in 0..n {
            let s = d.sample(&mut rng);
            assert!((s.norm() - 1.0).abs() < 1e-12);
            mean += s;
        }
        let dir = mean / mean.norm();
        let angle = dir.dot(&mu).min(1.0).acos();
        assert!(angle < 5f64.to_radians());
    }

    #[test]
    fn uniform_sampler_has_zero_mean() {
        let d = PowerSpherical::new(Vector4::new(0.0, 0.0, 1.0, 0.0), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let mut mean = Vector4::zeros();
        for _ in 0..n {
            mean += d.sample(&mut rng);
        }
        mean /= n as f64;
        // each coordinate of a uniform point on S³ has variance 1/4
        let sigma = (0.25 / n as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() < 3.0 * sigma), "{mean:?}");
    }

    #[test]
    fn hand_prior_factorizes() {
        let p = HandPrior::default();
        p.validate().unwrap();
        let q = base_mode();
        let a = HandConfig::new(Vector3::new(0.0, 0.0, 0.2), q, GraspType::Wide);
        let b = HandConfig::new(Vector3::new(0.1, -0.1, 0.3), q, GraspType::Wide);
        assert_eq!(p.log_prob(&a), p.log_prob(&b));
        assert_eq!(p.grad(&a).dx, Vector3::zeros());
        let q2 = UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.7);
        let c = HandConfig { q: q2, ..a };
        let diff = p.log_prob(&a) - p.log_prob(&c);
        let expected = p.rotation.log_prob(&q) - p.rotation.log_prob(&q2);
        assert!((diff - expected).abs() < 1e-12);
        let outside = HandConfig::new(Vector3::new(0.0, 0.0, 0.5), q, GraspType::Basic);
        assert_eq!(p.log_prob(&outside), f64::NEG_INFINITY);
        assert!(p.support_violation(&outside));
        assert!(!p.support_violation(&a));
    }

    #[test]
    fn hand_prior_samples_in_support() {
        let p = HandPrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut counts = [0usize; 3];
        let mut sum_x = 0.0;
        for _ in 0..n {
            let h = p.sample(&mut rng);
            assert!(p.contains(&h.x));
            assert!((h.q.norm() - 1.0).abs() < 1e-12);
            counts[h.g.index()] += 1;
            sum_x += h.x[0];
        }
        // uniform(-0.15, 0.15): sd of the mean is 0.3/sqrt(12 n)
        let sd = 0.3 / (12.0 * n as f64).sqrt();
        assert!((sum_x / n as f64).abs() < 3.0 * sd);
        let sd_g = ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 3.0 * sd_g);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut x_low = HandPrior::default().x_low;
        x_low[2] = 0.5;
        assert!(HandPrior { x_low, ..Default::default() }.validate().is_err());
        assert!(HandPrior { grasp_probs: [0.5, 0.5, 0.5], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn mixture_roundtrips_through_json() {
        let m = QuaternionMixturePrior::default();
        let s = serde_json::to_string(&m).unwrap();
        let back: QuaternionMixturePrior = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}

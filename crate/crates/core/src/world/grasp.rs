//! Analytic lift test standing in for a rigid-body simulation.
//!
//! The test runs four phases in order and reports the first one that fails:
//! reachability, collision of palm and open fingers, finger closure on the
//! object, and a lift check for slip and pivoting.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{so3_exp, RotationMatrix};
use crate::hand::{GraspType, HandConfig};
use crate::world::nuisance::Nuisances;
use crate::world::objects::ObjectSpec;
use crate::world::ScenePose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperParams {
    /// Palm-to-fingertip distance along the approach axis.
    pub finger_length: f64,
    pub finger_radius: f64,
    /// Radius of the palm collision spheres.
    pub palm_radius: f64,
    /// Offset of the outer palm spheres from the palm center.
    pub palm_half_width: f64,
    /// Open finger span per grasp type, indexed basic, wide, pinch.
    pub spans: [f64; 3],
    /// Slip factor `k_g` per grasp type.
    pub slip_factors: [f64; 3],
    /// Smallest object cross-section a grasp holds, as a fraction of the span.
    pub min_closure_ratio: f64,
    /// Fingers must overlap the object this far up from the fingertips.
    pub contact_depth: f64,
    /// Half-width of the finger pads across the finger plane.
    pub pad_half_width: f64,
    /// Largest offset of the center of mass from the finger plane at nominal spinning friction.
    pub pivot_tolerance: f64,
    pub jitter_position: f64,
    pub jitter_angle: f64,
    /// Reachable palm positions `[low, high]` per axis.
    pub workspace_low: [f64; 3],
    pub workspace_high: [f64; 3],
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            finger_length: 0.15,
            finger_radius: 0.006,
            palm_radius: 0.02,
            palm_half_width: 0.035,
            spans: [0.14, 0.18, 0.10],
            slip_factors: [1.0, 1.2, 0.8],
            min_closure_ratio: 0.2,
            contact_depth: 0.01,
            pad_half_width: 0.025,
            pivot_tolerance: 0.06,
            jitter_position: 0.002,
            jitter_angle: 2f64.to_radians(),
            workspace_low: [-0.15, -0.15, 0.12],
            workspace_high: [0.15, 0.15, 0.34],
        }
    }
}

impl GripperParams {
    pub fn span(&self, g: GraspType) -> f64 {
        self.spans[g.index()]
    }

    pub fn slip_factor(&self, g: GraspType) -> f64 {
        self.slip_factors[g.index()]
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        let ordered = self.span(GraspType::Pinch) < self.span(GraspType::Basic)
            && self.span(GraspType::Basic) < self.span(GraspType::Wide);
        if !ordered {
            return Err(crate::error::Error::Config("finger spans must satisfy pinch < basic < wide".into()));
        }
        if !(self.finger_length > self.contact_depth && self.min_closure_ratio > 0.0 && self.min_closure_ratio < 1.0) {
            return Err(crate::error::Error::Config("gripper geometry out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Unreachable,
    Collision,
    NoContact,
    Slip,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub success: bool,
    pub failure_reason: FailureReason,
}

impl GraspOutcome {
    fn fail(reason: FailureReason) -> Self {
        Self { success: false, failure_reason: reason }
    }

    fn succeed() -> Self {
        Self { success: true, failure_reason: FailureReason::None }
    }
}

/// Hand pose expressed in the object frame.
struct LocalHand {
    palm: Vector3<f64>,
    approach: Vector3<f64>,
    closing: Vector3<f64>,
    binormal: Vector3<f64>,
}

fn yaw_matrix(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn to_object_frame(pose: &ScenePose, x: &Vector3<f64>, r: &RotationMatrix) -> LocalHand {
    let inv = yaw_matrix(pose.yaw).transpose();
    let palm = inv * (x - Vector3::new(pose.x, pose.y, 0.0));
    let rl = inv * r.0;
    let approach = rl.column(0).into_owned();
    let closing = rl.column(1).into_owned();
    LocalHand { palm, approach, closing, binormal: approach.cross(&closing) }
}

/// Runs the lift test. The result is a pure function of the inputs and the RNG state.
pub fn simulate_grasp<R: Rng + ?Sized>(
    h: &HandConfig,
    object: &ObjectSpec,
    pose: &ScenePose,
    nuisances: &Nuisances,
    params: &GripperParams,
    rng: &mut R,
) -> GraspOutcome {
    // Execution error on the commanded pose.
    let mut normal = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let dx =
        Vector3::new(normal(params.jitter_position), normal(params.jitter_position), normal(params.jitter_position));
    let eta = Vector3::new(normal(params.jitter_angle), normal(params.jitter_angle), normal(params.jitter_angle));

    // (1) reachability of the commanded pose
    let r_cmd = h.rotation();
    let reachable = (0..3).all(|i| h.x[i] >= params.workspace_low[i] && h.x[i] <= params.workspace_high[i])
        && h.x[2] >= params.palm_radius
        && r_cmd.0[(2, 0)] < 0.0;
    if !reachable {
        return GraspOutcome::fail(FailureReason::Unreachable);
    }

    let r_exec = RotationMatrix(so3_exp(&eta).0 * r_cmd.0);
    let local = to_object_frame(pose, &(h.x + dx), &r_exec);
    let span = params.span(h.g);

    // (2) palm and open fingers against object and table
    let palm_points = [
        local.palm,
        local.palm + local.closing * params.palm_half_width,
        local.palm - local.closing * params.palm_half_width,
        local.palm + local.binormal * params.palm_half_width,
        local.palm - local.binormal * params.palm_half_width,
    ];
    for p in &palm_points {
        if p[2] < params.palm_radius || object.sdf(p) < params.palm_radius {
            return GraspOutcome::fail(FailureReason::Collision);
        }
    }
    for side in [-1.0, 1.0] {
        let base = local.palm + local.closing * (0.5 * span * side);
        for k in 1..=6 {
            let p = base + local.approach * (params.finger_length * k as f64 / 6.0);
            if p[2] < params.finger_radius || object.sdf(&p) < params.finger_radius {
                return GraspOutcome::fail(FailureReason::Collision);
            }
        }
    }

    // (3) closure at the fingertips and slightly above them, anywhere across the pads
    let half = 0.5 * span;
    let closes_at = |offset: f64| -> bool {
        let tip = local.palm + local.approach * params.finger_length + local.binormal * offset;
        let upper = tip - local.approach * params.contact_depth;
        let inside = |p: &Vector3<f64>| match object.chord(p, &local.closing) {
            Some((t0, t1)) if t0 > -half && t1 < half => Some(t1 - t0),
            _ => None,
        };
        match (inside(&tip), inside(&upper)) {
            (Some(w), Some(_)) => w >= params.min_closure_ratio * span,
            _ => false,
        }
    };
    let pad = params.pad_half_width;
    let Some(offset) = [0.0, pad, -pad].into_iter().find(|&o| closes_at(o)) else {
        return GraspOutcome::fail(FailureReason::NoContact);
    };
    let tip = local.palm + local.approach * params.finger_length + local.binormal * offset;

    // (4) lift: slip against gravity and pivoting about the finger plane
    let cos_tilt = -local.approach[2];
    if cos_tilt <= 0.0 {
        return GraspOutcome::fail(FailureReason::Slip);
    }
    let tan_tilt = (1.0 - cos_tilt * cos_tilt).max(0.0).sqrt() / cos_tilt;
    let mu = object.friction * nuisances.lateral_friction_scale;
    if tan_tilt > mu * params.slip_factor(h.g) {
        return GraspOutcome::fail(FailureReason::Slip);
    }
    let lever = (object.center() - tip).dot(&local.binormal).abs();
    if lever > params.pivot_tolerance * nuisances.spinning_friction {
        return GraspOutcome::fail(FailureReason::Slip);
    }
    GraspOutcome::succeed()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::base_mode;
    use crate::world::nuisance::CameraParams;
    use crate::world::objects::{CatalogObject, Shape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn top_down(x: Vector3<f64>, g: GraspType) -> HandConfig {
        HandConfig::new(x, base_mode(), g)
    }

    #[test]
    fn fingers_closing_above_a_small_sphere_find_nothing() {
        let params = GripperParams::default();
        let nuis = Nuisances::nominal(&CameraParams::default());
        let ball = CatalogObject::new("ball", Shape::Sphere, [0.04; 3], 0.8).instantiate(0, 1.0);
        let pose = ScenePose::default();
        let h = top_down(Vector3::new(0.0, 0.0, 0.34), GraspType::Basic);
        let misses = (0..1000)
            .filter(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                simulate_grasp(&h, &ball, &pose, &nuis, &params, &mut rng).failure_reason == FailureReason::NoContact
            })
            .count();
        assert!(misses >= 990);
    }

    #[test]
    fn centered_wide_grasp_on_narrow_box_succeeds_without_jitter() {
        let params = GripperParams { jitter_position: 0.0, jitter_angle: 0.0, ..Default::default() };
        let nuis = Nuisances::nominal(&CameraParams::default());
        // 4 cm across the closing axis (world y for the base mode), 6 cm along it
        let b = CatalogObject::new("b", Shape::Box, [0.06, 0.04, 0.10], 1.0).instantiate(0, 1.0);
        let h = top_down(Vector3::new(0.0, 0.0, 0.20), GraspType::Wide);
        assert!((h.closing_axis() - Vector3::y()).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = simulate_grasp(&h, &b, &ScenePose::default(), &nuis, &params, &mut rng);
        assert_eq!(out, GraspOutcome::succeed());
    }

    #[test]
    fn palm_inside_object_collides() {
        let params = GripperParams::default();
        let nuis = Nuisances::nominal(&CameraParams::default());
        let b = CatalogObject::new("tall", Shape::Box, [0.1, 0.1, 0.30], 1.0).instantiate(0, 1.0);
        let h = top_down(Vector3::new(0.0, 0.0, 0.2), GraspType::Basic);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = simulate_grasp(&h, &b, &ScenePose::default(), &nuis, &params, &mut rng);
        assert_eq!(out.failure_reason, FailureReason::Collision);
    }

    #[test]
    fn outside_workspace_or_pointing_up_is_unreachable() {
        let params = GripperParams::default();
        let nuis = Nuisances::nominal(&CameraParams::default());
        let b = crate::world::default_catalog()[0].instantiate(0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = top_down(Vector3::new(0.0, 0.0, 0.5), GraspType::Basic);
        assert_eq!(
            simulate_grasp(&h, &b, &ScenePose::default(), &nuis, &params, &mut rng).failure_reason,
            FailureReason::Unreachable
        );
        let up = HandConfig::new(Vector3::new(0.0, 0.0, 0.2), base_mode().neg().conjugate(), GraspType::Basic);
        assert!(up.approach_axis()[2] > 0.0);
        assert_eq!(
            simulate_grasp(&up, &b, &ScenePose::default(), &nuis, &params, &mut rng).failure_reason,
            FailureReason::Unreachable
        );
    }

    #[test]
    fn identical_seeds_give_identical_outcomes() {
        let params = GripperParams::default();
        let cam = CameraParams::default();
        let prior = crate::distributions::HandPrior::default();
        let scenes = crate::distributions::ScenePrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let h = prior.sample(&mut rng);
            let s = scenes.sample(&mut rng);
            let n = crate::world::sample_nuisances(&cam, &mut rng);
            let seed: u64 = rng.random();
            let a = simulate_grasp(&h, &s.object, &s.pose, &n, &params, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = simulate_grasp(&h, &s.object, &s.pose, &n, &params, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a, b);
            assert_eq!(a.success, a.failure_reason == FailureReason::None);
        }
    }

    #[test]
    fn success_decreases_with_lateral_offset() {
        let params = GripperParams::default();
        let nuis = Nuisances::nominal(&CameraParams::default());
        let b = CatalogObject::new("b", Shape::Box, [0.08, 0.05, 0.10], 0.9).instantiate(0, 1.0);
        let mut last = usize::MAX;
        for k in 0..5 {
            // offset along the finger plane normal (world x for the base mode)
            let h = top_down(Vector3::new(0.02 * k as f64, 0.0, 0.2), GraspType::Wide);
            let wins = (0..500)
                .filter(|&s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    simulate_grasp(&h, &b, &ScenePose::default(), &nuis, &params, &mut rng).success
                })
                .count();
            assert!(wins <= last, "offset {} cm: {wins} > {last}", 2 * k);
            last = wins;
        }
        assert!(last < 500);
    }
}

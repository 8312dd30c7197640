//! Domain-randomization nuisances and the camera model they perturb.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{so3_exp, RotationMatrix};

/// Nominal camera and the spread of its randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub width: usize,
    pub height: usize,
    /// Camera center above the table origin, looking straight down.
    pub position: [f64; 3],
    /// Horizontal field of view in radians.
    pub fov: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Per-pixel Gaussian noise in normalized depth units.
    pub pixel_noise: f64,
    pub position_sigma: f64,
    /// Standard deviations of the orientation offset `η`.
    pub orientation_sigma: [f64; 3],
    /// Relative half-width of the uniform randomization (depth range, FOV, frictions).
    pub relative_spread: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            position: [0.0, 0.0, 0.75],
            fov: 30f64.to_radians(),
            depth_min: 0.40,
            depth_max: 1.00,
            pixel_noise: 0.005,
            position_sigma: 0.002,
            orientation_sigma: [0.002, 0.01, 0.002],
            relative_spread: 0.02,
        }
    }
}

impl CameraParams {
    /// Camera-to-world rotation of the unperturbed camera: optical axis `-z`,
    /// image x along world x, image y along world `-y`.
    pub fn nominal_rotation() -> RotationMatrix {
        RotationMatrix(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)))
    }
}

/// One draw of the randomized simulator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nuisances {
    pub camera_offset: [f64; 3],
    /// Axis-angle orientation offset, mapped through the exponential map.
    pub camera_eta: [f64; 3],
    pub depth_min: f64,
    pub depth_max: f64,
    pub fov: f64,
    /// Multiplier on the object's lateral friction coefficient.
    pub lateral_friction_scale: f64,
    /// Spinning friction relative to its nominal value.
    pub spinning_friction: f64,
    /// Seed of the per-pixel sensor noise.
    pub noise_seed: u64,
}

impl Nuisances {
    /// The unperturbed simulator.
    pub fn nominal(camera: &CameraParams) -> Self {
        Self {
            camera_offset: [0.0; 3],
            camera_eta: [0.0; 3],
            depth_min: camera.depth_min,
            depth_max: camera.depth_max,
            fov: camera.fov,
            lateral_friction_scale: 1.0,
            spinning_friction: 1.0,
            noise_seed: 0,
        }
    }

    pub fn camera_rotation(&self) -> RotationMatrix {
        let offset = so3_exp(&Vector3::from(self.camera_eta));
        RotationMatrix(CameraParams::nominal_rotation().0 * offset.0)
    }
}

pub fn sample_nuisances<R: Rng + ?Sized>(camera: &CameraParams, rng: &mut R) -> Nuisances {
    let mut gauss = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let camera_offset = [gauss(camera.position_sigma), gauss(camera.position_sigma), gauss(camera.position_sigma)];
    let s = camera.orientation_sigma;
    let camera_eta = [gauss(s[0]), gauss(s[1]), gauss(s[2])];
    let spread = camera.relative_spread;
    let mut jitter = |nominal: f64| -> f64 {
        if spread > 0.0 {
            nominal * rng.random_range(1.0 - spread..1.0 + spread)
        } else {
            nominal
        }
    };
    let depth_min = jitter(camera.depth_min);
    let depth_max = jitter(camera.depth_max);
    let fov = jitter(camera.fov);
    let lateral_friction_scale = jitter(1.0);
    let spinning_friction = jitter(1.0);
    Nuisances {
        camera_offset,
        camera_eta,
        depth_min,
        depth_max,
        fov,
        lateral_friction_scale,
        spinning_friction,
        noise_seed: rng.random(),
    }
}

//! Depth sensor model: perspective ray casting of one object on an infinite table.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::world::nuisance::{CameraParams, Nuisances};
use crate::world::objects::ObjectSpec;
use crate::world::ScenePose;

/// Smallest valid normalized depth; invalid pixels are exactly zero.
pub const DEPTH_FLOOR: f32 = 0.45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major normalized depths in `{0} ∪ [0.45, 1]`.
    pub depths: Vec<f32>,
}

impl DepthImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.depths[row * self.width + col]
    }

    pub fn is_valid(&self) -> bool {
        self.depths.len() == self.width * self.height
            && self.depths.iter().all(|&d| d == 0.0 || (DEPTH_FLOOR..=1.0).contains(&d))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.depths.iter().map(|&d| d as f64).collect()
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.depths.iter().flat_map(|d| d.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != width * height * 4 {
            return None;
        }
        let depths = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Some(Self { width, height, depths })
    }

    pub fn mean_abs_diff(&self, other: &Self) -> f64 {
        let n = self.depths.len().max(1) as f64;
        self.depths.iter().zip(&other.depths).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / n
    }
}

fn normalize_depth(depth: f64, near: f64, far: f64) -> f64 {
    if depth < near || depth > far || !depth.is_finite() {
        0.0
    } else {
        DEPTH_FLOOR as f64 + (1.0 - DEPTH_FLOOR as f64) * (depth - near) / (far - near)
    }
}

/// Renders the scene from the nuisance-perturbed camera.
pub fn render_depth(object: &ObjectSpec, pose: &ScenePose, nuisances: &Nuisances, camera: &CameraParams) -> DepthImage {
    let (w, h) = (camera.width, camera.height);
    let rot = nuisances.camera_rotation();
    let origin = Vector3::from(camera.position) + Vector3::from(nuisances.camera_offset);
    let focal = 0.5 * w as f64 / (0.5 * nuisances.fov).tan();
    let (s, c) = pose.yaw.sin_cos();
    let to_local = |p: &Vector3<f64>| -> Vector3<f64> {
        let dx = p[0] - pose.x;
        let dy = p[1] - pose.y;
        Vector3::new(c * dx + s * dy, -s * dx + c * dy, p[2])
    };
    let local_origin = to_local(&origin);
    let noise = Normal::new(0.0, camera.pixel_noise.max(0.0)).expect("finite noise");
    let mut rng = ChaCha8Rng::seed_from_u64(nuisances.noise_seed);

    let mut depths = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            // camera frame ray with unit z component: the ray parameter is the z-depth
            let ray_cam = Vector3::new(
                (col as f64 + 0.5 - 0.5 * w as f64) / focal,
                (row as f64 + 0.5 - 0.5 * h as f64) / focal,
                1.0,
            );
            let dir = rot.0 * ray_cam;
            let mut t = if dir[2] < 0.0 { -origin[2] / dir[2] } else { f64::INFINITY };
            let local_dir = Vector3::new(c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]);
            if let Some((t0, _)) = object.chord(&local_origin, &local_dir) {
                if t0 > 0.0 && t0 < t {
                    t = t0;
                }
            }
            let mut v = normalize_depth(t, nuisances.depth_min, nuisances.depth_max);
            if v > 0.0 && camera.pixel_noise > 0.0 {
                v = (v + noise.sample(&mut rng)).clamp(DEPTH_FLOOR as f64, 1.0);
            }
            depths.push(v as f32);
        }
    }
    DepthImage { width: w, height: h, depths }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::objects::{CatalogObject, Shape};
    use crate::world::sample_nuisances;
    use rand::SeedableRng;

    fn quiet_camera() -> CameraParams {
        CameraParams { pixel_noise: 0.0, ..Default::default() }
    }

    #[test]
    fn empty_table_is_flat() {
        let cam = quiet_camera();
        let nuis = Nuisances::nominal(&cam);
        let empty = crate::world::default_catalog()[0].instantiate(0, 0.0);
        let img = render_depth(&empty, &ScenePose::default(), &nuis, &cam);
        let table = normalize_depth(cam.position[2], cam.depth_min, cam.depth_max) as f32;
        assert!(img.depths.iter().all(|&d| (d - table).abs() < 1e-6));
        assert!(img.is_valid());
    }

    #[test]
    fn taller_object_is_closer_at_its_apex() {
        let cam = quiet_camera();
        let nuis = Nuisances::nominal(&cam);
        let short = CatalogObject::new("s", Shape::Box, [0.06, 0.06, 0.05], 1.0).instantiate(0, 1.0);
        let tall = CatalogObject::new("t", Shape::Box, [0.06, 0.06, 0.15], 1.0).instantiate(0, 1.0);
        let pose = ScenePose::default();
        let a = render_depth(&short, &pose, &nuis, &cam);
        let b = render_depth(&tall, &pose, &nuis, &cam);
        let (r, c) = (cam.height / 2, cam.width / 2);
        let table = normalize_depth(cam.position[2], cam.depth_min, cam.depth_max) as f32;
        assert!(a.get(r, c) < table);
        assert!(b.get(r, c) < a.get(r, c));
    }

    #[test]
    fn nuisance_draws_perturb_mildly() {
        let cam = CameraParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scenes = crate::distributions::ScenePrior::default();
        for _ in 0..20 {
            let s = scenes.sample(&mut rng);
            let a = render_depth(&s.object, &s.pose, &sample_nuisances(&cam, &mut rng), &cam);
            let b = render_depth(&s.object, &s.pose, &sample_nuisances(&cam, &mut rng), &cam);
            assert!(a.is_valid() && b.is_valid());
            assert_ne!(a, b);
            assert!(a.mean_abs_diff(&b) < 0.1);
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let cam = CameraParams::default();
        let nuis = Nuisances::nominal(&cam);
        let o = crate::world::default_catalog()[4].instantiate(4, 1.0);
        let img = render_depth(&o, &ScenePose { x: 0.02, y: -0.01, yaw: 0.3 }, &nuis, &cam);
        let back = DepthImage::from_le_bytes(img.width, img.height, &img.to_le_bytes()).unwrap();
        assert_eq!(img, back);
    }
}

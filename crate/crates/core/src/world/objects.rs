//! Parametric object primitives resting on the table plane `z = 0`.
//!
//! Every shape is convex and expressed in its own frame: origin on the table
//! below the object center, z up. Capsules lie on their side along local x.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Cylinder,
    Sphere,
    Capsule,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Box, Shape::Cylinder, Shape::Sphere, Shape::Capsule];

    pub fn index(self) -> usize {
        match self {
            Shape::Box => 0,
            Shape::Cylinder => 1,
            Shape::Sphere => 2,
            Shape::Capsule => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Box => "box",
            Shape::Cylinder => "cylinder",
            Shape::Sphere => "sphere",
            Shape::Capsule => "capsule",
        }
    }
}

/// An entry of the object set the scene prior draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogObject {
    pub name: String,
    pub shape: Shape,
    /// Full extents along local x, y, z in meters.
    pub dims: [f64; 3],
    pub friction: f64,
}

impl CatalogObject {
    pub fn new(name: &str, shape: Shape, dims: [f64; 3], friction: f64) -> Self {
        Self { name: name.to_string(), shape, dims, friction }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d > 0.0)) || !(self.friction > 0.0) {
            return Err(Error::Config(format!("object {}: dimensions and friction must be > 0", self.name)));
        }
        let ok = match self.shape {
            Shape::Box => true,
            Shape::Cylinder => self.dims[0] == self.dims[1],
            Shape::Sphere => self.dims[0] == self.dims[1] && self.dims[1] == self.dims[2],
            Shape::Capsule => self.dims[1] == self.dims[2] && self.dims[0] >= self.dims[1],
        };
        if !ok {
            return Err(Error::Config(format!("object {}: extents inconsistent with {:?}", self.name, self.shape)));
        }
        Ok(())
    }

    pub fn instantiate(&self, id: usize, scale: f64) -> ObjectSpec {
        ObjectSpec { id, shape: self.shape, dims: self.dims, scale, friction: self.friction }
    }
}

/// Twelve household-sized primitives spanning the three grasp widths.
pub fn default_catalog() -> Vec<CatalogObject> {
    vec![
        CatalogObject::new("tea_box", Shape::Box, [0.075, 0.12, 0.155], 0.8),
        CatalogObject::new("domino_box", Shape::Box, [0.06, 0.09, 0.13], 0.9),
        CatalogObject::new("jello_box", Shape::Box, [0.09, 0.135, 0.065], 0.7),
        CatalogObject::new("spam_can", Shape::Box, [0.075, 0.15, 0.10], 0.8),
        CatalogObject::new("soup_can", Shape::Cylinder, [0.10, 0.10, 0.13], 0.7),
        CatalogObject::new("mustard", Shape::Cylinder, [0.075, 0.075, 0.21], 0.9),
        CatalogObject::new("mug", Shape::Cylinder, [0.12, 0.12, 0.12], 0.8),
        CatalogObject::new("apple", Shape::Sphere, [0.10, 0.10, 0.10], 0.9),
        CatalogObject::new("orange", Shape::Sphere, [0.09, 0.09, 0.09], 1.0),
        CatalogObject::new("softball", Shape::Sphere, [0.13, 0.13, 0.13], 0.9),
        CatalogObject::new("marker", Shape::Capsule, [0.20, 0.06, 0.06], 0.8),
        CatalogObject::new("banana", Shape::Capsule, [0.24, 0.075, 0.075], 0.9),
    ]
}

/// A concrete object instance: catalog entry plus sampled scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: usize,
    pub shape: Shape,
    pub dims: [f64; 3],
    pub scale: f64,
    pub friction: f64,
}

impl ObjectSpec {
    pub fn extents(&self) -> Vector3<f64> {
        Vector3::new(self.dims[0], self.dims[1], self.dims[2]) * self.scale
    }

    pub fn height(&self) -> f64 {
        self.dims[2] * self.scale
    }

    /// Center of mass in the object frame.
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, 0.5 * self.height())
    }

    fn is_degenerate(&self) -> bool {
        !(self.scale > 0.0) || self.dims.iter().any(|&d| !(d > 0.0))
    }

    /// Signed distance from `p` (object frame) to the surface; negative inside.
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        if self.is_degenerate() {
            return f64::INFINITY;
        }
        let e = self.extents();
        match self.shape {
            Shape::Box => {
                let h = e * 0.5;
                let d = (p - Vector3::new(0.0, 0.0, h[2])).abs() - h;
                let outside = d.map(|v| v.max(0.0)).norm();
                outside + d.max().min(0.0)
            }
            Shape::Cylinder => {
                let r = 0.5 * e[0];
                let hz = 0.5 * e[2];
                let d = Vector2::new(Vector2::new(p[0], p[1]).norm() - r, (p[2] - hz).abs() - hz);
                d.max().min(0.0) + d.map(|v| v.max(0.0)).norm()
            }
            Shape::Sphere => {
                let r = 0.5 * e[0];
                (p - Vector3::new(0.0, 0.0, r)).norm() - r
            }
            Shape::Capsule => {
                let r = 0.5 * e[1];
                let hl = (0.5 * e[0] - r).max(0.0);
                let cx = p[0].clamp(-hl, hl);
                (p - Vector3::new(cx, 0.0, r)).norm() - r
            }
        }
    }

    /// Parameter interval `[t0, t1]` over which the full line `o + t d`
    /// lies inside the object, if it meets it.
    pub fn chord(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, f64)> {
        if self.is_degenerate() {
            return None;
        }
        let e = self.extents();
        match self.shape {
            Shape::Box => {
                let h = e * 0.5;
                let lo = Vector3::new(-h[0], -h[1], 0.0);
                let hi = Vector3::new(h[0], h[1], e[2]);
                slab(o, d, &lo, &hi)
            }
            Shape::Cylinder => {
                let r = 0.5 * e[0];
                let radial = disc_interval(o[0], o[1], d[0], d[1], r)?;
                let axial = interval_1d(o[2], d[2], 0.0, e[2])?;
                intersect(radial, axial)
            }
            Shape::Sphere => {
                let r = 0.5 * e[0];
                sphere_interval(&(o - Vector3::new(0.0, 0.0, r)), d, r)
            }
            Shape::Capsule => {
                let r = 0.5 * e[1];
                let hl = (0.5 * e[0] - r).max(0.0);
                let mut acc: Option<(f64, f64)> = None;
                let mut merge = |iv: Option<(f64, f64)>| {
                    if let Some((a, b)) = iv {
                        acc = Some(match acc {
                            Some((c, e)) => (a.min(c), b.max(e)),
                            None => (a, b),
                        });
                    }
                };
                // side of the cylinder around the x axis, clipped to the segment
                let body = disc_interval(o[1], o[2] - r, d[1], d[2], r)
                    .and_then(|iv| interval_1d(o[0], d[0], -hl, hl).and_then(|ax| intersect(iv, ax)));
                merge(body);
                merge(sphere_interval(&(o - Vector3::new(-hl, 0.0, r)), d, r));
                merge(sphere_interval(&(o - Vector3::new(hl, 0.0, r)), d, r));
                acc
            }
        }
    }
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo <= hi).then_some((lo, hi))
}

/// Interval where `lo <= o + t d <= hi` for a scalar coordinate.
fn interval_1d(o: f64, d: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if d.abs() < 1e-15 {
        return (o >= lo && o <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let a = (lo - o) / d;
    let b = (hi - o) / d;
    Some((a.min(b), a.max(b)))
}

fn slab(o: &Vector3<f64>, d: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<(f64, f64)> {
    let mut iv = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        iv = intersect(iv, interval_1d(o[i], d[i], lo[i], hi[i])?)?;
    }
    Some(iv)
}

/// Interval where the 2-D point `(ox, oy) + t (dx, dy)` is within radius `r` of the origin.
fn disc_interval(ox: f64, oy: f64, dx: f64, dy: f64, r: f64) -> Option<(f64, f64)> {
    let a = dx * dx + dy * dy;
    let c = ox * ox + oy * oy - r * r;
    if a < 1e-18 {
        return (c <= 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let b = ox * dx + oy * dy;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

fn sphere_interval(oc: &Vector3<f64>, d: &Vector3<f64>, r: f64) -> Option<(f64, f64)> {
    let a = d.norm_squared();
    let b = oc.dot(d);
    let c = oc.norm_squared() - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 || a < 1e-18 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objects() -> Vec<ObjectSpec> {
        default_catalog().iter().enumerate().map(|(i, c)| c.instantiate(i, 1.05)).collect()
    }

    #[test]
    fn catalog_is_valid() {
        for o in default_catalog() {
            o.validate().unwrap();
        }
    }

    #[test]
    fn chord_endpoints_lie_on_the_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for o in objects() {
            let mut hits = 0;
            for _ in 0..500 {
                let p = Vector3::from_fn(|i, _| rng.random_range(-0.1..0.1) + if i == 2 { 0.1 } else { 0.0 });
                let d = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
                if let Some((t0, t1)) = o.chord(&p, &d) {
                    hits += 1;
                    assert!(t0 <= t1);
                    assert!(o.sdf(&(p + d * t0)).abs() < 1e-9, "{:?}", o.shape);
                    assert!(o.sdf(&(p + d * t1)).abs() < 1e-9, "{:?}", o.shape);
                    assert!(o.sdf(&(p + d * (0.5 * (t0 + t1)))) <= 1e-12);
                } else {
                    // a miss means no sampled point along the line is inside
                    for k in -20..=20 {
                        assert!(o.sdf(&(p + d * (k as f64 * 0.01))) > -1e-12);
                    }
                }
            }
            assert!(hits > 20, "{:?} rarely hit", o.shape);
        }
    }

    #[test]
    fn sdf_sign_matches_containment() {
        let o = CatalogObject::new("b", Shape::Box, [0.04, 0.06, 0.1], 1.0).instantiate(0, 1.0);
        assert!(o.sdf(&Vector3::new(0.0, 0.0, 0.05)) < 0.0);
        assert!((o.sdf(&Vector3::new(0.0, 0.0, 0.12)) - 0.02).abs() < 1e-12);
        assert!((o.sdf(&Vector3::new(0.03, 0.0, 0.05)) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_object_is_empty() {
        let o = default_catalog()[0].instantiate(0, 0.0);
        assert_eq!(o.chord(&Vector3::new(0.0, 0.0, 1.0), &Vector3::new(0.0, 0.0, -1.0)), None);
        assert_eq!(o.sdf(&Vector3::zeros()), f64::INFINITY);
    }
}

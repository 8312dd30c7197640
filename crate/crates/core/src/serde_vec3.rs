//! Serializes `Vector3<f64>` as a plain `[x, y, z]` array.

use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
    [v[0], v[1], v[2]].serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
    let a = <[f64; 3]>::deserialize(d)?;
    Ok(Vector3::new(a[0], a[1], a[2]))
}

//! Hand configuration `h = (x, q, g)`: palm position, orientation and grasp type.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{retract_sphere, RotationMatrix, TangentVector, UnitQuaternion};

/// Finger spread mode of the three-finger gripper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraspType {
    Basic,
    Wide,
    Pinch,
}

impl GraspType {
    pub const ALL: [GraspType; 3] = [GraspType::Basic, GraspType::Wide, GraspType::Pinch];

    pub fn index(self) -> usize {
        match self {
            GraspType::Basic => 0,
            GraspType::Wide => 1,
            GraspType::Pinch => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GraspType::Basic => "basic",
            GraspType::Wide => "wide",
            GraspType::Pinch => "pinch",
        }
    }
}

impl fmt::Display for GraspType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraspType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraspType::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown grasp type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandConfig {
    #[serde(with = "crate::serde_vec3")]
    pub x: Vector3<f64>,
    pub q: UnitQuaternion,
    pub g: GraspType,
}

impl HandConfig {
    pub fn new(x: Vector3<f64>, q: UnitQuaternion, g: GraspType) -> Self {
        Self { x, q, g }
    }

    pub fn rotation(&self) -> RotationMatrix {
        self.q.to_rotation()
    }

    /// Direction the fingers point (hand-frame x axis in world coordinates).
    pub fn approach_axis(&self) -> Vector3<f64> {
        self.rotation().column(0)
    }

    /// Direction along which the fingers close (hand-frame y axis).
    pub fn closing_axis(&self) -> Vector3<f64> {
        self.rotation().column(1)
    }

    /// Moves along a tangent vector: identity retraction on ℝ³, renormalization on S³.
    pub fn retract(&self, step: &TangentVector) -> Result<Self> {
        Ok(Self { x: self.x + step.dx, q: retract_sphere(&self.q, &step.dq)?, g: self.g })
    }
}

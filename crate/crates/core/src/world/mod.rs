//! Desk-scale generative models: the grasp lift test `p(S | h, O, p_O)`, the
//! depth sensor `p(i | O, p_O)` and their domain-randomization nuisances.

mod episode;
mod grasp;
mod nuisance;
mod objects;
mod render;

use serde::{Deserialize, Serialize};

pub use episode::{
    collect_episodes, generate_episode, generate_episodes, generate_positive_episodes, read_episodes, read_image,
    thin_failures, write_episodes, Collected, Episode, EpisodeSet, ImageRef,
};
pub use grasp::{simulate_grasp, FailureReason, GraspOutcome, GripperParams};
pub use nuisance::{sample_nuisances, CameraParams, Nuisances};
pub use objects::{default_catalog, CatalogObject, ObjectSpec, Shape};
pub use render::{render_depth, DepthImage, DEPTH_FLOOR};

/// Planar object pose on the table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenePose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub object: ObjectSpec,
    pub pose: ScenePose,
}

/// Simulator configuration shared by the grasp and sensor models.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldParams {
    pub gripper: GripperParams,
    pub camera: CameraParams,
}

impl WorldParams {
    pub fn validate(&self) -> crate::error::Result<()> {
        self.gripper.validate()?;
        let c = &self.camera;
        if c.width == 0 || c.height == 0 || !(c.depth_min < c.depth_max) || !(c.fov > 0.0) {
            return Err(crate::error::Error::Config("camera parameters out of range".into()));
        }
        Ok(())
    }
}

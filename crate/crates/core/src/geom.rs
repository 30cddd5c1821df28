//! Planar poses and rotations shared by the terrain, sensor and walker code.

use serde::{Deserialize, Serialize};

/// Position and heading in the world plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    /// Maps a point given in this pose's frame to world coordinates.
    pub fn to_world(&self, local_x: f64, local_y: f64) -> (f64, f64) {
        let (dx, dy) = rotate(local_x, local_y, self.yaw);
        (self.x + dx, self.y + dy)
    }

    /// Maps a world point into this pose's frame.
    pub fn to_local(&self, world_x: f64, world_y: f64) -> (f64, f64) {
        rotate(world_x - self.x, world_y - self.y, -self.yaw)
    }
}

pub fn rotate(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

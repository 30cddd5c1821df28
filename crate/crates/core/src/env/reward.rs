//! Dense locomotion reward group and the two-group reward record.

use serde::{Deserialize, Serialize};

use super::Command;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseWeights {
    pub xy_tracking: f64,
    pub yaw_tracking: f64,
    pub action_rate: f64,
    pub smoothness: f64,
    pub feet_distance: f64,
    pub feet_air_time: f64,
    pub stand_still: f64,
    /// Tracking shape scale.
    pub sigma: f64,
    pub min_feet_distance: f64,
    pub air_time_target: f64,
    /// Squared command norm under which the command counts as zero.
    pub stand_still_threshold: f64,
}

impl Default for DenseWeights {
    fn default() -> Self {
        Self {
            xy_tracking: 1.0,
            yaw_tracking: 1.0,
            action_rate: -0.01,
            smoothness: -1e-3,
            feet_distance: 0.5,
            feet_air_time: 1.0,
            stand_still: -0.05,
            sigma: 0.25,
            min_feet_distance: 0.18,
            air_time_target: 0.5,
            stand_still_threshold: 0.1,
        }
    }
}

impl DenseWeights {
    fn weight_array(&self) -> [f64; DenseComponents::COUNT] {
        [
            self.xy_tracking,
            self.yaw_tracking,
            self.action_rate,
            self.smoothness,
            self.feet_distance,
            self.feet_air_time,
            self.stand_still,
        ]
    }
}

/// Unweighted values of each dense term for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DenseComponents {
    pub xy_tracking: f64,
    pub yaw_tracking: f64,
    pub action_rate: f64,
    pub smoothness: f64,
    pub feet_distance: f64,
    pub feet_air_time: f64,
    pub stand_still: f64,
}

impl DenseComponents {
    pub const COUNT: usize = 7;
    pub const NAMES: [&'static str; Self::COUNT] = [
        "xy_tracking",
        "yaw_tracking",
        "action_rate",
        "smoothness",
        "feet_distance",
        "feet_air_time",
        "stand_still",
    ];

    pub fn as_array(&self) -> [f64; Self::COUNT] {
        [
            self.xy_tracking,
            self.yaw_tracking,
            self.action_rate,
            self.smoothness,
            self.feet_distance,
            self.feet_air_time,
            self.stand_still,
        ]
    }

    /// Each term multiplied by its weight, in `NAMES` order.
    pub fn weighted(&self, w: &DenseWeights) -> [f64; Self::COUNT] {
        let mut out = self.as_array();
        for (o, wi) in out.iter_mut().zip(w.weight_array()) {
            *o *= wi;
        }
        out
    }
}

fn sq_norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Evaluates every dense term for one touchdown. `actions` holds the current,
/// previous and second-previous action.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_components(
    w: &DenseWeights,
    command: Command,
    velocity: (f64, f64),
    yaw_rate: f64,
    actions: ([f64; 3], [f64; 3], [f64; 3]),
    lateral_separation: f64,
    air_time: f64,
    displacement: (f64, f64),
) -> DenseComponents {
    let (a, a1, a2) = actions;
    let ev = (velocity.0 - command.vx).powi(2) + (velocity.1 - command.vy).powi(2);
    let ew = (yaw_rate - command.wyaw).powi(2);
    let rate = sq_norm([a[0] - a1[0], a[1] - a1[1], a[2] - a1[2]]);
    let smooth = sq_norm([
        a[0] - 2.0 * a1[0] + a2[0],
        a[1] - 2.0 * a1[1] + a2[1],
        a[2] - 2.0 * a1[2] + a2[2],
    ]);
    let cmd_sq = command.vx * command.vx + command.vy * command.vy;
    let still = if cmd_sq < w.stand_still_threshold {
        displacement.0 * displacement.0 + displacement.1 * displacement.1
    } else {
        0.0
    };
    DenseComponents {
        xy_tracking: (-ev / w.sigma).exp(),
        yaw_tracking: (-ew / w.sigma).exp(),
        action_rate: rate,
        smoothness: smooth,
        feet_distance: (lateral_separation - w.min_feet_distance).max(0.0),
        // exactly one foot makes first contact per step
        feet_air_time: air_time - w.air_time_target,
        stand_still: still,
    }
}

/// Rewards of one step, split into the dense and sparse groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardGroups {
    pub dense: f64,
    pub sparse: f64,
    pub components: DenseComponents,
}

impl RewardGroups {
    pub fn new(components: DenseComponents, w: &DenseWeights, sparse: f64) -> Self {
        let dense = components.weighted(w).iter().sum();
        Self { dense, sparse, components }
    }

    pub fn total(&self) -> f64 {
        self.dense + self.sparse
    }
}

//! Robot-centric elevation map and its measurement-noise model.
//!
//! The map is a 15x15 grid at 0.1 m pitch, centered on the base and aligned
//! with its yaw. Samples are stored row-major: row `r` holds lateral offset
//! `(r - 7) * 0.1`, and along a row the column `c` advances forward with
//! offset `(c - 7) * 0.1`.
//!
//! Noise channels run in a fixed order: vertical offsets, map rotation
//! (yaw resampling plus a roll/pitch ramp), foothold extension, map repeat.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Pose2;
use crate::terrain::HeightField;

pub const MAP_SIDE: usize = 15;
pub const MAP_HALF: i32 = 7;
pub const MAP_LEN: usize = MAP_SIDE * MAP_SIDE;
pub const MAP_PITCH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ElevationMap {
    samples: [f64; MAP_LEN],
    safe: [bool; MAP_LEN],
    frame: Pose2,
}

impl ElevationMap {
    pub fn samples(&self) -> &[f64; MAP_LEN] {
        &self.samples
    }

    /// Which samples read a load-bearing cell.
    pub fn safe(&self) -> &[bool; MAP_LEN] {
        &self.safe
    }

    pub fn frame(&self) -> Pose2 {
        self.frame
    }

    pub fn pitch(&self) -> f64 {
        MAP_PITCH
    }

    /// Sample at forward index `i` and lateral index `j`, both in `-7..=7`.
    pub fn at(&self, i: i32, j: i32) -> f64 {
        self.samples[index(i, j)]
    }

    /// Base-frame offset of the sample stored at `k`.
    pub fn offset_of(k: usize) -> (f64, f64) {
        let (row, col) = (k / MAP_SIDE, k % MAP_SIDE);
        (
            (col as i32 - MAP_HALF) as f64 * MAP_PITCH,
            (row as i32 - MAP_HALF) as f64 * MAP_PITCH,
        )
    }
}

fn index(i: i32, j: i32) -> usize {
    debug_assert!(i.abs() <= MAP_HALF && j.abs() <= MAP_HALF);
    (j + MAP_HALF) as usize * MAP_SIDE + (i + MAP_HALF) as usize
}

/// Reads the field under the 15x15 grid attached to `pose`.
pub fn sample_map(field: &HeightField, pose: Pose2) -> ElevationMap {
    let mut samples = [0.0; MAP_LEN];
    let mut safe = [false; MAP_LEN];
    for k in 0..MAP_LEN {
        let (fx, fy) = ElevationMap::offset_of(k);
        let (wx, wy) = pose.to_world(fx, fy);
        let s = field.height_at(wx, wy);
        samples[k] = s.height;
        safe[k] = s.safe;
    }
    ElevationMap { samples, safe, frame: pose }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapNoiseConfig {
    pub vertical_offset_range: f64,
    pub vertical_noise_range: f64,
    pub rp_bias_range: f64,
    pub yaw_noise_range: f64,
    pub foothold_extension_prob: f64,
    pub map_repeat_prob: f64,
}

impl Default for MapNoiseConfig {
    fn default() -> Self {
        Self {
            vertical_offset_range: 0.03,
            vertical_noise_range: 0.03,
            rp_bias_range: 0.03,
            yaw_noise_range: 0.2,
            foothold_extension_prob: 0.6,
            map_repeat_prob: 0.2,
        }
    }
}

impl MapNoiseConfig {
    pub fn none() -> Self {
        Self {
            vertical_offset_range: 0.0,
            vertical_noise_range: 0.0,
            rp_bias_range: 0.0,
            yaw_noise_range: 0.0,
            foothold_extension_prob: 0.0,
            map_repeat_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ranges = [
            ("vertical_offset_range", self.vertical_offset_range),
            ("vertical_noise_range", self.vertical_noise_range),
            ("rp_bias_range", self.rp_bias_range),
            ("yaw_noise_range", self.yaw_noise_range),
        ];
        for (name, v) in ranges {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be a finite non-negative number"));
            }
        }
        for (name, p) in [
            ("foothold_extension_prob", self.foothold_extension_prob),
            ("map_repeat_prob", self.map_repeat_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Per-environment noise state; episode-scoped draws live here.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorState {
    pub episode_vertical_offset: f64,
    pub episode_yaw_noise: f64,
    pub episode_rp_bias: (f64, f64),
    pub prev_map: Option<ElevationMap>,
}

fn symmetric(rng: &mut impl Rng, half: f64) -> f64 {
    if half > 0.0 {
        half * (2.0 * rng.gen::<f64>() - 1.0)
    } else {
        0.0
    }
}

impl SensorState {
    /// Fresh state for a new episode.
    pub fn reset(cfg: &MapNoiseConfig, rng: &mut impl Rng) -> Self {
        let episode_vertical_offset = symmetric(rng, cfg.vertical_offset_range);
        let episode_yaw_noise = symmetric(rng, cfg.yaw_noise_range);
        let hx = symmetric(rng, cfg.rp_bias_range);
        let hy = symmetric(rng, cfg.rp_bias_range);
        Self {
            episode_vertical_offset,
            episode_yaw_noise,
            episode_rp_bias: (hx, hy),
            prev_map: None,
        }
    }
}

/// Which stochastic channels fired on one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseEvents {
    pub extension_triggered: bool,
    pub extended_samples: usize,
    pub repeated: bool,
}

/// Ramp added along one map axis: index `k` gets `-h + k * 2h / 14`.
pub fn ramp(h: f64, k: usize) -> f64 {
    -h + k as f64 * (2.0 * h / (MAP_SIDE - 1) as f64)
}

/// Applies the four noise channels to a clean map sampled from `field`.
pub fn apply_noise(
    map: &ElevationMap,
    field: &HeightField,
    state: &mut SensorState,
    cfg: &MapNoiseConfig,
    rng: &mut impl Rng,
) -> (ElevationMap, NoiseEvents) {
    let mut events = NoiseEvents::default();

    // vertical
    let mut vertical = [0.0; MAP_LEN];
    if cfg.vertical_noise_range > 0.0 {
        for v in vertical.iter_mut() {
            *v = symmetric(rng, cfg.vertical_noise_range);
        }
    }

    // rotation: yaw by re-querying the terrain, roll/pitch as a planar ramp
    let mut out = if state.episode_yaw_noise != 0.0 {
        let mut pose = map.frame;
        pose.yaw += state.episode_yaw_noise;
        let mut m = sample_map(field, pose);
        m.frame = map.frame;
        m
    } else {
        map.clone()
    };
    let offset = state.episode_vertical_offset;
    let (hx, hy) = state.episode_rp_bias;
    let add_vertical = offset != 0.0 || cfg.vertical_noise_range > 0.0;
    let add_ramp = hx != 0.0 || hy != 0.0;
    if add_vertical || add_ramp {
        for (k, s) in out.samples.iter_mut().enumerate() {
            if add_vertical {
                *s += offset + vertical[k];
            }
            if add_ramp {
                let (row, col) = (k / MAP_SIDE, k % MAP_SIDE);
                *s += ramp(hx, col) + ramp(hy, row);
            }
        }
    }

    // foothold extension
    if cfg.foothold_extension_prob > 0.0 && rng.gen::<f64>() < cfg.foothold_extension_prob {
        events.extension_triggered = true;
        let before = out.clone();
        for k in 0..MAP_LEN {
            if before.safe[k] {
                continue;
            }
            let Some(n) = first_safe_neighbor(&before.safe, k) else { continue };
            if rng.gen::<f64>() < cfg.foothold_extension_prob {
                out.samples[k] = before.samples[n];
                out.safe[k] = true;
                events.extended_samples += 1;
            }
        }
    }

    // map repeat
    if cfg.map_repeat_prob > 0.0 && rng.gen::<f64>() < cfg.map_repeat_prob {
        if let Some(prev) = &state.prev_map {
            events.repeated = true;
            return (prev.clone(), events);
        }
    }
    state.prev_map = Some(out.clone());
    (out, events)
}

/// First safe 4-neighbor in the order back, forward, right, left.
fn first_safe_neighbor(safe: &[bool; MAP_LEN], k: usize) -> Option<usize> {
    let (row, col) = (k / MAP_SIDE, k % MAP_SIDE);
    let candidates = [
        (col > 0).then(|| k - 1),
        (col + 1 < MAP_SIDE).then(|| k + 1),
        (row > 0).then(|| k - MAP_SIDE),
        (row + 1 < MAP_SIDE).then(|| k + MAP_SIDE),
    ];
    candidates.into_iter().flatten().find(|&n| safe[n])
}

//! Sampling-based foothold reward.
//!
//! Each sole carries `n` sample points. A sample is bad when the terrain
//! height under it is below the depth tolerance `epsilon`; contacting feet
//! are penalized by their bad-sample count (continuous) or by a unit penalty
//! once the count reaches `p%` of `n` (binary variants).

use serde::{Deserialize, Serialize};

use crate::geom::Pose2;
use crate::terrain::HeightField;

pub const FOOT_LENGTH: f64 = 0.20;
pub const FOOT_WIDTH: f64 = 0.10;
pub const DEFAULT_EPSILON: f64 = -0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootPrint {
    offsets: Vec<(f64, f64)>,
}

impl FootPrint {
    /// `nx` by `ny` grid spanning `length` x `width`, boundary inclusive.
    pub fn grid(nx: usize, ny: usize, length: f64, width: f64) -> Result<Self, String> {
        if nx < 2 || ny < 2 || nx * ny < 4 {
            return Err(format!("footprint grid {nx}x{ny} too small"));
        }
        let mut offsets = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let fx = length * (i as f64 / (nx - 1) as f64 - 0.5);
                let fy = width * (j as f64 / (ny - 1) as f64 - 0.5);
                offsets.push((fx, fy));
            }
        }
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[(f64, f64)] {
        &self.offsets
    }

    pub fn n(&self) -> usize {
        self.offsets.len()
    }
}

impl Default for FootPrint {
    fn default() -> Self {
        Self::grid(4, 4, FOOT_LENGTH, FOOT_WIDTH).expect("4x4 grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootState {
    pub pose: Pose2,
    pub contact: bool,
    pub air_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FootholdMode {
    Continuous,
    /// Full unit penalty once at least `p` percent of the samples are bad.
    BinaryPct(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootholdConfig {
    pub epsilon: f64,
    pub mode: FootholdMode,
    pub support_threshold: f64,
}

impl Default for FootholdConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            mode: FootholdMode::Continuous,
            support_threshold: 0.5,
        }
    }
}

impl FootholdConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon < 0.0) {
            return Err(format!("epsilon must be negative, got {}", self.epsilon));
        }
        if let FootholdMode::BinaryPct(p) = self.mode {
            if p == 0 || p >= 100 {
                return Err(format!("binary foothold percentage {p} outside (0, 100)"));
            }
        }
        if !(self.support_threshold > 0.0 && self.support_threshold <= 1.0) {
            return Err(format!("support_threshold {} outside (0, 1]", self.support_threshold));
        }
        Ok(())
    }
}

/// Number of sole samples whose terrain height lies below `epsilon`.
/// Samples outside the field count as bad.
pub fn bad_sample_count(foot: &FootState, print: &FootPrint, field: &HeightField, epsilon: f64) -> usize {
    print
        .offsets
        .iter()
        .filter(|&&(fx, fy)| {
            let (wx, wy) = foot.pose.to_world(fx, fy);
            let s = field.height_at(wx, wy);
            !s.in_bounds || s.height < epsilon
        })
        .count()
}

pub fn support_fraction(foot: &FootState, print: &FootPrint, field: &HeightField, epsilon: f64) -> f64 {
    let n = print.n();
    (n - bad_sample_count(foot, print, field, epsilon)) as f64 / n as f64
}

/// Penalty for one foot given its bad-sample count.
pub fn penalty_for(bad: usize, n: usize, mode: FootholdMode) -> f64 {
    match mode {
        FootholdMode::Continuous => -(bad as f64),
        FootholdMode::BinaryPct(p) => {
            // bad >= p% of n, in integers
            if bad * 100 >= p as usize * n {
                -1.0
            } else {
                0.0
            }
        }
    }
}

/// Foothold reward over both feet; feet without contact contribute nothing.
pub fn foothold_reward(feet: &[FootState; 2], print: &FootPrint, field: &HeightField, cfg: &FootholdConfig) -> f64 {
    feet.iter()
        .filter(|f| f.contact)
        .map(|f| penalty_for(bad_sample_count(f, print, field, cfg.epsilon), print.n(), cfg.mode))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Touchdown {
    pub bad: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootholdError {
    pub value: f64,
    /// Set when the log held no touchdowns and `value` defaulted to 0.
    pub empty: bool,
}

/// Mean fraction of sole samples that landed off safe footholds.
pub fn foothold_error(log: &[Touchdown]) -> FootholdError {
    if log.is_empty() {
        return FootholdError { value: 0.0, empty: true };
    }
    let total: f64 = log.iter().map(|t| t.bad as f64 / t.n as f64).sum();
    FootholdError {
        value: total / log.len() as f64,
        empty: false,
    }
}

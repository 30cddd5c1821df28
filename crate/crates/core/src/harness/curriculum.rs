use serde::{Deserialize, Serialize};

use crate::terrain::MAX_LEVEL;

/// Consecutive successes needed to move up one level.
pub const PROMOTION_STREAK: u32 = 3;

/// Per-environment terrain curriculum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub level: Vec<u8>,
    pub consecutive_successes: Vec<u32>,
    pub passed_all: Vec<bool>,
    /// Highest level handed out; the last level counts as passing everything.
    pub max_level: u8,
}

/// One logged curriculum transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub env: usize,
    pub success: bool,
    pub level_before: u8,
    pub level_after: u8,
    pub streak_after: u32,
    pub passed_all: bool,
}

impl CurriculumState {
    pub fn new(num_envs: usize, start_level: u8, max_level: u8) -> Self {
        let max_level = max_level.min(MAX_LEVEL);
        Self {
            level: vec![start_level.min(max_level); num_envs],
            consecutive_successes: vec![0; num_envs],
            passed_all: vec![false; num_envs],
            max_level,
        }
    }

    pub fn num_envs(&self) -> usize {
        self.level.len()
    }

    pub fn mean_level(&self) -> f64 {
        self.level.iter().map(|&l| l as f64).sum::<f64>() / self.level.len().max(1) as f64
    }

    /// Applies one finished episode of environment `env`.
    pub fn update(&mut self, env: usize, success: bool) -> Transition {
        let before = self.level[env];
        let (level, streak, passed) =
            curriculum_update(before, self.consecutive_successes[env], self.passed_all[env], success, self.max_level);
        self.level[env] = level;
        self.consecutive_successes[env] = streak;
        self.passed_all[env] = passed;
        Transition { env, success, level_before: before, level_after: level, streak_after: streak, passed_all: passed }
    }
}

/// Level, streak and passed flag after one episode.
///
/// Three successes in a row promote one level. Before the top level has been
/// passed a failure only resets the streak; afterwards every failure demotes
/// one level and every success promotes one.
pub fn curriculum_update(level: u8, streak: u32, passed_all: bool, success: bool, max_level: u8) -> (u8, u32, bool) {
    if passed_all {
        let level = if success { (level + 1).min(max_level) } else { level.saturating_sub(1) };
        return (level, 0, true);
    }
    if !success {
        return (level, 0, false);
    }
    let streak = streak + 1;
    if streak < PROMOTION_STREAK {
        return (level, streak, false);
    }
    if level >= max_level {
        (max_level, 0, true)
    } else {
        (level + 1, 0, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn promotion_and_reset() {
        assert_eq!(curriculum_update(3, 2, false, true, 8), (4, 0, false));
        assert_eq!(curriculum_update(3, 2, false, false, 8), (3, 0, false));
        assert_eq!(curriculum_update(3, 0, false, true, 8), (3, 1, false));
        assert_eq!(curriculum_update(8, 2, false, true, 8), (8, 0, true));
    }

    #[test]
    fn demotion_only_after_passing_everything() {
        assert_eq!(curriculum_update(5, 1, false, false, 8), (5, 0, false));
        assert_eq!(curriculum_update(8, 0, true, false, 8), (7, 0, true));
        assert_eq!(curriculum_update(7, 0, true, true, 8), (8, 0, true));
        assert_eq!(curriculum_update(0, 0, true, false, 8), (0, 0, true));
    }

    #[test]
    fn capped_curriculum_passes_at_its_cap() {
        let mut c = CurriculumState::new(1, 0, 2);
        for _ in 0..9 {
            c.update(0, true);
        }
        assert_eq!(c.level[0], 2);
        assert!(c.passed_all[0]);
    }
}

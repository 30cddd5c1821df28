//! Sequential ablation campaigns: each cell trains its pipeline per seed and
//! evaluates on shared terrains.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{run_eval, stage_dir, train, write_csv, write_report, HarnessError, RunConfig, SeedMetrics, TrainRow};
use crate::env::{DynamicsMode, Stage};
use crate::foothold::FootholdMode;
use crate::rl::CriticMode;
use crate::terrain::TerrainKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    /// Soft stage then hard stage, double critic, continuous foothold reward.
    Ours,
    /// Hard stage only, from a random policy.
    NoSoft,
    /// Both stages with one critic on the summed reward.
    SingleCritic,
    /// One hard stage with one critic on the stage-1 terrain.
    Naive,
    /// Binary foothold reward at the given percentage.
    Foothold(u8),
    /// Curriculum off, every environment pinned to the level.
    NoCurriculum(u8),
    /// Heading-correcting yaw command.
    Heading,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Ours => f.write_str("ours"),
            Cell::NoSoft => f.write_str("no_soft"),
            Cell::SingleCritic => f.write_str("single_critic"),
            Cell::Naive => f.write_str("naive"),
            Cell::Foothold(p) => write!(f, "foothold_{p}"),
            Cell::NoCurriculum(6) => f.write_str("no_curriculum_medium"),
            Cell::NoCurriculum(8) => f.write_str("no_curriculum_hard"),
            Cell::NoCurriculum(l) => write!(f, "no_curriculum_{l}"),
            Cell::Heading => f.write_str("heading"),
        }
    }
}

impl FromStr for Cell {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("unknown ablation cell `{s}`"));
        Ok(match s {
            "ours" => Cell::Ours,
            "no_soft" => Cell::NoSoft,
            "single_critic" => Cell::SingleCritic,
            "naive" => Cell::Naive,
            "heading" => Cell::Heading,
            "no_curriculum_medium" => Cell::NoCurriculum(6),
            "no_curriculum_hard" => Cell::NoCurriculum(8),
            _ => {
                if let Some(p) = s.strip_prefix("foothold_") {
                    Cell::Foothold(p.parse().map_err(|_| bad())?)
                } else if let Some(l) = s.strip_prefix("no_curriculum_") {
                    Cell::NoCurriculum(l.parse().map_err(|_| bad())?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

/// Campaign layout shared by all cells.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub cells: Vec<Cell>,
    /// Training seeds; each trains an independent pipeline per cell.
    pub seeds: Vec<u64>,
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    /// Training terrains per stage; empty means the stage default.
    pub stage1_kinds: Vec<TerrainKind>,
    pub stage2_kinds: Vec<TerrainKind>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            cells: vec![Cell::Ours, Cell::NoSoft, Cell::SingleCritic, Cell::Naive],
            seeds: vec![0, 1, 2],
            stage1_iterations: 10_000,
            stage2_iterations: 10_000,
            stage1_kinds: Vec::new(),
            stage2_kinds: Vec::new(),
        }
    }
}

/// Outcome of one (cell, seed) pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub seed: u64,
    pub dir: PathBuf,
    /// Evaluation metrics, or the error that stopped the pipeline.
    pub outcome: Result<Vec<SeedMetrics>, String>,
}

/// Row of `ablation.csv`.
#[derive(Debug, Clone, Serialize)]
struct AblationRow {
    cell: String,
    seed: u64,
    kind: String,
    level: String,
    status: String,
    episodes: usize,
    successes: usize,
    r_succ: f64,
    r_trav: f64,
    e_foot: f64,
}

/// Stage configurations of a cell; `None` skips the stage.
pub fn cell_configs(base: &RunConfig, ab: &AblationConfig, cell: Cell, seed: u64) -> (Option<RunConfig>, RunConfig) {
    let mut s1 = base.clone();
    s1.stage = Stage::One;
    s1.seed = seed;
    s1.iterations = ab.stage1_iterations;
    s1.terrain_kinds = ab.stage1_kinds.clone();
    s1.dynamics = None;
    s1.init = None;
    s1.from_scratch = false;
    let mut s2 = s1.clone();
    s2.stage = Stage::Two;
    s2.iterations = ab.stage2_iterations;
    s2.terrain_kinds = ab.stage2_kinds.clone();
    // the stage-1 checkpoint path is filled in once it exists
    s2.from_scratch = true;

    let mut stage1 = true;
    match cell {
        Cell::Ours => {}
        Cell::NoSoft => stage1 = false,
        Cell::SingleCritic => {
            s1.critic = CriticMode::Single;
            s2.critic = CriticMode::Single;
        }
        Cell::Naive => {
            s1.critic = CriticMode::Single;
            s1.dynamics = Some(DynamicsMode::Hard);
            s2.critic = CriticMode::Single;
        }
        Cell::Foothold(p) => {
            s1.env.foothold.mode = FootholdMode::BinaryPct(p);
            s2.env.foothold.mode = FootholdMode::BinaryPct(p);
        }
        Cell::NoCurriculum(level) => {
            for c in [&mut s1, &mut s2] {
                c.curriculum = false;
                c.fixed_level = level;
            }
        }
        Cell::Heading => {
            s1.env.heading_command = true;
            s2.env.heading_command = true;
        }
    }
    (stage1.then_some(s1), s2)
}

/// Trains and evaluates one cell for one seed under `dir`.
pub fn run_cell(
    base: &RunConfig,
    ab: &AblationConfig,
    cell: Cell,
    seed: u64,
    dir: &Path,
    progress: &mut dyn FnMut(&TrainRow),
) -> Result<Vec<SeedMetrics>, HarnessError> {
    let (s1, mut s2) = cell_configs(base, ab, cell, seed);
    if let Some(s1) = s1 {
        let out = train(&s1, &stage_dir(dir, Stage::One), None, Some(&mut *progress))?;
        s2.init = Some(out.checkpoint_path);
        s2.from_scratch = false;
    }
    let out = train(&s2, &stage_dir(dir, Stage::Two), None, Some(progress))?;
    let mut eval_cfg = s2.clone();
    // every cell of one seed sees the same evaluation terrains
    eval_cfg.eval.seeds = vec![seed];
    let report = run_eval(&out.checkpoint.agent, &eval_cfg)?;
    write_report(&dir.join("eval"), &report)?;
    Ok(report.per_seed)
}

/// Runs every (cell, seed) pipeline in order; failures are recorded and the matrix continues.
pub fn run_ablation_matrix(
    base: &RunConfig,
    ab: &AblationConfig,
    out: &Path,
    progress: &mut dyn FnMut(Cell, u64, &TrainRow),
) -> Result<Vec<CellResult>, HarnessError> {
    std::fs::create_dir_all(out)?;
    let mut results = Vec::new();
    for &cell in &ab.cells {
        for &seed in &ab.seeds {
            let dir = out.join(cell.to_string()).join(format!("seed_{seed}"));
            let mut inner = |row: &TrainRow| progress(cell, seed, row);
            let outcome = run_cell(base, ab, cell, seed, &dir, &mut inner).map_err(|e| e.to_string());
            results.push(CellResult { cell, seed, dir, outcome });
        }
    }
    write_csv(&out.join("ablation.csv"), &ablation_rows(&results))?;
    Ok(results)
}

fn ablation_rows(results: &[CellResult]) -> Vec<AblationRow> {
    let mut rows = Vec::new();
    for r in results {
        match &r.outcome {
            Ok(metrics) => {
                for m in metrics {
                    rows.push(AblationRow {
                        cell: r.cell.to_string(),
                        seed: r.seed,
                        kind: m.kind.to_string(),
                        level: m.level.to_string(),
                        status: "ok".into(),
                        episodes: m.metrics.episodes,
                        successes: m.metrics.successes,
                        r_succ: m.metrics.r_succ,
                        r_trav: m.metrics.r_trav,
                        e_foot: m.metrics.e_foot,
                    });
                }
            }
            Err(e) => rows.push(AblationRow {
                cell: r.cell.to_string(),
                seed: r.seed,
                kind: String::new(),
                level: String::new(),
                status: format!("error: {e}"),
                episodes: 0,
                successes: 0,
                r_succ: f64::NAN,
                r_trav: f64::NAN,
                e_foot: f64::NAN,
            }),
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_names_round_trip() {
        for c in [
            Cell::Ours,
            Cell::NoSoft,
            Cell::SingleCritic,
            Cell::Naive,
            Cell::Foothold(70),
            Cell::NoCurriculum(6),
            Cell::NoCurriculum(8),
            Cell::Heading,
        ] {
            assert_eq!(c.to_string().parse::<Cell>().unwrap(), c);
        }
        assert!("foothold_x".parse::<Cell>().is_err());
    }

    #[test]
    fn cells_change_only_their_axis() {
        let base = RunConfig::default();
        let ab = AblationConfig::default();
        let (o1, o2) = cell_configs(&base, &ab, Cell::Ours, 3);
        let (s1, s2) = cell_configs(&base, &ab, Cell::SingleCritic, 3);
        let (o1, s1) = (o1.unwrap(), s1.unwrap());
        assert_eq!(s1.critic, CriticMode::Single);
        assert_eq!(RunConfig { critic: CriticMode::Double, ..s1 }, o1);
        assert_eq!(RunConfig { critic: CriticMode::Double, ..s2 }, o2);
        let (n1, n2) = cell_configs(&base, &ab, Cell::NoSoft, 3);
        assert!(n1.is_none() && n2.from_scratch);
        let (f1, _) = cell_configs(&base, &ab, Cell::Foothold(70), 3);
        assert_eq!(f1.unwrap().env.foothold.mode, FootholdMode::BinaryPct(70));
    }
}

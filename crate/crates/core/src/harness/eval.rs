use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunConfig};
use crate::env::{evaluate, Command, EpisodeRecord, EvalMetrics, MeanPolicy, Termination};
use crate::rl::Agent;
use crate::terrain::{TerrainKind, TerrainSpec};

pub const EVAL_CSV_VERSION: u32 = 1;

/// One evaluated episode, as written to `eval.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub csv_version: u32,
    pub kind: TerrainKind,
    pub level: u8,
    pub seed: u64,
    pub episode: u64,
    pub success: bool,
    pub termination: String,
    pub timeout: bool,
    pub steps: usize,
    pub traverse_rate: f64,
    pub touchdowns: usize,
    pub bad_samples: usize,
    pub sole_samples: usize,
    pub dense_return: f64,
    pub sparse_return: f64,
}

fn termination_name(t: Option<Termination>) -> String {
    match t {
        None => "none",
        Some(Termination::Misstep) => "misstep",
        Some(Termination::OutOfBounds) => "out_of_bounds",
        Some(Termination::Collision) => "collision",
    }
    .into()
}

impl EpisodeRow {
    fn new(kind: TerrainKind, level: u8, seed: u64, episode: u64, r: &EpisodeRecord) -> Self {
        Self {
            csv_version: EVAL_CSV_VERSION,
            kind,
            level,
            seed,
            episode,
            success: r.success,
            termination: termination_name(r.termination),
            timeout: r.timeout,
            steps: r.steps,
            traverse_rate: r.traverse_rate,
            touchdowns: r.touchdowns.len(),
            bad_samples: r.bad_samples(),
            sole_samples: r.touchdowns.iter().map(|t| t.n).sum(),
            dense_return: r.dense_return,
            sparse_return: r.sparse_return,
        }
    }
}

/// Metrics of one (terrain, level) cell for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub kind: TerrainKind,
    pub level: u8,
    pub seed: u64,
    pub metrics: EvalMetrics,
}

/// One row of the comparison table: a terrain and level, aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: TerrainKind,
    pub level: u8,
    pub seeds: usize,
    pub episodes_per_seed: usize,
    pub r_succ_mean: f64,
    pub r_succ_std: f64,
    pub r_trav_mean: f64,
    pub r_trav_std: f64,
    pub e_foot_mean: f64,
    pub e_foot_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub per_seed: Vec<SeedMetrics>,
    pub episodes: Vec<EpisodeRow>,
}

/// Population mean and standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

impl ReportRow {
    pub fn aggregate(kind: TerrainKind, level: u8, per_seed: &[&EvalMetrics]) -> Self {
        let col = |f: fn(&EvalMetrics) -> f64| mean_std(&per_seed.iter().map(|m| f(m)).collect::<Vec<_>>());
        let (r_succ_mean, r_succ_std) = col(|m| m.r_succ);
        let (r_trav_mean, r_trav_std) = col(|m| m.r_trav);
        let (e_foot_mean, e_foot_std) = col(|m| m.e_foot);
        Self {
            kind,
            level,
            seeds: per_seed.len(),
            episodes_per_seed: per_seed.first().map_or(0, |m| m.episodes),
            r_succ_mean,
            r_succ_std,
            r_trav_mean,
            r_trav_std,
            e_foot_mean,
            e_foot_std,
        }
    }
}

/// Evaluates the agent's mean policy over the configured terrains, levels and seeds.
pub fn run_eval(agent: &Agent, cfg: &RunConfig) -> Result<EvalReport, HarnessError> {
    let env_cfg = cfg.env_config();
    let command = Command { vx: cfg.eval.command_vx, vy: 0.0, wyaw: 0.0 };
    let mut report = EvalReport::default();
    for &kind in &cfg.eval.kinds {
        for &level in &cfg.eval.levels {
            let mut spec = TerrainSpec::new(kind, level, 0)?;
            spec.surface_noise = cfg.terrain_noise;
            let mut cell = Vec::new();
            for &seed in &cfg.eval.seeds {
                let mut ctrl = MeanPolicy { agent, action_scale: env_cfg.action_scale };
                let (metrics, records) = evaluate(&mut ctrl, &spec, cfg.eval.episodes, &env_cfg, command, seed)?;
                for (i, r) in records.iter().enumerate() {
                    report.episodes.push(EpisodeRow::new(kind, level, seed, i as u64, r));
                }
                report.per_seed.push(SeedMetrics { kind, level, seed, metrics });
                cell.push(metrics);
            }
            let refs: Vec<&EvalMetrics> = cell.iter().collect();
            report.rows.push(ReportRow::aggregate(kind, level, &refs));
        }
    }
    Ok(report)
}

/// Recomputes the per-seed metrics of a report from its episode rows.
pub fn recount(episodes: &[EpisodeRow], kind: TerrainKind, level: u8, seed: u64) -> (usize, usize, usize, usize) {
    let rows: Vec<&EpisodeRow> = episodes.iter().filter(|r| r.kind == kind && r.level == level && r.seed == seed).collect();
    (
        rows.len(),
        rows.iter().filter(|r| r.success).count(),
        rows.iter().map(|r| r.bad_samples).sum(),
        rows.iter().map(|r| r.sole_samples).sum(),
    )
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_csv(path: &Path) -> Result<Vec<EpisodeRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Writes `eval.csv` (one row per episode) and `report.csv` (one row per terrain and level).
pub fn write_report(out: &Path, report: &EvalReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out)?;
    write_csv(&out.join("eval.csv"), &report.episodes)?;
    write_csv(&out.join("report.csv"), &report.rows)
}

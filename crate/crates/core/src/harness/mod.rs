//! Training protocol, curriculum, evaluation campaigns and run artifacts.

mod ablation;
mod checkpoint;
mod config;
mod curriculum;
mod eval;
mod train;

use thiserror::Error;

use crate::nn::NnError;
use crate::rl::RlError;
use crate::terrain::TerrainError;

pub use ablation::{cell_configs, run_ablation_matrix, run_cell, AblationConfig, Cell, CellResult};
pub use checkpoint::{CheckpointSummary, TrainingCheckpoint};
pub use config::{foothold_mode_name, parse_foothold_mode, EvalConfig, RunConfig};
pub use curriculum::{curriculum_update, CurriculumState, Transition as CurriculumTransition, PROMOTION_STREAK};
pub use eval::{
    mean_std, read_episode_csv, recount, run_eval, write_csv, write_report, EpisodeRow, EvalReport, ReportRow,
    SeedMetrics, EVAL_CSV_VERSION,
};
pub use train::{stage_dir, train, train_stage1, train_stage2, Progress, TrainOutcome, TrainRow, TRAIN_CSV_VERSION};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("numeric abort: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}

impl From<RlError> for HarnessError {
    fn from(e: RlError) -> Self {
        match e {
            RlError::NonFinite(m) => HarnessError::Numeric(m),
            RlError::Nn(NnError::NonFinite(i)) => HarnessError::Numeric(format!("non-finite value at index {i}")),
            e => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        RlError::Nn(e).into()
    }
}

impl HarnessError {
    /// Process exit status: 2 configuration, 3 numeric abort, 4 input/output.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Checkpoint(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Io(_) | HarnessError::Csv(_) => 4,
            HarnessError::Terrain(TerrainError::Io(_)) => 4,
            HarnessError::Terrain(_) => 2,
        }
    }
}

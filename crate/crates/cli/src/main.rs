use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use stonewalk::env::Stage;
use stonewalk::harness::{
    run_ablation_matrix, run_eval, train, write_report, HarnessError, RunConfig, TrainRow, TrainingCheckpoint,
};
use stonewalk::terrain::{self, TerrainKind, TerrainSpec};

#[derive(Parser)]
#[command(name = "stonewalk", version, about = "Sparse-foothold locomotion training workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines, `include = path` allowed).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Number of iterations to reach (total, counting resumed ones).
    #[arg(long)]
    iters: Option<usize>,
    /// Continue from a checkpoint of this run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Soft-dynamics stage on the stage-1 terrains.
    TrainStage1(TrainArgs),
    /// Hard-dynamics fine-tuning; needs `--init` or `--from-scratch`.
    TrainStage2 {
        #[command(flatten)]
        train: TrainArgs,
        /// Stage-1 checkpoint to start from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        from_scratch: bool,
    },
    /// Evaluates a checkpoint's mean policy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Runs the ablation matrix.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Iterations per stage.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Writes a terrain pair to `<out>/task.hgt` and `<out>/flat.hgt`.
    GenTerrain {
        #[arg(long)]
        kind: TerrainKind,
        #[arg(long, default_value_t = 0)]
        level: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Binary)]
        format: Format,
    },
    /// Prints a checkpoint summary as JSON.
    InspectCheckpoint { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Text,
}

fn load_config(c: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = RunConfig::load(c.config.as_deref(), &c.overrides)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn log_row(row: &TrainRow) {
    if row.iteration % 10 == 0 {
        info!(
            "iter {} level {:.2} episodes {} successes {} dense {:.3} sparse {:.3} kl {:.4}",
            row.iteration,
            row.mean_level,
            row.episodes,
            row.successes,
            row.mean_step_dense,
            row.mean_step_sparse,
            row.stats.mean_kl
        );
    }
}

fn run_train(args: &TrainArgs, stage: Stage, mut cfg: RunConfig) -> Result<(), HarnessError> {
    cfg.stage = stage;
    if let Some(n) = args.iters {
        cfg.iterations = n;
    }
    let resume = args.resume.as_deref().map(TrainingCheckpoint::load).transpose()?;
    let mut progress = log_row;
    let out = train(&cfg, &args.common.out, resume.as_ref(), Some(&mut progress))?;
    info!("wrote {}", out.checkpoint_path.display());
    println!("{}", out.checkpoint_path.display());
    Ok(())
}

fn gen_terrain(kind: TerrainKind, level: u8, seed: u64, out: &Path, format: Format) -> Result<(), HarnessError> {
    let pair = terrain::generate(&TerrainSpec::new(kind, level, seed)?)?;
    std::fs::create_dir_all(out)?;
    for (name, field) in [("task", &pair.task), ("flat", &pair.flat)] {
        let path = out.join(format!("{name}.hgt"));
        let w = BufWriter::new(File::create(&path)?);
        match format {
            Format::Binary => terrain::io::write_binary(field, w)?,
            Format::Text => terrain::io::write_text(field, w)?,
        }
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::TrainStage1(args) => {
            let cfg = load_config(&args.common)?;
            run_train(&args, Stage::One, cfg)
        }
        Command::TrainStage2 { train, init, from_scratch } => {
            let mut cfg = load_config(&train.common)?;
            if init.is_some() {
                cfg.init = init;
            }
            cfg.from_scratch |= from_scratch;
            run_train(&train, Stage::Two, cfg)
        }
        Command::Eval { common, checkpoint } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.eval.seeds = vec![seed];
            }
            let ck = TrainingCheckpoint::load(&checkpoint)?;
            let report = run_eval(&ck.agent, &cfg)?;
            write_report(&common.out, &report)?;
            for r in &report.rows {
                println!(
                    "{} level {}: r_succ {:.3} ± {:.3}  r_trav {:.3} ± {:.3}  e_foot {:.4} ± {:.4}",
                    r.kind, r.level, r.r_succ_mean, r.r_succ_std, r.r_trav_mean, r.r_trav_std, r.e_foot_mean, r.e_foot_std
                );
            }
            Ok(())
        }
        Command::Ablate { common, iters } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.ablation.seeds = vec![seed];
            }
            if let Some(n) = iters {
                cfg.ablation.stage1_iterations = n;
                cfg.ablation.stage2_iterations = n;
            }
            let ab = cfg.ablation.clone();
            let mut progress = |cell, seed, row: &TrainRow| {
                if row.iteration % 50 == 0 {
                    info!("{cell} seed {seed} stage {} iter {}", row.stage, row.iteration);
                }
            };
            let results = run_ablation_matrix(&cfg, &ab, &common.out, &mut progress)?;
            for r in &results {
                match &r.outcome {
                    Ok(metrics) => {
                        for m in metrics {
                            println!(
                                "{} seed {} {} level {}: r_succ {:.3} r_trav {:.3} e_foot {:.4}",
                                r.cell, r.seed, m.kind, m.level, m.metrics.r_succ, m.metrics.r_trav, m.metrics.e_foot
                            );
                        }
                    }
                    // recorded in ablation.csv; the remaining cells still ran
                    Err(e) => warn!("{} seed {} failed: {e}", r.cell, r.seed),
                }
            }
            Ok(())
        }
        Command::GenTerrain { kind, level, seed, out, format } => gen_terrain(kind, level, seed, &out, format),
        Command::InspectCheckpoint { path } => {
            let ck = TrainingCheckpoint::load(&path)?;
            let json = serde_json::to_string_pretty(&ck.summary())
                .map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
            println!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

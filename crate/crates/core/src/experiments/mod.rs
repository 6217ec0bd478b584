//! Run directories, seeded sweeps, st_gap model selection, Monte-Carlo
//! checks, dataset export and latent plots. The `dlab` binary is a thin
//! wrapper over this module.

mod config;
mod plot;
mod sweep;
mod verify;

pub use config::{DatasetChoice, RunConfig, CONFIG_KEYS};
pub use plot::{latent_svg, plot_grid, plot_latent, PLOT_POINTS_PER_AXIS};
pub use sweep::{
    axis_aligned, circles_sweep, correlate, read_sweep, run_sweep, select, sweep_threads, write_sweep, SweepRow,
    AXIS_RATIO, MIN_TOP_MI, SWEEP_FILE, SWEEP_HEADER,
};
pub use verify::{run_verify, verify_table, Prop, VerifyRow, ENDPOINT_TOL};

use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;

use crate::datasets::{write_external, Dataset, FactorValues};
use crate::metrics::{evaluate_with_table, EvalOptions, MetricReport, RepresentationTable};
use crate::models::{train, write_log_csv, LogRow, TrainedModel};
use crate::{rng_from_seed, Error, Result};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "log.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Files written by [`train_run`].
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub log: Vec<LogRow>,
    pub model: TrainedModel,
}

/// Trains and writes a checkpoint, its sidecar, the training log and the
/// normalized config into `config.out`.
pub fn train_run(config: &RunConfig) -> Result<RunArtifacts> {
    let mut config = config.clone();
    let dataset = config.dataset()?;
    let dir = config.out.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let out = train(&config.model, dataset.as_ref())?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    out.model.save(&checkpoint)?;
    let log_path = dir.join(LOG_FILE);
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_log_csv(std::io::BufWriter::new(file), &out.log).map_err(|e| Error::io(&log_path, e))?;
    let cfg_path = dir.join(CONFIG_FILE);
    std::fs::write(&cfg_path, config.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(RunArtifacts { dir, checkpoint, log: out.log, model: out.model })
}

/// The dataset recorded in the run directory of a checkpoint, if any.
pub fn run_dataset(checkpoint: &Path) -> Result<Option<DatasetChoice>> {
    let cfg_path = checkpoint.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE);
    if !cfg_path.exists() {
        return Ok(None);
    }
    Ok(Some(RunConfig::load(&cfg_path)?.dataset))
}

/// Metric report of a model, with the table the table-based scores used.
pub fn eval_model(
    model: &TrainedModel,
    dataset: &dyn Dataset,
    opts: &EvalOptions,
    seed: u64,
) -> Result<(MetricReport, RepresentationTable)> {
    evaluate_with_table(model, dataset, opts, &mut rng_from_seed(seed))
}

/// Factor settings for an export: the full grid when `count` equals its size,
/// distinct grid points when smaller, independent draws otherwise.
pub fn export_factors(dataset: &dyn Dataset, count: usize, seed: u64) -> Vec<FactorValues> {
    let mut rng = rng_from_seed(seed);
    match dataset.spec().enumerate() {
        Some(grid) if count == grid.len() => grid,
        Some(grid) if count < grid.len() => {
            let mut idx = sample_indices(&mut rng, grid.len(), count).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| grid[i].clone()).collect()
        }
        _ => (0..count).map(|_| dataset.sample_factors(&mut rng)).collect(),
    }
}

pub fn gen_data(dataset: &dyn Dataset, count: usize, path: &Path, seed: u64) -> Result<usize> {
    let factors = export_factors(dataset, count, seed);
    write_external(path, dataset, &factors)?;
    Ok(factors.len())
}

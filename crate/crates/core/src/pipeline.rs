//! The full synthetic experiment: generate, extract, fit the baseline, train
//! and apply the reference model, and evaluate both per lead time.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::climatology::{fit_climatology, ClimatologyTable};
use crate::cube::Cube;
use crate::dataset::{extract, read_manifest, ExtractConfig, Split};
use crate::error::Result;
use crate::evaluate::{evaluate, EvalReport, ScoreSource};
use crate::metrics::DEFAULT_BINS;
use crate::model::{predict_shards, train, PixelSet, TrainConfig};
use crate::synth::{generate_world, WorldConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    /// Leads to run; empty means the extraction defaults.
    pub leads: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadOutcome {
    pub model: EvalReport,
    pub climatology: EvalReport,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub leads: BTreeMap<usize, LeadOutcome>,
    pub elapsed: Duration,
}

pub fn run_pipeline(cfg: &PipelineConfig, workdir: &Path) -> Result<PipelineOutcome> {
    let start = Instant::now();
    let cube_dir = workdir.join("cube.zarr");
    generate_world(&cfg.world, &cube_dir)?;
    let cube = Cube::open(&cube_dir)?;
    let mut ecfg = ExtractConfig::for_cube(&cube)?;
    if !cfg.leads.is_empty() {
        ecfg.leads = cfg.leads.clone();
    }
    let data_dir = workdir.join("dataset");
    let report = extract(&cube, &ecfg, &data_dir)?;
    let table = fit_climatology(&cube, &ecfg.target, ecfg.splits.years(Split::Train))?;
    table.save(&workdir.join("climatology.zarr"))?;
    let table = ClimatologyTable::load(&workdir.join("climatology.zarr"))?;

    let mut leads = BTreeMap::new();
    for (&lead, dir) in &report.dirs {
        let manifest = read_manifest(dir)?;
        let c = manifest.channels.len();
        let train_set = PixelSet::from_shards(c, &manifest.shard_paths(dir, Split::Train))?;
        let val_set = PixelSet::from_shards(c, &manifest.shard_paths(dir, Split::Val))?;
        let (params, log) = train(&train_set, &val_set, &cfg.train)?;
        drop((train_set, val_set));
        let preds_dir = workdir.join("preds").join(format!("lead_{lead}"));
        for split in [Split::Val, Split::Test] {
            predict_shards(&params, &manifest.shard_paths(dir, split), &preds_dir)?;
        }
        let (model, _) = evaluate(dir, ScoreSource::Predictions(&preds_dir), Split::Test, DEFAULT_BINS)?;
        let (climatology, _) = evaluate(dir, ScoreSource::Climatology(&table), Split::Test, DEFAULT_BINS)?;
        leads.insert(lead, LeadOutcome { model, climatology, best_epoch: log.best_epoch });
    }
    Ok(PipelineOutcome { leads, elapsed: start.elapsed() })
}

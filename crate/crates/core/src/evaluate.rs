//! Scores a dataset split with model predictions or the climatology baseline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::climatology::{climatology_score, predict_climatology, ClimatologyTable};
use crate::dataset::{read_manifest, DatasetManifest, PredictionBatch, SampleBatch, Split};
use crate::error::{Error, Result};
use crate::metrics::{MetricAccumulator, MetricsReport};

/// Where scores come from.
#[derive(Clone, Copy, Debug)]
pub enum ScoreSource<'a> {
    /// Directory of prediction shards named like the dataset shards.
    Predictions(&'a Path),
    Climatology(&'a ClimatologyTable),
}

impl ScoreSource<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Predictions(_) => "predictions",
            Self::Climatology(_) => "climatology",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: String,
    pub split: Split,
    pub lead_steps: usize,
    /// Split whose scores chose the best-F1 threshold.
    pub threshold_selected_on: Split,
    pub metrics: MetricsReport,
}

/// Accumulates one split of the dataset in `dataset_dir`.
pub fn accumulate_split(
    dataset_dir: &Path,
    manifest: &DatasetManifest,
    source: ScoreSource<'_>,
    split: Split,
    bins: usize,
) -> Result<MetricAccumulator> {
    let mut acc = MetricAccumulator::new(bins);
    for path in manifest.shard_paths(dataset_dir, split) {
        let batch = SampleBatch::read(&path)?;
        let scores = scores_for(&batch, &path, manifest, source)?;
        acc.update(&scores, &batch.targets, &batch.valid)?;
    }
    Ok(acc)
}

fn scores_for(
    batch: &SampleBatch,
    path: &Path,
    manifest: &DatasetManifest,
    source: ScoreSource<'_>,
) -> Result<Vec<f32>> {
    match source {
        ScoreSource::Predictions(dir) => {
            let pred_path = dir.join(path.file_name().unwrap_or_default());
            let preds = PredictionBatch::read(&pred_path)?;
            if preds.meta != batch.meta || preds.patch != batch.patch {
                return Err(Error::Shape(format!(
                    "{} does not describe the samples of {}",
                    pred_path.display(),
                    path.display()
                )));
            }
            Ok(preds.preds)
        }
        ScoreSource::Climatology(table) => {
            if table.grid != manifest.grid {
                return Err(Error::Shape("climatology grid differs from the dataset grid".into()));
            }
            let mut out = Vec::with_capacity(batch.targets.len());
            for m in &batch.meta {
                let patch = predict_climatology(table, &manifest.axis, m.t_target(), m.tile(), batch.patch)?;
                out.extend(patch.into_iter().map(climatology_score));
            }
            Ok(out)
        }
    }
}

fn has_source_for(dataset_dir: &Path, manifest: &DatasetManifest, source: ScoreSource<'_>, split: Split) -> bool {
    let paths = manifest.shard_paths(dataset_dir, split);
    match source {
        ScoreSource::Predictions(dir) => {
            !paths.is_empty() && paths.iter().all(|p| dir.join(p.file_name().unwrap_or_default()).exists())
        }
        ScoreSource::Climatology(_) => !paths.is_empty(),
    }
}

/// Evaluates `split` of one lead-time dataset. The best-F1 threshold is
/// chosen on the validation split when scores for it exist, else on
/// `split` itself. Returns the report and the split's accumulator.
pub fn evaluate(
    dataset_dir: &Path,
    source: ScoreSource<'_>,
    split: Split,
    bins: usize,
) -> Result<(EvalReport, MetricAccumulator)> {
    let manifest = read_manifest(dataset_dir)?;
    let acc = accumulate_split(dataset_dir, &manifest, source, split, bins)?;
    let selection = if split != Split::Val && has_source_for(dataset_dir, &manifest, source, Split::Val) {
        Some(accumulate_split(dataset_dir, &manifest, source, Split::Val, bins)?)
    } else {
        None
    };
    let metrics = acc.finalize(selection.as_ref())?;
    let report = EvalReport {
        source: source.label().into(),
        split,
        lead_steps: manifest.lead_steps,
        threshold_selected_on: if selection.is_some() { Split::Val } else { split },
        metrics,
    };
    Ok((report, acc))
}

/// Lead-time dataset directories (`lead_<L>`) under `root`, by lead.
pub fn lead_dirs(root: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    let entries =
        std::fs::read_dir(root).map_err(|e| Error::Io { context: format!("listing {}", root.display()), source: e })?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(lead) = name.strip_prefix("lead_").and_then(|s| s.parse().ok()) {
            out.push((lead, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

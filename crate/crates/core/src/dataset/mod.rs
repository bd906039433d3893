//! Supervised patch dataset: binarized targets at `t + lead`, inputs at `t`,
//! positive-patch filtering, a temporal split keyed on the target date,
//! train-only normalization and shard export.

mod batch;
mod extract;
pub mod shard;

pub use batch::{PredictionBatch, SampleBatch, SampleMeta};
pub use extract::{
    export_shards, extract, read_manifest, DatasetManifest, ExtractConfig, ExtractReport, SplitEntry, MANIFEST_FILE,
};
pub use shard::{validate_shard, Shard, ShardKind};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TileOrigin;
use crate::time::TimeAxis;

pub const DEFAULT_LEADS: [usize; 4] = [1, 2, 4, 8];
pub const DEFAULT_SHARD_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

/// Year sets of the temporal split. Samples are assigned by the year of
/// their target period.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_years: Vec<i32>,
    pub val_years: Vec<i32>,
    pub test_years: Vec<i32>,
}

impl SplitSpec {
    pub fn new(train_years: Vec<i32>, val_years: Vec<i32>, test_years: Vec<i32>) -> Result<Self> {
        let spec = Self { train_years, val_years, test_years };
        let mut seen = std::collections::HashSet::new();
        for y in spec.train_years.iter().chain(&spec.val_years).chain(&spec.test_years) {
            if !seen.insert(*y) {
                return Err(Error::Config(format!("year {y} assigned to more than one split")));
            }
        }
        Ok(spec)
    }

    /// 2002–2017 train, 2018 validation, 2019 test.
    pub fn reference() -> Self {
        Self::new((2002..=2017).collect(), vec![2018], vec![2019]).expect("disjoint years")
    }

    /// Proportional split for an axis: the first year only feeds inputs, the
    /// last year is test, the one before validation, the rest training.
    pub fn for_axis(axis: &TimeAxis) -> Result<Self> {
        let (first, last) = (axis.start_year(), axis.end_year());
        if last - first < 3 {
            return Err(Error::Config(format!(
                "axis {first}..={last} too short for train/val/test split (need 4 years)"
            )));
        }
        Self::new((first + 1..=last - 2).collect(), vec![last - 1], vec![last])
    }

    pub fn years(&self, split: Split) -> &[i32] {
        match split {
            Split::Train => &self.train_years,
            Split::Val => &self.val_years,
            Split::Test => &self.test_years,
        }
    }

    pub fn split_of_year(&self, year: i32) -> Option<Split> {
        Split::ALL.into_iter().find(|s| self.years(*s).contains(&year))
    }
}

/// Split of a sample whose target is at `t_target`, by the year of the
/// target period's start date. `None` when the year is in no split.
pub fn assign_split(t_target: usize, spec: &SplitSpec, axis: &TimeAxis) -> Option<Split> {
    spec.split_of_year(axis.year_of(t_target).ok()?)
}

/// Input step paired with a target step, or `None` on underflow. Leads are
/// counted in steps, so pairs may straddle a year boundary (where the short
/// final period makes the day distance slightly less than `8 × lead`).
pub fn pair_lead(t_target: usize, lead_steps: usize) -> Option<usize> {
    t_target.checked_sub(lead_steps)
}

/// Binary presence mask and validity mask for burned-area values:
/// `> 0` burned, `0` not burned, NaN not burned and invalid.
pub fn binarize_target(burned: &[f32]) -> (Vec<u8>, Vec<u8>) {
    burned.iter().map(|&v| if v.is_nan() { (0, 0) } else { (u8::from(v > 0.0), 1) }).unzip()
}

/// One input/target pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSample {
    /// `C × P × P`, normalized.
    pub inputs: Vec<f32>,
    /// `P × P` presence mask.
    pub target: Vec<u8>,
    /// `P × P`, 0 for pad or no-data target cells.
    pub valid: Vec<u8>,
    pub t_input: usize,
    pub lead_steps: usize,
    pub tile_origin: TileOrigin,
    pub split: Split,
}

impl PatchSample {
    pub fn t_target(&self) -> usize {
        self.t_input + self.lead_steps
    }

    pub fn has_positive(&self) -> bool {
        self.target.iter().any(|&t| t != 0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    /// Candidate (target step, tile) pairs in the split.
    pub total: usize,
    /// Candidates whose target has at least one burned pixel.
    pub retained: usize,
    /// Retained candidates dropped because `t_target - lead < 0`.
    #[serde(default)]
    pub underflow: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub splits: BTreeMap<Split, SplitCounts>,
}

/// Keeps samples whose target contains at least one burned pixel.
pub fn filter_patches(samples: Vec<PatchSample>) -> (Vec<PatchSample>, FilterReport) {
    let mut report = FilterReport::default();
    let kept = samples
        .into_iter()
        .filter(|s| {
            let c = report.splits.entry(s.split).or_default();
            c.total += 1;
            let keep = s.has_positive();
            c.retained += usize::from(keep);
            keep
        })
        .collect();
    (kept, report)
}

/// Per-channel z-score parameters fitted on training pixels only.
///
/// The mean is taken over finite values; missing inputs are imputed with
/// that mean, so the standard deviation is taken over every valid pixel with
/// imputed pixels contributing zero deviation. Normalized training data thus
/// has mean 0 and standard deviation 1 over valid pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    #[inline]
    pub fn apply(&self, channel: usize, v: f32) -> f32 {
        if v.is_nan() {
            0.0
        } else {
            ((v as f64 - self.mean[channel]) / self.std[channel]) as f32
        }
    }
}

/// Streaming fit of [`NormalizationStats`].
#[derive(Clone, Debug)]
pub struct StatsAccumulator {
    shift: Vec<Option<f64>>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n_finite: Vec<u64>,
    n_valid: u64,
}

impl StatsAccumulator {
    pub fn new(n_channels: usize) -> Self {
        Self {
            shift: vec![None; n_channels],
            sum: vec![0.0; n_channels],
            sum_sq: vec![0.0; n_channels],
            n_finite: vec![0; n_channels],
            n_valid: 0,
        }
    }

    /// Adds one valid pixel with its `C` channel values.
    pub fn push(&mut self, values: impl IntoIterator<Item = f32>) {
        self.n_valid += 1;
        for (k, v) in values.into_iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            let v = v as f64;
            let shift = *self.shift[k].get_or_insert(v);
            let d = v - shift;
            self.sum[k] += d;
            self.sum_sq[k] += d * d;
            self.n_finite[k] += 1;
        }
    }

    pub fn finish(&self, channels: &[String]) -> Result<NormalizationStats> {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (k, name) in channels.iter().enumerate() {
            let n = self.n_finite[k] as f64;
            let var =
                if n > 0.0 { (self.sum_sq[k] - self.sum[k] * self.sum[k] / n) / self.n_valid as f64 } else { 0.0 };
            if !(var > 0.0) {
                return Err(Error::Domain(format!("channel `{name}` is degenerate on the training split (std = 0)")));
            }
            mean.push(self.shift[k].unwrap_or(0.0) + self.sum[k] / n);
            std.push(var.sqrt());
        }
        Ok(NormalizationStats { channels: channels.to_vec(), mean, std })
    }
}

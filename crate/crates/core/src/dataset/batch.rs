use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TileOrigin;

use super::shard::{validate_shard, ArrayData, Shard, ShardKind};
use super::PatchSample;

/// Per-sample metadata stored in the `meta` array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleMeta {
    pub t_input: usize,
    pub lead_steps: usize,
    pub row0: usize,
    pub col0: usize,
}

impl SampleMeta {
    pub fn t_target(&self) -> usize {
        self.t_input + self.lead_steps
    }

    pub fn tile(&self) -> TileOrigin {
        TileOrigin { row: self.row0, col: self.col0 }
    }

    fn to_i32(self) -> [i32; 4] {
        [self.t_input, self.lead_steps, self.row0, self.col0].map(|v| v as i32)
    }

    fn from_i32(v: &[i32]) -> Result<Self> {
        if v.iter().any(|&x| x < 0) {
            return Err(Error::Shape(format!("negative sample metadata {v:?}")));
        }
        Ok(Self { t_input: v[0] as usize, lead_steps: v[1] as usize, row0: v[2] as usize, col0: v[3] as usize })
    }
}

fn meta_array(meta: &[SampleMeta]) -> ArrayData {
    ArrayData::I32(meta.iter().flat_map(|m| m.to_i32()).collect())
}

fn meta_from(shard: &Shard) -> Result<Vec<SampleMeta>> {
    match shard.get("meta") {
        Some((_, ArrayData::I32(v))) => v.chunks_exact(4).map(SampleMeta::from_i32).collect(),
        _ => Err(Error::Shape("shard has no i32 `meta` array".into())),
    }
}

fn f32_array<'a>(shard: &'a Shard, name: &str) -> Result<(&'a [usize], &'a [f32])> {
    match shard.get(name) {
        Some((shape, ArrayData::F32(v))) => Ok((shape, v)),
        _ => Err(Error::Shape(format!("shard has no f32 `{name}` array"))),
    }
}

fn u8_array(shard: &Shard, name: &str) -> Result<Vec<u8>> {
    match shard.get(name) {
        Some((_, ArrayData::U8(v))) => Ok(v.clone()),
        _ => Err(Error::Shape(format!("shard has no u8 `{name}` array"))),
    }
}

/// A batch of dataset samples, as stored in one shard.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub channels: usize,
    pub patch: usize,
    /// `[N, C, P, P]`
    pub inputs: Vec<f32>,
    /// `[N, P, P]`
    pub targets: Vec<u8>,
    /// `[N, P, P]`
    pub valid: Vec<u8>,
    pub meta: Vec<SampleMeta>,
}

impl SampleBatch {
    pub fn new(channels: usize, patch: usize) -> Self {
        Self { channels, patch, inputs: Vec::new(), targets: Vec::new(), valid: Vec::new(), meta: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.patch * self.patch
    }

    pub fn push(&mut self, s: &PatchSample) -> Result<()> {
        let plane = self.plane();
        if s.inputs.len() != self.channels * plane || s.target.len() != plane || s.valid.len() != plane {
            return Err(Error::Shape(format!("sample does not fit a {}x{p}x{p} batch", self.channels, p = self.patch)));
        }
        self.inputs.extend_from_slice(&s.inputs);
        self.targets.extend_from_slice(&s.target);
        self.valid.extend_from_slice(&s.valid);
        self.meta.push(SampleMeta {
            t_input: s.t_input,
            lead_steps: s.lead_steps,
            row0: s.tile_origin.row,
            col0: s.tile_origin.col,
        });
        Ok(())
    }

    /// Channel `k` of sample `i`.
    pub fn input_plane(&self, i: usize, k: usize) -> &[f32] {
        let plane = self.plane();
        let start = (i * self.channels + k) * plane;
        &self.inputs[start..start + plane]
    }

    pub fn target_plane(&self, i: usize) -> &[u8] {
        &self.targets[i * self.plane()..(i + 1) * self.plane()]
    }

    pub fn valid_plane(&self, i: usize) -> &[u8] {
        &self.valid[i * self.plane()..(i + 1) * self.plane()]
    }

    pub fn to_shard(&self) -> Result<Shard> {
        let (n, c, p) = (self.len(), self.channels, self.patch);
        let mut shard = Shard::new();
        shard.push("inputs", vec![n, c, p, p], ArrayData::F32(self.inputs.clone()))?;
        shard.push("targets", vec![n, p, p], ArrayData::U8(self.targets.clone()))?;
        shard.push("valid", vec![n, p, p], ArrayData::U8(self.valid.clone()))?;
        shard.push("meta", vec![n, 4], meta_array(&self.meta))?;
        Ok(shard)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_shard()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        validate_shard(path, ShardKind::Dataset)?;
        let shard = Shard::read(path)?;
        let (shape, inputs) = f32_array(&shard, "inputs")?;
        Ok(Self {
            channels: shape[1],
            patch: shape[2],
            inputs: inputs.to_vec(),
            targets: u8_array(&shard, "targets")?,
            valid: u8_array(&shard, "valid")?,
            meta: meta_from(&shard)?,
        })
    }
}

/// Per-pixel probabilities for a batch of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBatch {
    pub patch: usize,
    /// `[N, P, P]`
    pub preds: Vec<f32>,
    pub meta: Vec<SampleMeta>,
}

impl PredictionBatch {
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn plane(&self, i: usize) -> &[f32] {
        let n = self.patch * self.patch;
        &self.preds[i * n..(i + 1) * n]
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let (n, p) = (self.len(), self.patch);
        let mut shard = Shard::new();
        shard.push("preds", vec![n, p, p], ArrayData::F32(self.preds.clone()))?;
        shard.push("meta", vec![n, 4], meta_array(&self.meta))?;
        shard.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        validate_shard(path, ShardKind::Predictions)?;
        let shard = Shard::read(path)?;
        let (shape, preds) = f32_array(&shard, "preds")?;
        Ok(Self { patch: shape[1], preds: preds.to_vec(), meta: meta_from(&shard)? })
    }
}

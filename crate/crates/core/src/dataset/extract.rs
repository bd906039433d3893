use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cube::Cube;
use crate::error::{Error, IoContext, Result};
use crate::grid::{tile_patches, GeoGrid, PatchGridSpec, TileOrigin};
use crate::ingest::{DEFAULT_INPUT_CHANNELS, TARGET_VARIABLE};
use crate::store::{to_json_document, write_atomic};
use crate::synth::PATCH_PX_ATTR;
use crate::time::TimeAxis;

use super::batch::SampleBatch;
use super::{
    assign_split, binarize_target, pair_lead, FilterReport, NormalizationStats, PatchSample, Split, SplitCounts,
    SplitSpec, StatsAccumulator, DEFAULT_LEADS, DEFAULT_SHARD_SIZE,
};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "firecube-dataset/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub leads: Vec<usize>,
    pub splits: SplitSpec,
    pub channels: Vec<String>,
    pub target: String,
    pub patch_px: usize,
    pub shard_size: usize,
    /// Mark pad and no-data target cells valid as well.
    pub include_invalid: bool,
}

impl ExtractConfig {
    /// Defaults for a cube: leads 1, 2, 4, 8; the reference split years when
    /// the axis covers them, otherwise a proportional split; the patch size
    /// recorded in the cube (128 if none).
    pub fn for_cube(cube: &Cube) -> Result<Self> {
        let axis = cube.axis();
        let splits = if axis.start_year() <= 2001 && axis.end_year() >= 2019 {
            SplitSpec::reference()
        } else {
            SplitSpec::for_axis(axis)?
        };
        let patch_px = cube
            .manifest()
            .attributes
            .get(PATCH_PX_ATTR)
            .and_then(|v| v.as_u64())
            .map_or(PatchGridSpec::default().patch_px, |v| v as usize);
        Ok(Self {
            leads: DEFAULT_LEADS.to_vec(),
            splits,
            channels: DEFAULT_INPUT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            target: TARGET_VARIABLE.into(),
            patch_px,
            shard_size: DEFAULT_SHARD_SIZE,
            include_invalid: false,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    /// Shard file names relative to the manifest directory.
    pub shards: Vec<String>,
    pub n_samples: usize,
}

/// Describes one lead-time dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub channels: Vec<String>,
    pub target: String,
    pub lead_steps: usize,
    pub patch_px: usize,
    pub shard_size: usize,
    pub include_invalid: bool,
    pub grid: GeoGrid,
    pub axis: TimeAxis,
    pub split_spec: SplitSpec,
    pub normalization: NormalizationStats,
    pub splits: BTreeMap<Split, SplitEntry>,
    pub filter: FilterReport,
}

impl DatasetManifest {
    pub fn shard_paths(&self, dir: &Path, split: Split) -> Vec<PathBuf> {
        self.splits.get(&split).map(|e| e.shards.iter().map(|s| dir.join(s)).collect()).unwrap_or_default()
    }

    pub fn n_samples(&self, split: Split) -> usize {
        self.splits.get(&split).map_or(0, |e| e.n_samples)
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).io_context(|| format!("reading {}", path.display()))?;
    let m: DatasetManifest = serde_json::from_slice(&bytes)?;
    if m.format != FORMAT {
        return Err(Error::Domain(format!("{}: unknown dataset format `{}`", path.display(), m.format)));
    }
    Ok(m)
}

struct ShardWriter<'a> {
    dir: &'a Path,
    split: Split,
    batch: SampleBatch,
    entry: SplitEntry,
    shard_size: usize,
}

impl<'a> ShardWriter<'a> {
    fn push(&mut self, s: &PatchSample) -> Result<()> {
        self.batch.push(s)?;
        if self.batch.len() == self.shard_size {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.batch.is_empty() {
            return Ok(());
        }
        let name = format!("{}_{:05}.fcs", self.split, self.entry.shards.len());
        self.batch.write(&self.dir.join(&name))?;
        self.entry.n_samples += self.batch.len();
        self.entry.shards.push(name);
        self.batch = SampleBatch::new(self.batch.channels, self.batch.patch);
        Ok(())
    }
}

/// Writes normalized samples as shards (split by `sample.split`, in
/// iteration order) and then the manifest, whose `splits` are filled in.
pub fn export_shards<I>(samples: I, manifest: &mut DatasetManifest, out_dir: &Path) -> Result<()>
where
    I: IntoIterator<Item = Result<PatchSample>>,
{
    fs::create_dir_all(out_dir).io_context(|| format!("creating {}", out_dir.display()))?;
    let c = manifest.channels.len();
    let mut writers: BTreeMap<Split, ShardWriter> = Split::ALL
        .into_iter()
        .map(|split| {
            let w = ShardWriter {
                dir: out_dir,
                split,
                batch: SampleBatch::new(c, manifest.patch_px),
                entry: SplitEntry::default(),
                shard_size: manifest.shard_size.max(1),
            };
            (split, w)
        })
        .collect();
    for s in samples {
        let s = s?;
        writers.get_mut(&s.split).expect("all splits").push(&s)?;
    }
    manifest.splits.clear();
    for (split, mut w) in writers {
        w.flush()?;
        manifest.splits.insert(split, w.entry);
    }
    write_atomic(&out_dir.join(MANIFEST_FILE), &to_json_document(manifest)?)
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    t_target: usize,
    tile: TileOrigin,
    split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    /// Positive-patch filtering over all candidate targets (lead independent).
    pub filter: FilterReport,
    /// Per-lead sample counts per split.
    pub leads: BTreeMap<usize, BTreeMap<Split, SplitCounts>>,
    pub dirs: BTreeMap<usize, PathBuf>,
}

/// Per-step cube reads shared by sample construction.
struct Fields<'a> {
    cube: &'a Cube,
    cfg: &'a ExtractConfig,
    grid: GeoGrid,
}

impl Fields<'_> {
    fn inputs(&self, step: usize) -> Result<Vec<Vec<f32>>> {
        self.cfg.channels.iter().map(|ch| self.cube.read_field(ch, step)).collect()
    }

    fn target(&self, step: usize) -> Result<Vec<f32>> {
        self.cube.read_field(&self.cfg.target, step)
    }

    fn in_grid(&self, r: usize, c: usize) -> bool {
        r < self.grid.n_lat && c < self.grid.n_lon
    }

    /// Target mask and validity mask of one tile.
    fn target_patch(&self, burned: &[f32], tile: TileOrigin) -> (Vec<u8>, Vec<u8>) {
        let p = self.cfg.patch_px;
        let mut target = vec![0u8; p * p];
        let mut valid = vec![u8::from(self.cfg.include_invalid); p * p];
        for i in 0..p {
            for j in 0..p {
                let (r, c) = (tile.row + i, tile.col + j);
                if self.in_grid(r, c) {
                    let (t, v) = binarize_target(&burned[r * self.grid.n_lon + c..][..1]);
                    target[i * p + j] = t[0];
                    valid[i * p + j] |= v[0];
                }
            }
        }
        (target, valid)
    }

    fn sample(
        &self,
        inputs: &[Vec<f32>],
        burned: &[f32],
        cand: &Candidate,
        lead: usize,
        stats: &NormalizationStats,
    ) -> PatchSample {
        let p = self.cfg.patch_px;
        let (target, valid) = self.target_patch(burned, cand.tile);
        let mut x = vec![0f32; inputs.len() * p * p];
        for (k, field) in inputs.iter().enumerate() {
            for i in 0..p {
                for j in 0..p {
                    let (r, c) = (cand.tile.row + i, cand.tile.col + j);
                    let v = if self.in_grid(r, c) { field[r * self.grid.n_lon + c] } else { f32::NAN };
                    x[(k * p + i) * p + j] = stats.apply(k, v);
                }
            }
        }
        PatchSample {
            inputs: x,
            target,
            valid,
            t_input: cand.t_target - lead,
            lead_steps: lead,
            tile_origin: cand.tile,
            split: cand.split,
        }
    }
}

/// Builds one dataset directory per lead under `out_dir` (`lead_<L>/`).
///
/// Candidates are every (target step, tile) whose target year belongs to a
/// split; those with at least one burned pixel are retained, so all leads
/// share the same targets apart from underflow at the start of the axis.
pub fn extract(cube: &Cube, cfg: &ExtractConfig, out_dir: &Path) -> Result<ExtractReport> {
    if cfg.leads.is_empty() || cfg.leads.contains(&0) {
        return Err(Error::Config("leads must be positive".into()));
    }
    for ch in cfg.channels.iter().chain([&cfg.target]) {
        cube.variable(ch)?;
    }
    let grid = *cube.grid();
    let axis = cube.axis();
    let tiles = tile_patches(&grid, &PatchGridSpec::new(cfg.patch_px))?;
    let fields = Fields { cube, cfg, grid };

    let mut report = ExtractReport::default();
    let mut retained = Vec::new();
    for t_target in 0..axis.len() {
        let Some(split) = assign_split(t_target, &cfg.splits, axis) else {
            continue;
        };
        let burned = fields.target(t_target)?;
        for &tile in &tiles {
            let counts = report.filter.splits.entry(split).or_default();
            counts.total += 1;
            let (target, _) = fields.target_patch(&burned, tile);
            if target.iter().any(|&t| t != 0) {
                counts.retained += 1;
                retained.push(Candidate { t_target, tile, split });
            }
        }
    }

    for &lead in &cfg.leads {
        let mut counts: BTreeMap<Split, SplitCounts> = BTreeMap::new();
        for split in Split::ALL {
            let c = report.filter.splits.get(&split).copied().unwrap_or_default();
            counts.insert(split, SplitCounts { underflow: 0, ..c });
        }
        let kept: Vec<Candidate> = retained
            .iter()
            .filter(|c| {
                let ok = pair_lead(c.t_target, lead).is_some();
                if !ok {
                    counts.get_mut(&c.split).unwrap().underflow += 1;
                }
                ok
            })
            .copied()
            .collect();

        let stats = fit_stats(&fields, &kept, lead)?;
        let mut manifest = DatasetManifest {
            format: FORMAT.into(),
            channels: cfg.channels.clone(),
            target: cfg.target.clone(),
            lead_steps: lead,
            patch_px: cfg.patch_px,
            shard_size: cfg.shard_size,
            include_invalid: cfg.include_invalid,
            grid,
            axis: axis.clone(),
            split_spec: cfg.splits.clone(),
            normalization: stats.clone(),
            splits: BTreeMap::new(),
            filter: FilterReport { splits: counts.clone() },
        };
        let dir = out_dir.join(format!("lead_{lead}"));
        let samples = SampleStream::new(&fields, &kept, lead, &stats);
        export_shards(samples, &mut manifest, &dir)?;
        report.leads.insert(lead, counts);
        report.dirs.insert(lead, dir);
    }
    write_atomic(&out_dir.join("extract_report.json"), &to_json_document(&report)?)?;
    Ok(report)
}

/// Fits normalization on the training candidates' input steps.
fn fit_stats(fields: &Fields<'_>, kept: &[Candidate], lead: usize) -> Result<NormalizationStats> {
    let mut acc = StatsAccumulator::new(fields.cfg.channels.len());
    let p = fields.cfg.patch_px;
    let n_lon = fields.grid.n_lon;
    for group in
        kept.iter().filter(|c| c.split == Split::Train).collect::<Vec<_>>().chunk_by(|a, b| a.t_target == b.t_target)
    {
        let t_target = group[0].t_target;
        let inputs = fields.inputs(t_target - lead)?;
        let burned = fields.target(t_target)?;
        for cand in group {
            let (_, valid) = fields.target_patch(&burned, cand.tile);
            for i in 0..p {
                for j in 0..p {
                    if valid[i * p + j] == 0 {
                        continue;
                    }
                    let (r, c) = (cand.tile.row + i, cand.tile.col + j);
                    let in_grid = fields.in_grid(r, c);
                    acc.push(inputs.iter().map(|f| if in_grid { f[r * n_lon + c] } else { f32::NAN }));
                }
            }
        }
    }
    acc.finish(&fields.cfg.channels)
}

/// Lazily built samples in (target step, tile) order, one cube read per
/// target step.
struct SampleStream<'a> {
    fields: &'a Fields<'a>,
    kept: &'a [Candidate],
    lead: usize,
    stats: &'a NormalizationStats,
    pos: usize,
    cached: Option<(usize, Vec<Vec<f32>>, Vec<f32>)>,
}

impl<'a> SampleStream<'a> {
    fn new(fields: &'a Fields<'a>, kept: &'a [Candidate], lead: usize, stats: &'a NormalizationStats) -> Self {
        Self { fields, kept, lead, stats, pos: 0, cached: None }
    }

    fn load(&mut self, t_target: usize) -> Result<()> {
        if self.cached.as_ref().map(|c| c.0) != Some(t_target) {
            let inputs = self.fields.inputs(t_target - self.lead)?;
            let burned = self.fields.target(t_target)?;
            self.cached = Some((t_target, inputs, burned));
        }
        Ok(())
    }
}

impl Iterator for SampleStream<'_> {
    type Item = Result<PatchSample>;

    fn next(&mut self) -> Option<Self::Item> {
        let cand = *self.kept.get(self.pos)?;
        self.pos += 1;
        if let Err(e) = self.load(cand.t_target) {
            return Some(Err(e));
        }
        let (_, inputs, burned) = self.cached.as_ref().unwrap();
        Some(Ok(self.fields.sample(inputs, burned, &cand, self.lead, self.stats)))
    }
}

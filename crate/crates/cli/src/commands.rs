use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use firecube_core::climatology::{fit_climatology, ClimatologyTable, CLIMATOLOGY_ARRAY};
use firecube_core::cube::{Cube, CubeManifest};
use firecube_core::dataset::{extract, read_manifest, ExtractConfig, PredictionBatch, Split, SplitSpec};
use firecube_core::evaluate::{evaluate, lead_dirs, ScoreSource};
use firecube_core::ingest::{build_cube, registry_lookup, InputSource, TARGET_VARIABLE};
use firecube_core::model::{fingerprint, predict_shards, train, ModelParams, PixelSet, TrainConfig};
use firecube_core::render::{mosaic_predictions, render_image, render_pair, write_png, RenderSpec, Scale};
use firecube_core::store::{to_json_document, write_atomic, CubeStore};
use firecube_core::synth::{generate_world, WorldConfig};
use firecube_core::{GeoGrid, TimeAxis};

use crate::{Cli, Command, RenderInput};

/// One line of JSON describing a failed run.
pub fn error_json(e: &anyhow::Error) -> String {
    let kind = e.chain().find_map(|c| c.downcast_ref::<firecube_core::Error>()).map_or("error", |c| c.kind());
    let failures = e.downcast_ref::<PartialFailure>().map(|p| p.0.clone()).unwrap_or_default();
    json!({
        "error": kind,
        "message": message(e),
        "failures": failures,
    })
    .to_string()
}

/// The error chain joined with `: `, skipping causes already quoted by
/// the message above them.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain().map(ToString::to_string) {
        if out.ends_with(&cause) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&cause);
    }
    out
}

/// Some requested outputs were not written.
#[derive(Debug)]
struct PartialFailure(Vec<String>);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} output(s) failed: {}", self.0.len(), self.0.join(", "))
    }
}

impl std::error::Error for PartialFailure {}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_atomic(path, &to_json_document(value)?)?;
    Ok(())
}

/// `<path>.<suffix>` next to an output file or directory.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Records the global flags, the subcommand's flags and the derived
/// settings actually used.
fn write_resolved<T: Serialize>(cli: &Cli, path: &Path, resolved: &T) -> Result<()> {
    let doc = json!({
        "seed": cli.seed,
        "workers": cli.workers,
        "store": cli.store,
        "manifest": cli.manifest,
        "invocation": &cli.command,
        "resolved": resolved,
    });
    write_json(path, &doc)
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global().context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Build => build(cli),
        Command::Synth(a) => synth(cli, a),
        Command::Extract(a) => extract_cmd(cli, a),
        Command::Climatology(a) => climatology(cli, a),
        Command::TrainRef(a) => train_ref(cli, a),
        Command::PredictRef(a) => predict_ref(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Render(a) => render(cli, a),
    }
}

/// The `--manifest` document of `build`. Relative input paths are resolved
/// against the manifest's directory.
#[derive(Debug, Serialize, Deserialize)]
struct BuildManifest {
    start_year: i32,
    end_year: i32,
    resolution_deg: f64,
    variables: Vec<String>,
    inputs: BTreeMap<String, InputSource>,
}

fn build(cli: &Cli) -> Result<()> {
    let path = cli.manifest.as_ref().ok_or_else(|| anyhow!("build needs --manifest"))?;
    let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut bm: BuildManifest = serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for src in bm.inputs.values_mut() {
        let (InputSource::Raster { path } | InputSource::Events { path } | InputSource::Series { path }) = src;
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    let variables = bm
        .variables
        .iter()
        .map(|n| registry_lookup(n).ok_or_else(|| anyhow!("unknown variable `{n}`")))
        .collect::<Result<Vec<_>>>()?;
    let manifest = CubeManifest {
        variables,
        axis: TimeAxis::new(bm.start_year, bm.end_year)?,
        grid: GeoGrid::global(bm.resolution_deg)?,
        attributes: Default::default(),
    };
    let report = build_cube(&manifest, &bm.inputs, &cli.store)?;
    write_json(&sibling(&cli.store, "build.json"), &report)?;
    write_resolved(cli, &sibling(&cli.store, "build.config.json"), &bm)?;
    let failures: Vec<String> = report.failures().into_iter().map(String::from).collect();
    if !failures.is_empty() {
        return Err(PartialFailure(failures).into());
    }
    Ok(())
}

fn synth(cli: &Cli, a: &crate::SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => WorldConfig::default(),
    };
    cfg.seed = cli.seed;
    if let Some(v) = a.resolution {
        cfg.resolution_deg = v;
    }
    if let Some(v) = a.start_year {
        cfg.start_year = v;
    }
    if let Some(v) = a.years {
        cfg.years = v;
    }
    if let Some(v) = a.patch_px {
        cfg.patch_px = v;
    }
    if let Some(v) = a.neighborhood_weight {
        cfg.neighborhood_weight = v;
    }
    if let Some(v) = a.positive_rate {
        cfg.target_positive_rate = v;
    }
    cfg.validate()?;
    if cli.store.exists() {
        fs::remove_dir_all(&cli.store).with_context(|| format!("replacing {}", cli.store.display()))?;
    }
    let summary = generate_world(&cfg, &cli.store)?;
    write_json(&sibling(&cli.store, "synth.json"), &summary)?;
    write_resolved(cli, &sibling(&cli.store, "synth.config.json"), &cfg)
}

/// Parses `2002-2017`, `2002,2004` or a mix such as `2002-2004,2006`.
fn parse_years(s: &str) -> Result<Vec<i32>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (i32, i32) = (a.trim().parse()?, b.trim().parse()?);
                if b < a {
                    bail!("empty year range `{part}`");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad year `{part}`"))?),
        }
    }
    Ok(out)
}

/// Parses `train=2002-2017;val=2018;test=2019`.
fn parse_splits(s: &str) -> Result<SplitSpec> {
    let mut years: BTreeMap<Split, Vec<i32>> = BTreeMap::new();
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, ys) = part.split_once('=').ok_or_else(|| anyhow!("expected `split=years`, got `{part}`"))?;
        years.insert(name.trim().parse()?, parse_years(ys)?);
    }
    let mut take = |s| years.remove(&s).unwrap_or_default();
    Ok(SplitSpec::new(take(Split::Train), take(Split::Val), take(Split::Test))?)
}

fn extract_cmd(cli: &Cli, a: &crate::ExtractArgs) -> Result<()> {
    let cube = Cube::open(&cli.store)?;
    let mut cfg = ExtractConfig::for_cube(&cube)?;
    if let Some(l) = &a.leads {
        cfg.leads = l.clone();
    }
    if let Some(s) = &a.splits {
        cfg.splits = parse_splits(s)?;
    }
    if let Some(c) = &a.channels {
        cfg.channels = c.clone();
    }
    if let Some(p) = a.patch_px {
        cfg.patch_px = p;
    }
    if let Some(n) = a.shard_size {
        cfg.shard_size = n;
    }
    cfg.include_invalid = a.include_invalid;
    if a.out.exists() {
        fs::remove_dir_all(&a.out).with_context(|| format!("replacing {}", a.out.display()))?;
    }
    extract(&cube, &cfg, &a.out)?;
    write_resolved(cli, &a.out.join("extract.config.json"), &cfg)
}

fn climatology(cli: &Cli, a: &crate::ClimatologyArgs) -> Result<()> {
    let cube = Cube::open(&cli.store)?;
    let years = if a.fit_through_2018 {
        (2002..=2018).collect()
    } else if let Some(s) = &a.fit_years {
        parse_years(s)?
    } else {
        ExtractConfig::for_cube(&cube)?.splits.years(Split::Train).to_vec()
    };
    let table = fit_climatology(&cube, TARGET_VARIABLE, &years)?;
    if a.out.exists() {
        fs::remove_dir_all(&a.out).with_context(|| format!("replacing {}", a.out.display()))?;
    }
    table.save(&a.out)?;
    write_resolved(cli, &sibling(&a.out, "config.json"), &json!({ "fit_years": table.fit_years }))
}

fn lead_dir(root: &Path, lead: usize) -> PathBuf {
    root.join(format!("lead_{lead}"))
}

fn train_ref(cli: &Cli, a: &crate::TrainArgs) -> Result<()> {
    let dir = lead_dir(&a.dataset, a.lead);
    let manifest = read_manifest(&dir)?;
    let mut cfg = TrainConfig { seed: cli.seed, ..TrainConfig::default() };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden_units = v;
    }
    if let Some(v) = a.pos_weight {
        cfg.pos_weight = v;
    }
    let c = manifest.channels.len();
    let train_set = PixelSet::from_shards(c, &manifest.shard_paths(&dir, Split::Train))?;
    let val_set = PixelSet::from_shards(c, &manifest.shard_paths(&dir, Split::Val))?;
    let (mut params, log) = train(&train_set, &val_set, &cfg)?;
    let manifest_bytes = fs::read(dir.join(firecube_core::dataset::MANIFEST_FILE))?;
    params.fingerprint = fingerprint(&[&manifest_bytes, &serde_json::to_vec(&cfg)?]);
    params.save(&a.out)?;
    write_json(&sibling(&a.out, "log.json"), &log)?;
    write_resolved(cli, &sibling(&a.out, "config.json"), &cfg)
}

fn predict_ref(cli: &Cli, a: &crate::PredictArgs) -> Result<()> {
    let dir = lead_dir(&a.dataset, a.lead);
    let manifest = read_manifest(&dir)?;
    let params = ModelParams::load(&a.params)?;
    let out = lead_dir(&a.out, a.lead);
    if out.exists() {
        fs::remove_dir_all(&out).with_context(|| format!("replacing {}", out.display()))?;
    }
    let mut written = BTreeMap::new();
    for s in &a.splits {
        let split: Split = s.parse()?;
        let files = predict_shards(&params, &manifest.shard_paths(&dir, split), &out)?;
        written.insert(split, files.len());
    }
    write_resolved(cli, &out.join("predict.config.json"), &json!({ "shards": written, "params": a.params }))
}

/// Score source behind `--preds`.
enum Source {
    Table(ClimatologyTable),
    Preds(PathBuf),
}

fn eval(cli: &Cli, a: &crate::EvalArgs) -> Result<()> {
    let split: Split = a.split.parse()?;
    let source = if CubeStore::open(&a.preds).is_ok_and(|s| s.has_array(CLIMATOLOGY_ARRAY)) {
        Source::Table(ClimatologyTable::load(&a.preds)?)
    } else {
        Source::Preds(a.preds.clone())
    };
    let mut leads = lead_dirs(&a.dataset)?;
    if let Some(wanted) = &a.leads {
        leads.retain(|(l, _)| wanted.contains(l));
        for l in wanted {
            if !leads.iter().any(|(k, _)| k == l) {
                bail!("dataset has no lead {l}");
            }
        }
    }
    if leads.is_empty() {
        bail!("no lead datasets under {}", a.dataset.display());
    }
    let label = match source {
        Source::Table(_) => "climatology",
        Source::Preds(_) => "predictions",
    };
    let mut summary = BTreeMap::new();
    let mut failures = Vec::new();
    for (lead, dir) in &leads {
        let preds_dir;
        let src = match &source {
            Source::Table(t) => ScoreSource::Climatology(t),
            Source::Preds(root) => {
                preds_dir = if lead_dir(root, *lead).is_dir() { lead_dir(root, *lead) } else { root.clone() };
                ScoreSource::Predictions(&preds_dir)
            }
        };
        let stem = format!("eval_{label}_lead_{lead}_{split}");
        match evaluate(dir, src, split, a.bins) {
            Ok((report, acc)) => {
                write_json(&a.out.join(format!("{stem}.json")), &report)?;
                if a.pr_curve {
                    let mut csv = Vec::new();
                    acc.write_pr_curve_csv(&mut csv)?;
                    write_atomic(&a.out.join(format!("{stem}_pr.csv")), &csv)?;
                }
                summary.insert(*lead, report.metrics);
            }
            Err(e) => failures.push(format!("lead {lead}: {e}")),
        }
    }
    println!("{}", serde_json::to_string(&json!({ "source": label, "split": split, "leads": summary }))?);
    write_resolved(cli, &a.out.join(format!("eval_{label}_{split}.config.json")), &json!({ "leads": leads }))?;
    if !failures.is_empty() {
        return Err(PartialFailure(failures).into());
    }
    Ok(())
}

fn render(cli: &Cli, a: &crate::RenderArgs) -> Result<()> {
    let dir = lead_dir(&a.dataset, a.lead);
    let manifest = read_manifest(&dir)?;
    let mut spec = match &a.palette {
        Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => RenderSpec::default(),
    };
    if a.log_scale {
        spec.scale = Scale::Log;
    }
    let grid = manifest.grid;
    let t_input = manifest.axis.date_to_step(a.date)?;
    let t_target = t_input + a.lead;
    if t_target >= manifest.axis.len() {
        bail!("{} plus lead {} is past the end of the axis", a.date, a.lead);
    }

    let preds = || -> Result<Vec<f32>> {
        let pdir = lead_dir(&a.preds, a.lead);
        let pdir = if pdir.is_dir() { pdir } else { a.preds.clone() };
        let mut batches = Vec::new();
        let mut entries: Vec<PathBuf> = fs::read_dir(&pdir)
            .with_context(|| format!("listing {}", pdir.display()))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "fcs"))
            .collect();
        entries.sort();
        for p in entries {
            batches.push(PredictionBatch::read(&p)?);
        }
        Ok(mosaic_predictions(&batches, &grid, t_input))
    };
    let target = || -> Result<Vec<f32>> {
        let cube = Cube::open(&cli.store)?;
        let field = cube.read_field(&manifest.target, t_target)?;
        Ok(field.into_iter().map(|v| if v.is_nan() { v } else { f32::from(u8::from(v > 0.0)) }).collect())
    };
    let img = match a.input {
        RenderInput::Preds => render_image(&preds()?, &grid, &spec)?,
        RenderInput::Target => render_image(&target()?, &grid, &spec)?,
        RenderInput::Pair => render_pair(&preds()?, &target()?, &grid, &spec)?,
    };
    if let Some(d) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    write_png(&img, &a.out)?;
    write_resolved(
        cli,
        &sibling(&a.out, "config.json"),
        &json!({ "t_input": t_input, "t_target": t_target, "spec": spec }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_lists() {
        assert_eq!(parse_years("2002-2004,2007").unwrap(), vec![2002, 2003, 2004, 2007]);
        assert!(parse_years("2004-2002").is_err());
        let s = parse_splits("train=2002-2017;val=2018;test=2019").unwrap();
        assert_eq!(s, SplitSpec::reference());
        assert!(parse_splits("train=2002;bogus=2003").is_err());
    }
}

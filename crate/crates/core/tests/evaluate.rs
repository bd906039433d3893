use std::fs;

use firecube_core::climatology::fit_climatology;
use firecube_core::dataset::{extract, read_manifest, ExtractConfig, PredictionBatch, Split};
use firecube_core::evaluate::{evaluate, lead_dirs, ScoreSource};
use firecube_core::ingest::TARGET_VARIABLE;
use firecube_core::metrics::DEFAULT_BINS;
use firecube_core::model::{predict_shards, train, PixelSet, TrainConfig};
use firecube_core::synth::{generate_world, WorldConfig};
use firecube_core::{Cube, Error};

#[test]
fn model_and_baseline_share_the_population() {
    let dir = tempfile::tempdir().unwrap();
    let world = WorldConfig { resolution_deg: 4.0, years: 4, patch_px: 16, ..WorldConfig::default() };
    generate_world(&world, &dir.path().join("cube")).unwrap();
    let cube = Cube::open(dir.path().join("cube")).unwrap();
    let mut cfg = ExtractConfig::for_cube(&cube).unwrap();
    cfg.leads = vec![1, 4];
    extract(&cube, &cfg, &dir.path().join("ds")).unwrap();
    let leads = lead_dirs(&dir.path().join("ds")).unwrap();
    assert_eq!(leads.iter().map(|l| l.0).collect::<Vec<_>>(), vec![1, 4]);
    let ds = &leads[0].1;
    let m = read_manifest(ds).unwrap();
    let tr = PixelSet::from_shards(8, &m.shard_paths(ds, Split::Train)).unwrap();
    let va = PixelSet::from_shards(8, &m.shard_paths(ds, Split::Val)).unwrap();
    let (params, _) = train(&tr, &va, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap();
    let preds = dir.path().join("preds");

    // without validation predictions the threshold comes from the test split
    predict_shards(&params, &m.shard_paths(ds, Split::Test), &preds).unwrap();
    let (only_test, _) = evaluate(ds, ScoreSource::Predictions(&preds), Split::Test, DEFAULT_BINS).unwrap();
    assert_eq!(only_test.threshold_selected_on, Split::Test);

    predict_shards(&params, &m.shard_paths(ds, Split::Val), &preds).unwrap();
    let (model, _) = evaluate(ds, ScoreSource::Predictions(&preds), Split::Test, DEFAULT_BINS).unwrap();
    assert_eq!(model.threshold_selected_on, Split::Val);
    let table = fit_climatology(&cube, TARGET_VARIABLE, cfg.splits.years(Split::Train)).unwrap();
    let (base, _) = evaluate(ds, ScoreSource::Climatology(&table), Split::Test, DEFAULT_BINS).unwrap();
    assert_eq!(model.metrics.n_pixels, base.metrics.n_pixels);
    assert_eq!(model.metrics.n_positive, base.metrics.n_positive);
    assert_eq!(model.lead_steps, 1);

    // predictions for other samples are refused
    let first = &m.shard_paths(ds, Split::Test)[0];
    let name = preds.join(first.file_name().unwrap());
    let mut p = PredictionBatch::read(&name).unwrap();
    p.meta[0].col0 += 1;
    p.write(&name).unwrap();
    assert!(matches!(evaluate(ds, ScoreSource::Predictions(&preds), Split::Test, DEFAULT_BINS), Err(Error::Shape(_))));
    fs::remove_file(&name).unwrap();
    assert!(evaluate(ds, ScoreSource::Predictions(&preds), Split::Test, DEFAULT_BINS).is_err());
}

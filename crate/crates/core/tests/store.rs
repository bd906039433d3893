use firecube_core::store::{to_json_document, ArraySpec, CubeStore};
use firecube_core::{Error, GeoGrid, PatchGridSpec, TimeAxis};
use proptest::prelude::*;

#[test]
fn conflicting_array_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = CubeStore::create(dir.path()).unwrap();
    store.create_array(&ArraySpec::gridded("t2m_min", 4, 3, 5).unwrap()).unwrap();
    store.create_array(&ArraySpec::gridded("t2m_min", 4, 3, 5).unwrap()).unwrap();
    let other = ArraySpec::gridded("t2m_min", 5, 3, 5).unwrap();
    assert!(matches!(store.create_array(&other), Err(Error::Conflict { .. })));
}

#[test]
fn metadata_matches_zarr_python_layout() {
    let dir = tempfile::tempdir().unwrap();
    let store = CubeStore::create(dir.path()).unwrap();
    store.create_array(&ArraySpec::gridded("gwis_ba", 3, 4, 8).unwrap()).unwrap();
    let ours = std::fs::read_to_string(dir.path().join("gwis_ba/.zarray")).unwrap();
    let golden = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/tiny.zarr/gwis_ba/.zarray"),
    )
    .unwrap();
    assert_eq!(ours, golden);
    let doc = String::from_utf8(to_json_document(&serde_json::json!({"b": 1, "a": [2]})).unwrap()).unwrap();
    assert_eq!(doc, "{\n    \"a\": [\n        2\n    ],\n    \"b\": 1\n}");
}

#[test]
fn unaligned_chunks_and_partial_reads() {
    let dir = tempfile::tempdir().unwrap();
    let store = CubeStore::create(dir.path()).unwrap();
    let spec = ArraySpec::new("x", vec![5, 7], vec![2, 3]).unwrap();
    assert_eq!(spec.chunk_grid(), vec![3, 3]);
    let arr = store.create_array(&spec).unwrap();
    let data: Vec<f32> = (0..35).map(|v| v as f32).collect();
    arr.write_region(&[0, 0], &[5, 7], &data).unwrap();
    let region = arr.read_region(&[1, 2], &[3, 4]).unwrap();
    let want: Vec<f32> = (1..4).flat_map(|r| (2..6).map(move |c| (r * 7 + c) as f32)).collect();
    assert_eq!(region, want);
    assert!(arr.chunk_path(&[2, 2]).exists());
}

#[test]
fn unknown_dtype_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = CubeStore::create(dir.path()).unwrap();
    std::fs::create_dir(dir.path().join("y")).unwrap();
    let meta = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/tiny.zarr/oci_nao/.zarray"),
    )
    .unwrap()
    .replace("<f4", "<f8");
    std::fs::write(dir.path().join("y/.zarray"), meta).unwrap();
    assert!(store.open_array("y").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn region_writes_read_back(t in 1usize..5, h in 1usize..9, w in 1usize..9,
                               ct in 1usize..3, ch in 1usize..5, cw in 1usize..5, seed in 0u32..1000) {
        let dir = tempfile::tempdir().unwrap();
        let store = CubeStore::create(dir.path()).unwrap();
        let spec = ArraySpec::new("a", vec![t, h, w], vec![ct.min(t), ch.min(h), cw.min(w)]).unwrap();
        let arr = store.create_array(&spec).unwrap();
        // write only full chunk-aligned time slabs of even chunk index
        let mut want = vec![f32::NAN; t * h * w];
        for t0 in (0..t).step_by(spec.chunks[0]).step_by(2) {
            let nt = spec.chunks[0].min(t - t0);
            let block: Vec<f32> = (0..nt * h * w).map(|i| (i as u32 ^ seed) as f32).collect();
            arr.write_region(&[t0, 0, 0], &[nt, h, w], &block).unwrap();
            want[t0 * h * w..(t0 + nt) * h * w].copy_from_slice(&block);
        }
        let got = arr.read_all().unwrap();
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn cell_centers_map_back_to_their_cell(res_idx in 0usize..4, r in 0usize..720, c in 0usize..1440) {
        let res = [0.25, 0.5, 1.0, 2.0][res_idx];
        let g = GeoGrid::global(res).unwrap();
        let (r, c) = (r % g.n_lat, c % g.n_lon);
        let (lat, lon) = g.index_to_latlon(r, c);
        prop_assert_eq!(g.latlon_to_index(lat, lon).unwrap(), (r, c));
    }

    #[test]
    fn tiles_cover_the_grid_once(res_idx in 0usize..4, p in 1usize..200) {
        let res = [0.25, 1.0, 2.0, 5.0][res_idx];
        let g = GeoGrid::global(res).unwrap();
        let tiles = firecube_core::tile_patches(&g, &PatchGridSpec::new(p)).unwrap();
        prop_assert_eq!(tiles.len(), g.n_lat.div_ceil(p) * g.n_lon.div_ceil(p));
        let mut hits = vec![0u8; g.n_cells()];
        for t in &tiles {
            for r in t.row..(t.row + p).min(g.n_lat) {
                for c in t.col..(t.col + p).min(g.n_lon) {
                    hits[r * g.n_lon + c] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn every_day_falls_in_exactly_one_period(start in 1990i32..2030, span in 0i32..4) {
        let axis = TimeAxis::new(start, start + span).unwrap();
        let mut day = axis.first_day();
        let mut last_step = 0;
        let mut covered = 0usize;
        while day <= axis.last_day() {
            let s = axis.date_to_step(day).unwrap();
            prop_assert!(s == last_step || s == last_step + 1);
            prop_assert!(axis.period(s).unwrap().contains(day));
            last_step = s;
            covered += 1;
            day = day.succ_opt().unwrap();
        }
        prop_assert_eq!(covered, axis.n_days());
        prop_assert_eq!(axis.len(), 46 * (span as usize + 1));
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use firecube_core::ingest::{
    build_cube, rasterize_events, read_events_csv, registry_lookup, BurnEvent, InputSource, RasterSidecar,
    VariableOutcome,
};
use firecube_core::{Cube, CubeManifest, GeoGrid, TimeAxis};

const DAYS: usize = 365;

fn write_raster(dir: &Path, name: &str, shape: Vec<usize>, res: f64, values: &[f32], daily: bool) -> PathBuf {
    let data_file = format!("{name}.f32");
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.join(&data_file), bytes).unwrap();
    let sidecar = RasterSidecar {
        variable: name.into(),
        shape,
        resolution_deg: res,
        start_date: daily.then(|| chrono::NaiveDate::from_ymd_opt(2003, 1, 1).unwrap()),
        data_file: data_file.into(),
        dtype: "<f4".into(),
    };
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_vec_pretty(&sidecar).unwrap()).unwrap();
    path
}

/// Fine daily value at 15° for day `d`, row `r`, col `c`.
fn fine_value(d: usize, r: usize, c: usize) -> f32 {
    if (d + r + c).is_multiple_of(11) {
        f32::NAN
    } else {
        (d as f32 * 0.5) + r as f32 - 0.25 * c as f32
    }
}

fn inputs(dir: &Path) -> (CubeManifest, BTreeMap<String, InputSource>) {
    let grid = GeoGrid::global(30.0).unwrap();
    let (rows, cols) = (12, 24);
    let daily: Vec<f32> =
        (0..DAYS).flat_map(|d| (0..rows * cols).map(move |i| fine_value(d, i / cols, i % cols))).collect();
    let mut srcs = BTreeMap::new();
    for name in ["t2m_min", "tp"] {
        let path = write_raster(dir, name, vec![DAYS, rows, cols], 15.0, &daily, true);
        srcs.insert(name.to_string(), InputSource::Raster { path });
    }
    let pop: Vec<f32> = (0..grid.n_cells()).map(|i| i as f32).collect();
    let path = write_raster(dir, "pop_dens", vec![grid.n_lat, grid.n_lon], 30.0, &pop, false);
    srcs.insert("pop_dens".into(), InputSource::Raster { path });

    let events = dir.join("events.csv");
    fs::write(
        &events,
        "lat,lon,date,area_ha\n10.0,10.0,2003-01-03,5.5\n10.0,20.0,2003-01-08,4.5\n-80.0,170.0,2003-12-31,1\n95.0,0.0,2003-01-01,3\n",
    )
    .unwrap();
    srcs.insert("gwis_ba".into(), InputSource::Events { path: events });

    let series = dir.join("nao.csv");
    fs::write(&series, "date,value\n2003-01-01,1.0\n2003-01-05,3.0\n2003-02-01,-2.0\n").unwrap();
    srcs.insert("oci_nao".into(), InputSource::Series { path: series });

    let names = ["t2m_min", "tp", "pop_dens", "gwis_ba", "oci_nao", "ndvi"];
    let manifest = CubeManifest {
        variables: names.iter().map(|n| registry_lookup(n).unwrap()).collect(),
        axis: TimeAxis::new(2003, 2003).unwrap(),
        grid,
        attributes: Default::default(),
    };
    (manifest, srcs)
}

#[test]
fn builds_every_kind_and_reports_missing_sources() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, srcs) = inputs(dir.path());
    let report = build_cube(&manifest, &srcs, &dir.path().join("cube")).unwrap();
    assert_eq!(report.failures(), vec!["ndvi"]);
    let cube = Cube::open(dir.path().join("cube")).unwrap();

    // first period, first coarse cell: composite each fine cell of the
    // 2 × 2 block over days 0..8, then average the block
    let block = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let days = |r, c| (0..8).map(move |d| fine_value(d, r, c)).filter(|v| !v.is_nan()).map(f64::from);
    let mins: Vec<f64> = block.iter().map(|&(r, c)| days(r, c).fold(f64::INFINITY, f64::min)).collect();
    let sums: Vec<f64> = block.iter().map(|&(r, c)| days(r, c).sum::<f64>()).collect();
    let min = f64::from(cube.read_field("t2m_min", 0).unwrap()[0]);
    let tp = f64::from(cube.read_field("tp", 0).unwrap()[0]);
    assert!((min - mins.iter().sum::<f64>() / 4.0).abs() < 1e-6);
    assert!((tp - sums.iter().sum::<f64>() / 4.0).abs() < 1e-5);

    let pop = cube.read_field("pop_dens", 17).unwrap();
    assert_eq!(pop[13], 13.0);

    let ba0 = cube.read_field("gwis_ba", 0).unwrap();
    let (r, c) = cube.grid().latlon_to_index(10.0, 10.0).unwrap();
    assert_eq!(ba0[r * 12 + c], 10.0);
    let last = cube.read_field("gwis_ba", 45).unwrap();
    assert_eq!(last.iter().sum::<f32>(), 1.0);
    match &report.variables["gwis_ba"] {
        VariableOutcome::Ok { rasterize: Some(rep), .. } => assert_eq!((rep.accepted, rep.skipped), (3, 1)),
        other => panic!("{other:?}"),
    }

    // step-held series: period 0 holds 1.0 for 4 days then 3.0 for 4
    let nao = cube.store().open_array("oci_nao").unwrap().read_all().unwrap();
    assert_eq!(nao[0], 2.0);
    assert_eq!(nao[1], 3.0);
    assert_eq!(nao[45], -2.0);
    assert!(!cube.store().has_array("ndvi"));
}

#[test]
fn build_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, srcs) = inputs(dir.path());
    build_cube(&manifest, &srcs, &dir.path().join("a")).unwrap();
    build_cube(&manifest, &srcs, &dir.path().join("b")).unwrap();
    for var in ["t2m_min", "tp", "pop_dens", "gwis_ba", "oci_nao"] {
        let a = dir.path().join("a").join(var);
        for entry in fs::read_dir(&a).unwrap().flatten() {
            let other = dir.path().join("b").join(var).join(entry.file_name());
            assert_eq!(fs::read(entry.path()).unwrap(), fs::read(other).unwrap());
        }
    }
}

#[test]
fn rasterization_conserves_accepted_area() {
    let grid = GeoGrid::global(2.0).unwrap();
    let axis = TimeAxis::new(2010, 2010).unwrap();
    let mut events = Vec::new();
    for i in 0..500 {
        let lat = -89.9 + (i as f64 * 0.37) % 179.8;
        let lon = -179.9 + (i as f64 * 1.13) % 359.8;
        let date = chrono::NaiveDate::from_ymd_opt(2009 + (i % 3), 1 + (i % 12) as u32, 1).unwrap();
        events.push(BurnEvent { lat, lon, date, area: 1.0 + i as f64 });
    }
    let (field, rep) = rasterize_events(&events, &grid, &axis);
    assert_eq!(rep.accepted + rep.skipped, 500);
    assert!((field.total() - rep.accepted_area).abs() < 1e-9);
    let in_year: f64 = events.iter().filter(|e| e.date.format("%Y").to_string() == "2010").map(|e| e.area).sum();
    assert!((rep.accepted_area - in_year).abs() < 1e-9);
}

#[test]
fn events_csv_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    fs::write(&path, "lat,lon,date,area_ha\n1.0,2.0,not-a-date,3\n").unwrap();
    assert!(read_events_csv(&path).is_err());
}

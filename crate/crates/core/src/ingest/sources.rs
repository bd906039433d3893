//! Raw input file contracts.
//!
//! * Gridded rasters: a JSON sidecar plus a flat little-endian `f32` data file
//!   holding `shape` values in C order. Daily rasters have shape
//!   `[days, rows, cols]` and a `start_date`; static maps have `[rows, cols]`.
//! * Burn events: CSV with header `lat,lon,date,area_ha`.
//! * Scalar series: CSV with header `date,value`.

use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

use super::rasterize::BurnEvent;

/// Where a variable's raw data lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSource {
    /// Path to a raster sidecar JSON.
    Raster {
        path: PathBuf,
    },
    Events {
        path: PathBuf,
    },
    Series {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub variable: String,
    pub shape: Vec<usize>,
    pub resolution_deg: f64,
    #[serde(default)]
    pub start_date: Option<NaiveDate>,
    /// Data file, relative to the sidecar's directory.
    pub data_file: PathBuf,
    #[serde(default = "default_dtype")]
    pub dtype: String,
}

fn default_dtype() -> String {
    "<f4".into()
}

/// An opened raster: sidecar plus resolved data path.
#[derive(Clone, Debug)]
pub(crate) struct RasterSource {
    pub sidecar: RasterSidecar,
    pub data_path: PathBuf,
}

impl RasterSource {
    pub fn open(sidecar_path: &Path) -> Result<Self> {
        let bytes = fs::read(sidecar_path).io_context(|| format!("reading {}", sidecar_path.display()))?;
        let sidecar: RasterSidecar = serde_json::from_slice(&bytes)?;
        if sidecar.dtype != "<f4" {
            return Err(Error::Domain(format!("{}: unsupported dtype {}", sidecar_path.display(), sidecar.dtype)));
        }
        if !(2..=3).contains(&sidecar.shape.len()) {
            return Err(Error::Shape(format!(
                "{}: raster shape must be [rows, cols] or [days, rows, cols]",
                sidecar_path.display()
            )));
        }
        let data_path = sidecar_path.parent().unwrap_or(Path::new(".")).join(&sidecar.data_file);
        let expected = sidecar.shape.iter().product::<usize>() as u64 * 4;
        let actual = fs::metadata(&data_path).io_context(|| format!("reading {}", data_path.display()))?.len();
        if actual != expected {
            return Err(Error::Shape(format!(
                "{}: {actual} bytes, sidecar shape {:?} needs {expected}",
                data_path.display(),
                sidecar.shape
            )));
        }
        Ok(Self { sidecar, data_path })
    }

    pub fn rows(&self) -> usize {
        self.sidecar.shape[self.sidecar.shape.len() - 2]
    }

    pub fn cols(&self) -> usize {
        self.sidecar.shape[self.sidecar.shape.len() - 1]
    }

    pub fn n_days(&self) -> usize {
        if self.sidecar.shape.len() == 3 {
            self.sidecar.shape[0]
        } else {
            1
        }
    }

    /// Reads field `day` (0 for static maps).
    pub fn read_field(&self, day: usize) -> Result<Vec<f32>> {
        let n = self.rows() * self.cols();
        let mut f = fs::File::open(&self.data_path).io_context(|| format!("opening {}", self.data_path.display()))?;
        f.seek(SeekFrom::Start((day * n * 4) as u64)).io_context(|| format!("seeking {}", self.data_path.display()))?;
        let mut bytes = vec![0u8; n * 4];
        f.read_exact(&mut bytes).io_context(|| format!("reading day {day} of {}", self.data_path.display()))?;
        Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
    }
}

#[derive(Deserialize)]
struct EventRow {
    lat: f64,
    lon: f64,
    date: NaiveDate,
    area_ha: f64,
}

pub fn read_events_csv(path: &Path) -> Result<Vec<BurnEvent>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<EventRow>()
        .map(|row| {
            let row = row?;
            Ok(BurnEvent { lat: row.lat, lon: row.lon, date: row.date, area: row.area_ha })
        })
        .collect()
}

#[derive(Deserialize)]
struct SeriesRow {
    date: NaiveDate,
    value: f64,
}

/// Reads `(date, value)` records, sorted by date.
pub fn read_series_csv(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = rdr
        .deserialize::<SeriesRow>()
        .map(|r| r.map(|r| (r.date, r.value)).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.0);
    Ok(rows)
}

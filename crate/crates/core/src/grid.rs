//! Global cell-centered grid and patch tiling geometry.
//!
//! Row 0 is the northernmost band and rows increase southward; column 0 starts
//! at 180°W and columns increase eastward. Longitudes use the `[-180, 180)`
//! convention and tiles never wrap around the antimeridian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A regular global latitude/longitude grid with cell-center registration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoGrid {
    pub n_lat: usize,
    pub n_lon: usize,
    pub resolution_deg: f64,
}

impl Default for GeoGrid {
    fn default() -> Self {
        Self::quarter_degree()
    }
}

impl GeoGrid {
    /// The 720 × 1440 grid at 0.25°.
    pub fn quarter_degree() -> Self {
        Self { n_lat: 720, n_lon: 1440, resolution_deg: 0.25 }
    }

    /// A global grid at the given resolution. 180 must be an integer multiple
    /// of `resolution_deg`.
    pub fn global(resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg > 0.0) {
            return Err(Error::Domain(format!("grid resolution must be positive, got {resolution_deg}")));
        }
        let n_lat = (180.0 / resolution_deg).round() as usize;
        let grid = Self { n_lat, n_lon: 2 * n_lat, resolution_deg };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let lat_span = self.n_lat as f64 * self.resolution_deg;
        let lon_span = self.n_lon as f64 * self.resolution_deg;
        if self.n_lat == 0 || (lat_span - 180.0).abs() > 1e-9 || (lon_span - 360.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "grid {}x{} at {}° does not cover the globe",
                self.n_lat, self.n_lon, self.resolution_deg
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    /// Cell containing `(lat, lon)`. Points on a cell edge belong to the
    /// northern (resp. western) neighbour, which is also the first nearest
    /// center found by a row-major scan.
    pub fn latlon_to_index(&self, lat: f64, lon: f64) -> Result<(usize, usize)> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..180.0).contains(&lon) {
            return Err(Error::Domain(format!("coordinate ({lat}, {lon}) outside lat [-90, 90] / lon [-180, 180)")));
        }
        let row = edge_index((90.0 - lat) / self.resolution_deg, self.n_lat);
        let col = edge_index((lon + 180.0) / self.resolution_deg, self.n_lon);
        Ok((row, col))
    }

    /// Center coordinate `(lat, lon)` of cell `(row, col)`.
    pub fn index_to_latlon(&self, row: usize, col: usize) -> (f64, f64) {
        (self.row_lat(row), self.col_lon(col))
    }

    pub fn row_lat(&self, row: usize) -> f64 {
        90.0 - (row as f64 + 0.5) * self.resolution_deg
    }

    pub fn col_lon(&self, col: usize) -> f64 {
        -180.0 + (col as f64 + 0.5) * self.resolution_deg
    }
}

fn edge_index(offset_cells: f64, n: usize) -> usize {
    let idx = offset_cells.ceil() as i64 - 1;
    idx.clamp(0, n as i64 - 1) as usize
}

/// Patch tiling parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchGridSpec {
    pub patch_px: usize,
    /// Value written to canvas cells beyond the grid edge.
    pub pad_value: f32,
}

impl Default for PatchGridSpec {
    fn default() -> Self {
        Self { patch_px: 128, pad_value: f32::NAN }
    }
}

impl PatchGridSpec {
    pub fn new(patch_px: usize) -> Self {
        Self { patch_px, ..Self::default() }
    }

    /// Padded canvas dimensions `(rows, cols)` for `grid`.
    pub fn canvas(&self, grid: &GeoGrid) -> (usize, usize) {
        (grid.n_lat.div_ceil(self.patch_px) * self.patch_px, grid.n_lon.div_ceil(self.patch_px) * self.patch_px)
    }
}

/// Upper-left corner of a tile on the padded canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileOrigin {
    pub row: usize,
    pub col: usize,
}

/// Grid-aligned, non-overlapping tile origins in row-major order.
pub fn tile_patches(grid: &GeoGrid, spec: &PatchGridSpec) -> Result<Vec<TileOrigin>> {
    if spec.patch_px == 0 {
        return Err(Error::Domain("patch size must be positive".into()));
    }
    let (rows, cols) = spec.canvas(grid);
    let p = spec.patch_px;
    Ok((0..rows / p).flat_map(|i| (0..cols / p).map(move |j| TileOrigin { row: i * p, col: j * p })).collect())
}

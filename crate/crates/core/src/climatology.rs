//! Weekly mean seasonal cycle baseline.

use std::path::Path;

use serde_json::{Map, Value};

use crate::cube::Cube;
use crate::error::{Error, Result};
use crate::grid::{GeoGrid, TileOrigin};
use crate::store::{ArraySpec, CubeStore};
use crate::time::{TimeAxis, PERIODS_PER_YEAR};

pub const CLIMATOLOGY_ARRAY: &str = "climatology";
const FIT_YEARS_ATTR: &str = "fit_years";
const GRID_ATTR: &str = "grid";

/// Per period-of-year, per cell mean burned area.
#[derive(Clone, Debug, PartialEq)]
pub struct ClimatologyTable {
    pub grid: GeoGrid,
    pub fit_years: Vec<i32>,
    /// `PERIODS_PER_YEAR × n_lat × n_lon`, row-major; NaN where a cell was
    /// never observed in that period.
    pub values: Vec<f32>,
}

impl ClimatologyTable {
    pub fn period(&self, p: usize) -> &[f32] {
        let n = self.grid.n_cells();
        &self.values[p * n..(p + 1) * n]
    }

    /// Writes the table as array `climatology` in a store group at `root`.
    pub fn save(&self, root: &Path) -> Result<()> {
        let store = CubeStore::create(root)?;
        let g = &self.grid;
        let spec =
            ArraySpec::new(CLIMATOLOGY_ARRAY, vec![PERIODS_PER_YEAR, g.n_lat, g.n_lon], vec![1, g.n_lat, g.n_lon])?;
        let arr = store.create_array(&spec)?;
        arr.write_region(&[0, 0, 0], &spec.shape, &self.values)?;
        let mut attrs = Map::new();
        attrs.insert("_ARRAY_DIMENSIONS".into(), serde_json::to_value(["period", "latitude", "longitude"])?);
        attrs.insert(FIT_YEARS_ATTR.into(), serde_json::to_value(&self.fit_years)?);
        attrs.insert(GRID_ATTR.into(), serde_json::to_value(self.grid)?);
        attrs.insert("units".into(), "ha".into());
        arr.set_attrs(&attrs)
    }

    pub fn load(root: &Path) -> Result<Self> {
        let arr = CubeStore::open(root)?.open_array(CLIMATOLOGY_ARRAY)?;
        let attrs = arr.attrs()?;
        let field = |key: &str| -> Result<Value> {
            attrs
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Domain(format!("climatology at {} lacks `{key}`", root.display())))
        };
        let grid: GeoGrid = serde_json::from_value(field(GRID_ATTR)?)?;
        let fit_years: Vec<i32> = serde_json::from_value(field(FIT_YEARS_ATTR)?)?;
        if arr.shape() != [PERIODS_PER_YEAR, grid.n_lat, grid.n_lon] {
            return Err(Error::Shape(format!("climatology shape {:?} does not match its grid", arr.shape())));
        }
        Ok(Self { grid, fit_years, values: arr.read_all()? })
    }
}

/// Fits the table from `variable` over `years`, skipping NaN observations.
pub fn fit_climatology(cube: &Cube, variable: &str, years: &[i32]) -> Result<ClimatologyTable> {
    if years.is_empty() {
        return Err(Error::Domain("climatology needs at least one fit year".into()));
    }
    let axis = cube.axis();
    let mut years = years.to_vec();
    years.sort_unstable();
    years.dedup();
    if let Some(y) = years.iter().find(|&&y| y < axis.start_year() || y > axis.end_year()) {
        return Err(Error::Range(format!(
            "fit year {y} outside cube years {}..={}",
            axis.start_year(),
            axis.end_year()
        )));
    }
    let grid = *cube.grid();
    let n = grid.n_cells();
    let mut sum = vec![0f64; PERIODS_PER_YEAR * n];
    let mut count = vec![0u32; PERIODS_PER_YEAR * n];
    for &year in &years {
        for step in axis.steps_in_year(year) {
            let p = axis.period_of_year(step)?;
            let field = cube.read_field(variable, step)?;
            let (s, c) = (&mut sum[p * n..(p + 1) * n], &mut count[p * n..(p + 1) * n]);
            for ((s, c), &v) in s.iter_mut().zip(c.iter_mut()).zip(&field) {
                if !v.is_nan() {
                    *s += f64::from(v);
                    *c += 1;
                }
            }
        }
    }
    let values =
        sum.iter().zip(&count).map(|(&s, &c)| if c == 0 { f32::NAN } else { (s / f64::from(c)) as f32 }).collect();
    Ok(ClimatologyTable { grid, fit_years: years, values })
}

/// Baseline patch for a target step: the table row for its period of year,
/// cropped to the tile. Cells outside the grid are NaN.
pub fn predict_climatology(
    table: &ClimatologyTable,
    axis: &TimeAxis,
    t_target: usize,
    tile: TileOrigin,
    patch_px: usize,
) -> Result<Vec<f32>> {
    let p = axis.period_of_year(t_target)?;
    let field = table.period(p);
    let g = &table.grid;
    let mut out = vec![f32::NAN; patch_px * patch_px];
    for i in 0..patch_px {
        let r = tile.row + i;
        if r >= g.n_lat {
            break;
        }
        for j in 0..patch_px.min(g.n_lon.saturating_sub(tile.col)) {
            out[i * patch_px + j] = field[r * g.n_lon + tile.col + j];
        }
    }
    Ok(out)
}

/// Maps a baseline value to a [0, 1] score without changing its ranking.
/// The map `L / (1 + L)` with `L = ln(1 + v)` keeps hectare-scale values
/// spread over the histogram bins. Unobserved cells score 0.
pub fn climatology_score(v: f32) -> f32 {
    if v.is_nan() || v <= 0.0 {
        return 0.0;
    }
    let l = f64::from(v).ln_1p();
    (l / (1.0 + l)) as f32
}

use crate::error::{Error, Result};
use crate::grid::GeoGrid;

use super::Resample;

/// A fine-resolution global raster aligned to the cube grid's edges, row 0
/// northernmost.
#[derive(Clone, Copy, Debug)]
pub struct FineRaster<'a> {
    pub rows: usize,
    pub cols: usize,
    pub resolution_deg: f64,
    pub data: &'a [f32],
}

impl FineRaster<'_> {
    /// Integer block size `k` such that `k × k` fine cells form one cell of
    /// `grid`.
    pub fn block_ratio(&self, grid: &GeoGrid) -> Result<usize> {
        let ratio = grid.resolution_deg / self.resolution_deg;
        let k = ratio.round();
        if !(k >= 1.0) || (ratio - k).abs() > 1e-9 * ratio {
            return Err(Error::UnsupportedRatio(format!(
                "{}° → {}° is not an integer block ratio",
                self.resolution_deg, grid.resolution_deg
            )));
        }
        let k = k as usize;
        if self.rows != grid.n_lat * k || self.cols != grid.n_lon * k || self.data.len() != self.rows * self.cols {
            return Err(Error::Shape(format!(
                "fine raster {}x{} ({} values) is not {}x the {}x{} grid",
                self.rows,
                self.cols,
                self.data.len(),
                k,
                grid.n_lat,
                grid.n_lon
            )));
        }
        Ok(k)
    }
}

/// Resamples a fine raster onto `grid` by combining each `k × k` block.
///
/// `mean` skips NaN; `sum` counts NaN as 0 unless the whole block is NaN;
/// `nearest` takes the block's center cell (the lower-right of the four
/// central cells when `k` is even). `none` is only valid at ratio 1.
pub fn regrid(fine: &FineRaster<'_>, grid: &GeoGrid, rule: Resample) -> Result<Vec<f64>> {
    let k = fine.block_ratio(grid)?;
    if rule == Resample::None && k != 1 {
        return Err(Error::UnsupportedRatio(format!(
            "resample rule `none` requires matching resolution, got block ratio {k}"
        )));
    }
    let mut out = vec![f64::NAN; grid.n_cells()];
    for r in 0..grid.n_lat {
        for c in 0..grid.n_lon {
            let block = |i: usize, j: usize| fine.data[(r * k + i) * fine.cols + c * k + j] as f64;
            out[r * grid.n_lon + c] = match rule {
                Resample::Nearest | Resample::None => block(k / 2, k / 2),
                Resample::Mean | Resample::Sum => {
                    let mut sum = 0.0;
                    let mut n = 0u32;
                    for i in 0..k {
                        for j in 0..k {
                            let v = block(i, j);
                            if !v.is_nan() {
                                sum += v;
                                n += 1;
                            }
                        }
                    }
                    match (rule, n) {
                        (_, 0) => f64::NAN,
                        (Resample::Mean, n) => sum / n as f64,
                        _ => sum,
                    }
                }
            };
        }
    }
    Ok(out)
}

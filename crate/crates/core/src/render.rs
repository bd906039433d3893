//! Global map rendering to PNG.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::dataset::PredictionBatch;
use crate::error::{Error, Result};
use crate::grid::GeoGrid;
use crate::store::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorStop {
    pub value: f64,
    pub color: [u8; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    /// Values below this (and NaN) are drawn in `missing_color`.
    pub missing_threshold: f64,
    pub palette: Vec<ColorStop>,
    pub scale: Scale,
    pub missing_color: [u8; 3],
}

impl Default for RenderSpec {
    fn default() -> Self {
        let stops = [
            (0.0, [68, 1, 84]),
            (0.25, [59, 82, 139]),
            (0.5, [33, 145, 140]),
            (0.75, [94, 201, 98]),
            (1.0, [253, 231, 37]),
        ];
        Self {
            missing_threshold: 1e-4,
            palette: stops.map(|(value, color)| ColorStop { value, color }).to_vec(),
            scale: Scale::Linear,
            missing_color: [255, 255, 255],
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.missing_threshold >= 0.0) {
            return Err(Error::Config(format!("missing threshold must be ≥ 0, got {}", self.missing_threshold)));
        }
        if self.palette.is_empty() {
            return Err(Error::Config("palette needs at least one stop".into()));
        }
        if self.palette.windows(2).any(|w| !(w[0].value < w[1].value)) {
            return Err(Error::Config("palette stop values must be strictly increasing".into()));
        }
        if self.scale == Scale::Log && self.palette[0].value <= 0.0 {
            return Err(Error::Config("log scale needs positive palette stops".into()));
        }
        Ok(())
    }

    fn position(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log => v.max(f64::MIN_POSITIVE).log10(),
        }
    }

    /// Color of one value, interpolated between the surrounding stops.
    pub fn color(&self, v: f32) -> [u8; 3] {
        let v = f64::from(v);
        if v.is_nan() || v < self.missing_threshold {
            return self.missing_color;
        }
        let stops = &self.palette;
        let x = self.position(v);
        let first = stops[0];
        if x <= self.position(first.value) {
            return first.color;
        }
        for w in stops.windows(2) {
            let (a, b) = (self.position(w[0].value), self.position(w[1].value));
            if x <= b {
                let f = (x - a) / (b - a);
                return std::array::from_fn(|i| {
                    let (ca, cb) = (f64::from(w[0].color[i]), f64::from(w[1].color[i]));
                    (ca + f * (cb - ca)).round() as u8
                });
            }
        }
        stops[stops.len() - 1].color
    }
}

/// Image of an `n_lat × n_lon` field, north up.
pub fn render_image(field: &[f32], grid: &GeoGrid, spec: &RenderSpec) -> Result<RgbImage> {
    spec.validate()?;
    if field.len() != grid.n_cells() {
        return Err(Error::Shape(format!(
            "field has {} values, grid has {} × {}",
            field.len(),
            grid.n_lat,
            grid.n_lon
        )));
    }
    Ok(RgbImage::from_fn(grid.n_lon as u32, grid.n_lat as u32, |x, y| {
        Rgb(spec.color(field[y as usize * grid.n_lon + x as usize]))
    }))
}

/// Prediction above target, separated by a one-pixel missing-colored row.
pub fn render_pair(pred: &[f32], target: &[f32], grid: &GeoGrid, spec: &RenderSpec) -> Result<RgbImage> {
    let top = render_image(pred, grid, spec)?;
    let bottom = render_image(target, grid, spec)?;
    let (w, h) = (top.width(), top.height());
    let mut out = RgbImage::from_pixel(w, 2 * h + 1, Rgb(spec.missing_color));
    image::imageops::replace(&mut out, &top, 0, 0);
    image::imageops::replace(&mut out, &bottom, 0, i64::from(h) + 1);
    Ok(out)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    PngEncoder::new(&mut bytes).write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?;
    Ok(bytes)
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

pub fn render_map(field: &[f32], grid: &GeoGrid, spec: &RenderSpec, out_path: &Path) -> Result<()> {
    write_png(&render_image(field, grid, spec)?, out_path)
}

/// Global field assembled from the prediction patches whose input step is
/// `t_input`. Cells not covered by any patch are NaN.
pub fn mosaic_predictions<'a>(
    batches: impl IntoIterator<Item = &'a PredictionBatch>,
    grid: &GeoGrid,
    t_input: usize,
) -> Vec<f32> {
    let mut field = vec![f32::NAN; grid.n_cells()];
    for b in batches {
        for (i, m) in b.meta.iter().enumerate().filter(|(_, m)| m.t_input == t_input) {
            let plane = b.plane(i);
            for r in 0..b.patch.min(grid.n_lat.saturating_sub(m.row0)) {
                for c in 0..b.patch.min(grid.n_lon.saturating_sub(m.col0)) {
                    field[(m.row0 + r) * grid.n_lon + m.col0 + c] = plane[r * b.patch + c];
                }
            }
        }
    }
    field
}

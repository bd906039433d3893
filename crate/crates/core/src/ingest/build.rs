use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{Cube, CubeManifest};
use crate::error::{Error, Result};
use crate::grid::GeoGrid;
use crate::time::TimeAxis;

use super::aggregate::{aggregate_8day, PeriodAccumulator};
use super::rasterize::{rasterize_events, RasterizeReport};
use super::regrid::{regrid, FineRaster};
use super::sources::{read_events_csv, read_series_csv, InputSource, RasterSource};
use super::{SpatialKind, VariableSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum VariableOutcome {
    Ok {
        /// Steps with at least one finite value.
        periods_covered: usize,
        nan_fraction: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        rasterize: Option<RasterizeReport>,
    },
    Failed {
        error: String,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub variables: BTreeMap<String, VariableOutcome>,
}

impl BuildReport {
    pub fn failures(&self) -> Vec<&str> {
        self.variables
            .iter()
            .filter(|(_, o)| matches!(o, VariableOutcome::Failed { .. }))
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Ingests every manifest variable from `inputs` into a cube at `root`.
/// A variable whose source is missing or unreadable is reported as failed
/// and the build carries on with the rest.
pub fn build_cube(manifest: &CubeManifest, inputs: &BTreeMap<String, InputSource>, root: &Path) -> Result<BuildReport> {
    let cube = Cube::create(root, manifest.clone())?;
    let mut report = BuildReport::default();
    for var in &manifest.variables {
        let outcome = match inputs.get(&var.name) {
            None => Err(Error::Config(format!("no input source for `{}`", var.name))),
            Some(src) => ingest_variable(&cube, var, src),
        };
        let outcome = outcome.unwrap_or_else(|e| VariableOutcome::Failed { error: e.to_string() });
        report.variables.insert(var.name.clone(), outcome);
    }
    Ok(report)
}

#[derive(Default)]
struct Coverage {
    covered: usize,
    nan: usize,
    total: usize,
}

impl Coverage {
    fn add(&mut self, field: &[f32]) {
        let nan = field.iter().filter(|v| v.is_nan()).count();
        self.covered += usize::from(nan < field.len());
        self.nan += nan;
        self.total += field.len();
    }

    fn outcome(self, rasterize: Option<RasterizeReport>) -> VariableOutcome {
        VariableOutcome::Ok {
            periods_covered: self.covered,
            nan_fraction: if self.total == 0 { 1.0 } else { self.nan as f64 / self.total as f64 },
            rasterize,
        }
    }
}

fn ingest_variable(cube: &Cube, var: &VariableSpec, src: &InputSource) -> Result<VariableOutcome> {
    let grid = *cube.grid();
    let axis = cube.axis();
    match (var.spatial_kind, src) {
        (SpatialKind::Gridded, InputSource::Raster { path }) => {
            let raster = RasterSource::open(path)?;
            let first_day = raster
                .sidecar
                .start_date
                .ok_or_else(|| Error::Config(format!("{}: daily raster needs start_date", path.display())))?;
            if raster.sidecar.shape.len() != 3 {
                return Err(Error::Shape(format!("{}: daily raster must be 3-D", path.display())));
            }
            let arr = cube.create_variable(&var.name)?;
            let fields = (0..axis.len())
                .into_par_iter()
                .map(|step| {
                    let field = composite_period(&raster, var, &grid, axis, step, first_day)?;
                    arr.write_step(step, &field)?;
                    Ok(field)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut cov = Coverage::default();
            fields.iter().for_each(|f| cov.add(f));
            Ok(cov.outcome(None))
        }
        (SpatialKind::StaticMap, InputSource::Raster { path }) => {
            let raster = RasterSource::open(path)?;
            let data = raster.read_field(0)?;
            let fine = FineRaster {
                rows: raster.rows(),
                cols: raster.cols(),
                resolution_deg: raster.sidecar.resolution_deg,
                data: &data,
            };
            let field: Vec<f32> = regrid(&fine, &grid, var.resample)?.into_iter().map(|v| v as f32).collect();
            let arr = cube.create_variable(&var.name)?;
            arr.write_region(&[0, 0], &[grid.n_lat, grid.n_lon], &field)?;
            let mut cov = Coverage::default();
            cov.add(&field);
            Ok(cov.outcome(None))
        }
        (SpatialKind::Gridded, InputSource::Events { path }) => {
            let events = read_events_csv(path)?;
            let (burned, rep) = rasterize_events(&events, &grid, axis);
            let arr = cube.create_variable(&var.name)?;
            let mut cov = Coverage::default();
            for step in 0..axis.len() {
                let field: Vec<f32> = burned.field(step).into_iter().map(|v| v as f32).collect();
                arr.write_step(step, &field)?;
                cov.add(&field);
            }
            Ok(cov.outcome(Some(rep)))
        }
        (SpatialKind::ScalarSeries, InputSource::Series { path }) => {
            let records = read_series_csv(path)?;
            let daily = hold_daily(&records, axis);
            let series: Vec<f32> =
                aggregate_8day(&daily, axis, var.temporal_agg)?.into_iter().map(|v| v as f32).collect();
            let arr = cube.create_variable(&var.name)?;
            arr.write_region(&[0], &[axis.len()], &series)?;
            let covered = series.iter().filter(|v| !v.is_nan()).count();
            Ok(VariableOutcome::Ok {
                periods_covered: covered,
                nan_fraction: 1.0 - covered as f64 / series.len() as f64,
                rasterize: None,
            })
        }
        (kind, src) => Err(Error::Config(format!("source {src:?} cannot feed a {kind:?} variable `{}`", var.name))),
    }
}

/// Composites the fine-resolution days of one period, then regrids.
fn composite_period(
    raster: &RasterSource,
    var: &VariableSpec,
    grid: &GeoGrid,
    axis: &TimeAxis,
    step: usize,
    first_day: chrono::NaiveDate,
) -> Result<Vec<f32>> {
    let period = axis.period(step)?;
    let (rows, cols) = (raster.rows(), raster.cols());
    let mut accs = vec![PeriodAccumulator::new(var.temporal_agg); rows * cols];
    for d in 0..period.length_days as i64 {
        let offset = (period.start - first_day).num_days() + d;
        if offset < 0 || offset as usize >= raster.n_days() {
            continue;
        }
        let day = raster.read_field(offset as usize)?;
        for (acc, v) in accs.iter_mut().zip(day) {
            acc.push(v as f64);
        }
    }
    let composite: Vec<f32> = accs.iter().map(|a| a.finish() as f32).collect();
    let fine = FineRaster { rows, cols, resolution_deg: raster.sidecar.resolution_deg, data: &composite };
    Ok(regrid(&fine, grid, var.resample)?.into_iter().map(|v| v as f32).collect())
}

/// Expands dated records into a daily series over the axis, holding each
/// value until the next record. Days before the first record are NaN.
fn hold_daily(records: &[(chrono::NaiveDate, f64)], axis: &TimeAxis) -> Vec<f64> {
    let mut out = Vec::with_capacity(axis.n_days());
    let mut idx = 0;
    let mut current = f64::NAN;
    let mut day = axis.first_day();
    for _ in 0..axis.n_days() {
        while idx < records.len() && records[idx].0 <= day {
            current = records[idx].1;
            idx += 1;
        }
        out.push(current);
        day = day.succ_opt().expect("date in range");
    }
    out
}

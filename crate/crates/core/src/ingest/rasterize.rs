use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::grid::GeoGrid;
use crate::time::TimeAxis;

/// A point burned-area record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurnEvent {
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
    /// Hectares.
    pub area: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RasterizeReport {
    pub accepted: usize,
    pub skipped: usize,
    pub accepted_area: f64,
}

/// Sparse (step → field) burned-area accumulation; steps without events are
/// all zero.
#[derive(Clone, Debug)]
pub struct BurnedAreaField {
    n_steps: usize,
    n_cells: usize,
    steps: BTreeMap<usize, Vec<f64>>,
}

impl BurnedAreaField {
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Field at `step`, zeros where nothing burned.
    pub fn field(&self, step: usize) -> Vec<f64> {
        self.steps.get(&step).cloned().unwrap_or_else(|| vec![0.0; self.n_cells])
    }

    pub fn get(&self, step: usize, cell: usize) -> f64 {
        self.steps.get(&step).map_or(0.0, |f| f[cell])
    }

    pub fn total(&self) -> f64 {
        self.steps.values().flat_map(|f| f.iter()).sum()
    }
}

/// Deposits each event's area into the cell and period containing it.
/// Events outside the grid/axis, or with non-positive or non-finite area,
/// are skipped and counted.
pub fn rasterize_events(events: &[BurnEvent], grid: &GeoGrid, axis: &TimeAxis) -> (BurnedAreaField, RasterizeReport) {
    let mut field = BurnedAreaField { n_steps: axis.len(), n_cells: grid.n_cells(), steps: BTreeMap::new() };
    let mut report = RasterizeReport::default();
    for ev in events {
        let located = (ev.area > 0.0 && ev.area.is_finite())
            .then(|| Some((axis.date_to_step(ev.date).ok()?, grid.latlon_to_index(ev.lat, ev.lon).ok()?)))
            .flatten();
        match located {
            Some((step, (r, c))) => {
                let f = field.steps.entry(step).or_insert_with(|| vec![0.0; grid.n_cells()]);
                f[r * grid.n_lon + c] += ev.area;
                report.accepted += 1;
                report.accepted_area += ev.area;
            }
            None => report.skipped += 1,
        }
    }
    (field, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(lat: f64, lon: f64, date: &str, area: f64) -> BurnEvent {
        BurnEvent { lat, lon, date: date.parse().unwrap(), area }
    }

    #[test]
    fn empty_and_additive() {
        let grid = GeoGrid::global(1.0).unwrap();
        let axis = TimeAxis::new(2010, 2010).unwrap();
        let (f, rep) = rasterize_events(&[], &grid, &axis);
        assert_eq!(f.total(), 0.0);
        assert_eq!(rep.accepted, 0);
        assert!(f.field(3).iter().all(|&v| v == 0.0));

        let events = [ev(10.2, 20.3, "2010-01-03", 10.0), ev(10.7, 20.9, "2010-01-05", 20.0)];
        let (f, rep) = rasterize_events(&events, &grid, &axis);
        let (r, c) = grid.latlon_to_index(10.5, 20.5).unwrap();
        assert_eq!(f.get(0, r * grid.n_lon + c), 30.0);
        assert_eq!(rep.accepted, 2);
    }

    #[test]
    fn skips_out_of_range() {
        let grid = GeoGrid::global(1.0).unwrap();
        let axis = TimeAxis::new(2010, 2010).unwrap();
        let events = [
            ev(95.0, 0.0, "2010-02-01", 1.0),
            ev(0.0, 0.0, "2011-02-01", 1.0),
            ev(0.0, 0.0, "2010-02-01", 0.0),
            ev(0.0, 0.0, "2010-02-01", 4.0),
        ];
        let (f, rep) = rasterize_events(&events, &grid, &axis);
        assert_eq!((rep.accepted, rep.skipped), (1, 3));
        assert_eq!(f.total(), 4.0);
    }
}

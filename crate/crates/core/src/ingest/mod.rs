//! Raw input harmonization: temporal 8-day compositing, spatial resampling to
//! the cube grid, burned-area event rasterization and the variable registry.

mod aggregate;
mod build;
mod rasterize;
mod regrid;
mod sources;

pub use aggregate::{aggregate_8day, PeriodAccumulator};
pub use build::{build_cube, BuildReport, VariableOutcome};
pub use rasterize::{rasterize_events, BurnEvent, BurnedAreaField, RasterizeReport};
pub use regrid::{regrid, FineRaster};
pub use sources::{read_events_csv, read_series_csv, InputSource, RasterSidecar};

use serde::{Deserialize, Serialize};

/// How daily values are composited into an 8-day period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalAgg {
    Mean,
    Sum,
    Min,
    Max,
    /// Time-invariant field, stored once.
    Static,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialKind {
    Gridded,
    ScalarSeries,
    StaticMap,
}

/// How fine cells are combined into one cube cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Mean,
    Nearest,
    Sum,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub long_name: String,
    pub units: String,
    pub temporal_agg: TemporalAgg,
    pub spatial_kind: SpatialKind,
    pub resample: Resample,
    pub source_tag: String,
}

impl VariableSpec {
    fn new(
        name: &str,
        long_name: &str,
        units: &str,
        temporal_agg: TemporalAgg,
        spatial_kind: SpatialKind,
        resample: Resample,
        source_tag: &str,
    ) -> Self {
        Self {
            name: name.into(),
            long_name: long_name.into(),
            units: units.into(),
            temporal_agg,
            spatial_kind,
            resample,
            source_tag: source_tag.into(),
        }
    }

    /// Human-readable aggregation label stored in `.zattrs`.
    pub fn aggregation_label(&self) -> &'static str {
        match self.temporal_agg {
            TemporalAgg::Mean => "8-day mean",
            TemporalAgg::Sum => "8-day sum",
            TemporalAgg::Min => "8-day min",
            TemporalAgg::Max => "8-day max",
            TemporalAgg::Static => "static",
        }
    }
}

/// Name of the burned-area variable used as the forecasting target.
pub const TARGET_VARIABLE: &str = "gwis_ba";

/// The full cube variable registry.
pub fn default_registry() -> Vec<VariableSpec> {
    use Resample as R;
    use SpatialKind::*;
    use TemporalAgg::*;
    let era5 = |name, long, units, agg| VariableSpec::new(name, long, units, agg, Gridded, R::Mean, "Copernicus ERA5");
    let cems = |name, long, agg| VariableSpec::new(name, long, "unitless", agg, Gridded, R::Mean, "Copernicus CEMS");
    let noaa = |name, long| VariableSpec::new(name, long, "unitless", Mean, ScalarSeries, R::None, "NOAA");
    vec![
        era5("msl", "Mean sea level pressure", "Pa", Mean),
        era5("tp", "Total precipitation", "m", Sum),
        era5("rel_hum", "Relative humidity", "%", Mean),
        era5("vpd", "Vapor Pressure Deficit", "hPa", Mean),
        era5("sst", "Sea Surface Temperature", "K", Mean),
        era5("skt", "Skin temperature", "K", Mean),
        era5("ws10", "Wind speed at 10 meters", "m s-2", Mean),
        era5("t2m_mean", "Temperature at 2 meters - Mean", "K", Mean),
        era5("t2m_min", "Temperature at 2 meters - Min", "K", Min),
        era5("t2m_max", "Temperature at 2 meters - Max", "K", Max),
        era5("ssr", "Surface net solar radiation", "MJ m-2", Mean),
        era5("ssrd", "Surface solar radiation downwards", "MJ m-2", Mean),
        era5("swvl1", "Volumetric soil water level 1", "unitless", Mean),
        cems("drought_code_max", "Drought Code Maximum", Max),
        cems("fwi_max", "Fire Weather Index Maximum", Max),
        cems("fwi_mean", "Fire Weather Index Average", Mean),
        VariableSpec::new(
            "cams_co2fire",
            "Carbon dioxide emissions from wildfires",
            "m-2 kg s-1",
            Sum,
            Gridded,
            R::Sum,
            "Copernicus CAMS",
        ),
        VariableSpec::new("cams_frpfire", "Fire radiative power", "W m-2", Sum, Gridded, R::Sum, "Copernicus CAMS"),
        VariableSpec::new("fcci_ba", "Burned Areas", "ha", Sum, Gridded, R::Sum, "Copernicus FCCI"),
        VariableSpec::new(
            "lst_day",
            "Land Surface temperature at day",
            "K",
            Mean,
            Gridded,
            R::Mean,
            "NASA MODIS MOD11C1 v006",
        ),
        VariableSpec::new("lai", "Leaf Area Index", "unitless", Mean, Gridded, R::Mean, "NASA MODIS MCD15A2H v006"),
        VariableSpec::new(
            "ndvi",
            "Normalized Difference Vegetation Index",
            "unitless",
            Mean,
            Gridded,
            R::Mean,
            "NASA MODIS MOD13C1 v006",
        ),
        VariableSpec::new(
            "pop_dens",
            "Population density",
            "Persons per square kilometers",
            Static,
            StaticMap,
            R::Mean,
            "NASA SEDAC",
        ),
        VariableSpec::new("gfed_ba", "Burned Areas (large fires only)", "ha", Sum, Gridded, R::Sum, "GFED"),
        VariableSpec::new(TARGET_VARIABLE, "Burned Areas", "ha", Sum, Gridded, R::Sum, "GWIS"),
        noaa("oci_wp", "Western Pacific Index"),
        noaa("oci_pna", "Pacific North American Index"),
        noaa("oci_nao", "North Atlantic Oscillation"),
        noaa("oci_soi", "Southern Oscillation Index"),
        noaa("oci_gmsst", "Global Mean Land/Ocean Temperature"),
        noaa("oci_pdo", "Pacific Decadal Oscillation"),
        noaa("oci_ea", "Eastern Asia/Western Russia"),
        noaa("oci_epo", "East Pacific/North Pacific Oscillation"),
        noaa("oci_nino_34", "Nino 3.4 Anomaly"),
    ]
}

/// The eight default input channels of the forecasting dataset, in tensor
/// order.
pub const DEFAULT_INPUT_CHANNELS: [&str; 8] = ["lst_day", "ndvi", "rel_hum", "sst", "t2m_min", "tp", "vpd", "swvl1"];

pub fn registry_lookup(name: &str) -> Option<VariableSpec> {
    default_registry().into_iter().find(|v| v.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_is_consistent() {
        let reg = default_registry();
        let names: HashSet<_> = reg.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names.len(), reg.len());
        for v in &reg {
            if v.temporal_agg == TemporalAgg::Static {
                assert_eq!(v.name, "pop_dens");
            }
            if v.source_tag == "NOAA" {
                assert_eq!(v.spatial_kind, SpatialKind::ScalarSeries);
                assert_eq!(v.resample, Resample::None);
            }
        }
        for ch in DEFAULT_INPUT_CHANNELS {
            assert!(names.contains(ch), "{ch}");
        }
        assert_eq!(registry_lookup("t2m_min").unwrap().temporal_agg, TemporalAgg::Min);
        assert_eq!(registry_lookup(TARGET_VARIABLE).unwrap().units, "ha");
    }
}

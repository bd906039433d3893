//! A datacube: a [`CubeStore`] plus the manifest describing its variables,
//! time axis and grid.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::GeoGrid;
use crate::ingest::{SpatialKind, VariableSpec};
use crate::store::{ArraySpec, CubeStore, ZarrArray};
use crate::time::TimeAxis;

const MANIFEST_KEY: &str = "manifest";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeManifest {
    pub variables: Vec<VariableSpec>,
    pub axis: TimeAxis,
    pub grid: GeoGrid,
    #[serde(default)]
    pub attributes: Map<String, Value>,
}

impl CubeManifest {
    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn array_spec(&self, var: &VariableSpec) -> Result<ArraySpec> {
        let g = &self.grid;
        match var.spatial_kind {
            SpatialKind::Gridded => ArraySpec::gridded(&var.name, self.axis.len(), g.n_lat, g.n_lon),
            SpatialKind::ScalarSeries => ArraySpec::series(&var.name, self.axis.len()),
            SpatialKind::StaticMap => ArraySpec::new(&var.name, vec![g.n_lat, g.n_lon], vec![g.n_lat, g.n_lon]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cube {
    store: CubeStore,
    manifest: CubeManifest,
}

impl Cube {
    pub fn create(root: impl AsRef<Path>, manifest: CubeManifest) -> Result<Self> {
        manifest.grid.validate()?;
        let store = CubeStore::create(root)?;
        let mut attrs = store.attrs()?;
        attrs.insert(MANIFEST_KEY.into(), serde_json::to_value(&manifest)?);
        store.set_attrs(&attrs)?;
        Ok(Self { store, manifest })
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let store = CubeStore::open(root)?;
        let attrs = store.attrs()?;
        let manifest = attrs
            .get(MANIFEST_KEY)
            .cloned()
            .ok_or_else(|| Error::Domain(format!("{} has no cube manifest", store.root().display())))?;
        let manifest: CubeManifest = serde_json::from_value(manifest)?;
        Ok(Self { store, manifest })
    }

    pub fn store(&self) -> &CubeStore {
        &self.store
    }

    pub fn manifest(&self) -> &CubeManifest {
        &self.manifest
    }

    pub fn grid(&self) -> &GeoGrid {
        &self.manifest.grid
    }

    pub fn axis(&self) -> &TimeAxis {
        &self.manifest.axis
    }

    /// Creates (or reopens) the array for `name` and writes its attributes.
    pub fn create_variable(&self, name: &str) -> Result<ZarrArray> {
        let var = self.variable(name)?;
        let arr = self.store.create_array(&self.manifest.array_spec(var)?)?;
        let dims: &[&str] = match var.spatial_kind {
            SpatialKind::Gridded => &["time", "latitude", "longitude"],
            SpatialKind::ScalarSeries => &["time"],
            SpatialKind::StaticMap => &["latitude", "longitude"],
        };
        let mut attrs = Map::new();
        attrs.insert("_ARRAY_DIMENSIONS".into(), serde_json::to_value(dims)?);
        attrs.insert("long_name".into(), var.long_name.clone().into());
        attrs.insert("units".into(), var.units.clone().into());
        attrs.insert("aggregation".into(), var.aggregation_label().into());
        attrs.insert("source".into(), var.source_tag.clone().into());
        arr.set_attrs(&attrs)?;
        Ok(arr)
    }

    pub fn variable(&self, name: &str) -> Result<&VariableSpec> {
        self.manifest.variable(name).ok_or_else(|| Error::Domain(format!("variable `{name}` not in cube manifest")))
    }

    pub fn array(&self, name: &str) -> Result<ZarrArray> {
        self.variable(name)?;
        self.store.open_array(name)
    }

    /// The `(lat, lon)` field of `name` at `step`. Static maps return the
    /// same field for every step.
    pub fn read_field(&self, name: &str, step: usize) -> Result<Vec<f32>> {
        let var = self.variable(name)?;
        let arr = self.store.open_array(name)?;
        match var.spatial_kind {
            SpatialKind::Gridded => arr.read_step(step),
            SpatialKind::StaticMap => arr.read_all(),
            SpatialKind::ScalarSeries => {
                let v = arr.read_region(&[step], &[1])?[0];
                Ok(vec![v; self.manifest.grid.n_cells()])
            }
        }
    }

    /// Checks that every stored array is described by the manifest with a
    /// matching shape.
    pub fn validate(&self) -> Result<()> {
        for name in self.store.array_names()? {
            let var = self.variable(&name)?;
            let arr = self.store.open_array(&name)?;
            let expected = self.manifest.array_spec(var)?;
            if arr.spec().shape != expected.shape {
                return Err(Error::Shape(format!(
                    "`{name}` has shape {:?}, manifest implies {:?}",
                    arr.spec().shape,
                    expected.shape
                )));
            }
        }
        Ok(())
    }
}

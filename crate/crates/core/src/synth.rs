//! Seeded generator of a miniature Earth-like cube.
//!
//! Eight driver channels follow a latitude- and season-dependent cycle plus a
//! per-cell AR(1) anomaly. Burns happen on land only, with probability
//! `sigmoid(b0 + Σ w_k z_k + seasonal + neighborhood)`, where `z_k` is the
//! standardized driver, `seasonal` peaks in each hemisphere's summer and
//! `neighborhood` counts burns in the 3 × 3 window of the previous period.
//! The intercept `b0` is calibrated so the realized global positive rate
//! matches the configured target.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use crate::cube::{Cube, CubeManifest};
use crate::error::{Error, Result};
use crate::grid::GeoGrid;
use crate::ingest::{registry_lookup, DEFAULT_INPUT_CHANNELS, TARGET_VARIABLE};
use crate::rng::{normal, StreamKind, Streams};
use crate::time::{TimeAxis, PERIODS_PER_YEAR};

/// Cube attribute holding the recommended patch size.
pub const PATCH_PX_ATTR: &str = "patch_px";
/// Cube attribute holding the generator's configuration and true link.
pub const WORLD_ATTR: &str = "synthetic_world";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub resolution_deg: f64,
    pub start_year: i32,
    pub years: usize,
    pub n_channels: usize,
    pub target_positive_rate: f64,
    /// Per-step AR(1) coefficient of the driver anomalies.
    pub predictability_decay: f64,
    /// Logit increment per burned cell in the previous period's 3 × 3 window.
    pub neighborhood_weight: f64,
    pub seasonal_weight: f64,
    /// Patch size recorded in the cube for dataset extraction.
    pub patch_px: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            resolution_deg: 2.0,
            start_year: 2001,
            years: 6,
            n_channels: 8,
            target_positive_rate: 0.016,
            predictability_decay: 0.8,
            neighborhood_weight: 0.5,
            seasonal_weight: 0.5,
            patch_px: 32,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        GeoGrid::global(self.resolution_deg)?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.years == 0 {
            return fail("world needs at least one year");
        }
        if !(1..=DEFAULT_INPUT_CHANNELS.len()).contains(&self.n_channels) {
            return fail("n_channels must be between 1 and 8");
        }
        if !(self.target_positive_rate > 0.0 && self.target_positive_rate < 0.5) {
            return fail("target_positive_rate must be in (0, 0.5)");
        }
        if !(self.predictability_decay > 0.0 && self.predictability_decay < 1.0) {
            return fail("predictability_decay must be in (0, 1)");
        }
        if !(self.neighborhood_weight >= 0.0) || !self.seasonal_weight.is_finite() {
            return fail("neighborhood_weight must be >= 0 and seasonal_weight finite");
        }
        if self.patch_px == 0 {
            return fail("patch_px must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> GeoGrid {
        GeoGrid::global(self.resolution_deg).expect("validated resolution")
    }

    pub fn axis(&self) -> TimeAxis {
        TimeAxis::new(self.start_year, self.start_year + self.years as i32 - 1).expect("valid years")
    }

    pub fn channel_names(&self) -> &'static [&'static str] {
        &DEFAULT_INPUT_CHANNELS[..self.n_channels]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Surface {
    Everywhere,
    LandOnly,
    OceanOnly,
}

/// How one standardized latent channel maps to a physical driver.
#[derive(Clone, Copy, Debug)]
struct ChannelDef {
    base: f64,
    scale: f64,
    /// Weight of the standardized value in the burn logit.
    weight: f64,
    /// Seasonal phase offset, radians.
    phase: f64,
    surface: Surface,
}

// lst_day, ndvi, rel_hum, sst, t2m_min, tp, vpd, swvl1
const CHANNELS: [ChannelDef; 8] = [
    ChannelDef { base: 295.0, scale: 8.0, weight: 0.9, phase: 0.0, surface: Surface::LandOnly },
    ChannelDef { base: 0.45, scale: 0.12, weight: -0.6, phase: 1.1, surface: Surface::LandOnly },
    ChannelDef { base: 60.0, scale: 12.0, weight: -0.8, phase: 2.6, surface: Surface::Everywhere },
    ChannelDef { base: 290.0, scale: 3.0, weight: 0.0, phase: 0.4, surface: Surface::OceanOnly },
    ChannelDef { base: 283.0, scale: 6.0, weight: 0.5, phase: 0.3, surface: Surface::Everywhere },
    ChannelDef { base: 0.03, scale: 0.009, weight: -0.7, phase: 3.6, surface: Surface::Everywhere },
    ChannelDef { base: 12.0, scale: 5.0, weight: 0.8, phase: -0.4, surface: Surface::Everywhere },
    ChannelDef { base: 0.25, scale: 0.07, weight: -0.6, phase: 2.2, surface: Surface::LandOnly },
];

/// The generator's true per-channel weights on standardized drivers.
pub fn true_weights(n_channels: usize) -> Vec<f64> {
    CHANNELS[..n_channels].iter().map(|c| c.weight).collect()
}

/// Static land mask: latitude-banded continents, no land poleward of 62°.
pub fn land_mask(grid: &GeoGrid) -> Vec<bool> {
    let mut mask = vec![false; grid.n_cells()];
    for r in 0..grid.n_lat {
        let lat = grid.row_lat(r);
        if lat.abs() > 62.0 {
            continue;
        }
        let phi = lat.to_radians();
        for c in 0..grid.n_lon {
            let lam = grid.col_lon(c).to_radians();
            let v = (2.0 * lam + 0.7).sin() + 0.6 * (3.0 * phi + lam).cos() + 0.35 * (5.0 * lam - 2.0 * phi).sin();
            mask[r * grid.n_lon + c] = v > 0.2;
        }
    }
    mask
}

/// Fields of one generated period.
#[derive(Clone, Debug)]
pub struct PeriodFields {
    pub step: usize,
    /// One `(lat, lon)` field per channel, physical units, NaN where the
    /// channel is undefined (ocean for land products and vice versa).
    pub drivers: Vec<Vec<f32>>,
    /// Driver-and-season part of the burn logit (no intercept, no
    /// neighborhood term); NaN over ocean.
    pub driver_logit: Vec<f64>,
    /// Burned hectares.
    pub burned: Vec<f32>,
}

/// Period-by-period world simulation.
pub struct WorldSimulator {
    cfg: WorldConfig,
    grid: GeoGrid,
    axis: TimeAxis,
    streams: Streams,
    land: Vec<bool>,
    intercept: f64,
    anomalies: Vec<f64>,
    prev_burn: Vec<bool>,
    step: usize,
}

impl WorldSimulator {
    pub fn new(cfg: WorldConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid();
        let mut sim = Self {
            grid,
            axis: cfg.axis(),
            streams: Streams::new(cfg.seed),
            land: land_mask(&grid),
            intercept: 0.0,
            anomalies: vec![0.0; grid.n_cells() * cfg.n_channels],
            prev_burn: vec![false; grid.n_cells()],
            step: 0,
            cfg,
        };
        sim.intercept = sim.calibrate_intercept();
        Ok(sim)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &GeoGrid {
        &self.grid
    }

    pub fn axis(&self) -> &TimeAxis {
        &self.axis
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn land(&self) -> &[bool] {
        &self.land
    }

    /// Hemisphere-aware seasonal angle of `row` in period-of-year `p`.
    fn season_angle(&self, row: usize, p: usize) -> f64 {
        let theta = 2.0 * PI * p as f64 / PERIODS_PER_YEAR as f64;
        if self.grid.row_lat(row) < 0.0 {
            theta + PI
        } else {
            theta
        }
    }

    fn amplitude(&self, row: usize) -> f64 {
        0.4 + 0.6 * (self.grid.row_lat(row).abs() / 60.0).min(1.0)
    }

    /// Advances the anomalies to `step` and returns standardized drivers
    /// (cell-major) and the driver logit for every cell.
    fn latent_step(&mut self, step: usize) -> (Vec<f64>, Vec<f64>) {
        let n_ch = self.cfg.n_channels;
        let rho = self.cfg.predictability_decay;
        let innov = (1.0 - rho * rho).sqrt();
        let p = step % PERIODS_PER_YEAR;
        let streams = &self.streams;
        self.anomalies.par_chunks_mut(n_ch).enumerate().for_each(|(cell, anom)| {
            let mut rng = streams.get(StreamKind::Anomaly, step as u32, cell as u32);
            for a in anom.iter_mut() {
                let eps = normal(&mut rng);
                *a = if step == 0 { eps } else { rho * *a + innov * eps };
            }
        });
        let n_lon = self.grid.n_lon;
        let mut z = vec![0.0; self.grid.n_cells() * n_ch];
        let mut logit = vec![f64::NAN; self.grid.n_cells()];
        for cell in 0..self.grid.n_cells() {
            let row = cell / n_lon;
            let theta = self.season_angle(row, p);
            let amp = self.amplitude(row);
            let mut acc = self.cfg.seasonal_weight * amp * (theta - PI).cos();
            for k in 0..n_ch {
                let def = &CHANNELS[k];
                let zk = amp * (theta - def.phase).cos() + self.anomalies[cell * n_ch + k];
                z[cell * n_ch + k] = zk;
                acc += def.weight * zk;
            }
            if self.land[cell] {
                logit[cell] = acc;
            }
        }
        (z, logit)
    }

    fn neighbors(&self, burn: &[bool], cell: usize) -> u32 {
        let (n_lat, n_lon) = (self.grid.n_lat as i64, self.grid.n_lon as i64);
        let (r, c) = ((cell as i64) / n_lon, (cell as i64) % n_lon);
        let mut n = 0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && rr < n_lat && cc >= 0 && cc < n_lon && burn[(rr * n_lon + cc) as usize] {
                    n += 1;
                }
            }
        }
        n
    }

    /// Burn decision and area draw for every land cell.
    fn burn_step(&self, step: usize, logit: &[f64], intercept: f64, prev: &[bool]) -> (Vec<bool>, Vec<f32>) {
        let nw = self.cfg.neighborhood_weight;
        let streams = &self.streams;
        let out: Vec<(bool, f32)> = (0..self.grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                if !self.land[cell] {
                    return (false, 0.0);
                }
                let mut rng = streams.get(StreamKind::Burn, step as u32, cell as u32);
                let u: f64 = rng.random();
                let area_u: f64 = rng.random();
                let nb = if nw > 0.0 { self.neighbors(prev, cell) } else { 0 };
                let x = intercept + logit[cell] + nw * nb as f64;
                if u < sigmoid(x) {
                    (true, (10.0 + 990.0 * area_u) as f32)
                } else {
                    (false, 0.0)
                }
            })
            .collect();
        out.into_iter().unzip()
    }

    /// Bisection on the intercept so the realized positive rate over all
    /// cells of the first simulated year matches the target.
    fn calibrate_intercept(&mut self) -> f64 {
        let n_steps = PERIODS_PER_YEAR.min(self.axis.len());
        let logits: Vec<Vec<f64>> = (0..n_steps).map(|t| self.latent_step(t).1).collect();
        let n_cells = self.grid.n_cells();
        let rate = |b0: f64| {
            let mut prev = vec![false; n_cells];
            let mut burned = 0usize;
            for (t, logit) in logits.iter().enumerate() {
                let (burn, _) = self.burn_step(t, logit, b0, &prev);
                burned += burn.iter().filter(|&&b| b).count();
                prev = burn;
            }
            burned as f64 / (n_cells * n_steps) as f64
        };
        let (mut lo, mut hi) = (-30.0, 10.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < self.cfg.target_positive_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.anomalies.fill(0.0);
        0.5 * (lo + hi)
    }

    /// Generates the next period, or `None` past the end of the axis.
    pub fn next_period(&mut self) -> Option<PeriodFields> {
        if self.step >= self.axis.len() {
            return None;
        }
        let step = self.step;
        let (z, driver_logit) = self.latent_step(step);
        let prev = std::mem::take(&mut self.prev_burn);
        let (burn, burned) = self.burn_step(step, &driver_logit, self.intercept, &prev);
        self.prev_burn = burn;
        let n_ch = self.cfg.n_channels;
        let drivers = (0..n_ch)
            .map(|k| {
                let def = &CHANNELS[k];
                (0..self.grid.n_cells())
                    .map(|cell| {
                        let defined = match def.surface {
                            Surface::Everywhere => true,
                            Surface::LandOnly => self.land[cell],
                            Surface::OceanOnly => !self.land[cell],
                        };
                        if defined {
                            (def.base + def.scale * z[cell * n_ch + k]) as f32
                        } else {
                            f32::NAN
                        }
                    })
                    .collect()
            })
            .collect();
        self.step += 1;
        Some(PeriodFields { step, drivers, driver_logit, burned })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Summary of a generated world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub intercept: f64,
    pub positive_rate: f64,
    pub land_fraction: f64,
    pub n_steps: usize,
}

/// Generates a world and writes it as a cube at `root`: the configured
/// driver channels plus the burned-area target.
pub fn generate_world(cfg: &WorldConfig, root: &Path) -> Result<WorldSummary> {
    let mut sim = WorldSimulator::new(cfg.clone())?;
    let mut variables = Vec::new();
    for name in cfg.channel_names().iter().chain([&TARGET_VARIABLE]) {
        variables.push(registry_lookup(name).expect("registry variable"));
    }
    let mut attributes = Map::new();
    attributes.insert(PATCH_PX_ATTR.into(), json!(cfg.patch_px));
    attributes.insert(
        WORLD_ATTR.into(),
        json!({
            "config": cfg,
            "true_weights": true_weights(cfg.n_channels),
            "channels": cfg.channel_names(),
            "intercept": sim.intercept(),
        }),
    );
    let manifest = CubeManifest { variables, axis: sim.axis().clone(), grid: *sim.grid(), attributes };
    let cube = Cube::create(root, manifest)?;
    let arrays = cube.manifest().variables.iter().map(|v| cube.create_variable(&v.name)).collect::<Result<Vec<_>>>()?;
    let mut burned_cells = 0usize;
    while let Some(fields) = sim.next_period() {
        for (arr, field) in arrays.iter().zip(&fields.drivers) {
            arr.write_step(fields.step, field)?;
        }
        arrays[arrays.len() - 1].write_step(fields.step, &fields.burned)?;
        burned_cells += fields.burned.iter().filter(|&&v| v > 0.0).count();
    }
    let n_cells = sim.grid().n_cells();
    let n_steps = sim.axis().len();
    Ok(WorldSummary {
        intercept: sim.intercept(),
        positive_rate: burned_cells as f64 / (n_cells * n_steps) as f64,
        land_fraction: sim.land().iter().filter(|&&l| l).count() as f64 / n_cells as f64,
        n_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig { resolution_deg: 4.0, years: 2, ..WorldConfig::default() }
    }

    #[test]
    fn ocean_never_burns() {
        let mut sim = WorldSimulator::new(small()).unwrap();
        let land = sim.land().to_vec();
        while let Some(f) = sim.next_period() {
            for (b, l) in f.burned.iter().zip(&land) {
                assert!(*l || *b == 0.0);
            }
            // land-only channel undefined at sea, sst undefined on land
            for (cell, l) in land.iter().enumerate() {
                assert_eq!(f.drivers[0][cell].is_nan(), !l);
                assert_eq!(f.drivers[3][cell].is_nan(), *l);
            }
        }
    }

    #[test]
    fn land_fraction_is_plausible() {
        let g = GeoGrid::global(1.0).unwrap();
        let m = land_mask(&g);
        let frac = m.iter().filter(|&&l| l).count() as f64 / m.len() as f64;
        assert!((0.2..0.5).contains(&frac), "{frac}");
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            WorldConfig { predictability_decay: 1.0, ..small() },
            WorldConfig { n_channels: 9, ..small() },
            WorldConfig { resolution_deg: 7.0, ..small() },
            WorldConfig { years: 0, ..small() },
        ] {
            assert!(WorldSimulator::new(cfg).is_err());
        }
    }

    /// Mean over land-bearing rows of the cross-cell correlation between the
    /// driver logits of two consecutive periods. Within a row the seasonal
    /// part is constant, so this isolates the anomaly memory.
    fn lag1_row_correlation(cfg: WorldConfig) -> f64 {
        let mut sim = WorldSimulator::new(cfg).unwrap();
        let grid = *sim.grid();
        let a = sim.next_period().unwrap().driver_logit;
        let b = sim.next_period().unwrap().driver_logit;
        let mut corrs = Vec::new();
        for r in 0..grid.n_lat {
            let pairs: Vec<(f64, f64)> =
                (0..grid.n_lon).map(|c| r * grid.n_lon + c).filter(|&i| !a[i].is_nan()).map(|i| (a[i], b[i])).collect();
            if pairs.len() < 20 {
                continue;
            }
            let n = pairs.len() as f64;
            let (ma, mb) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
            let cov: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum();
            let va: f64 = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum();
            let vb: f64 = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum();
            corrs.push(cov / (va * vb).sqrt());
        }
        corrs.iter().sum::<f64>() / corrs.len() as f64
    }

    #[test]
    fn anomaly_memory_follows_decay() {
        let base = WorldConfig { neighborhood_weight: 0.0, ..small() };
        let none = lag1_row_correlation(WorldConfig { predictability_decay: 1e-9, ..base.clone() });
        let strong = lag1_row_correlation(WorldConfig { predictability_decay: 0.8, ..base });
        assert!(none.abs() < 0.1, "{none}");
        assert!((strong - 0.8).abs() < 0.1, "{strong}");
    }
}

//! Power maps: per-region pools of transmit power levels (TPLs).
//!
//! The service area is tiled into regions, each region gets a mean channel
//! gain from a [`ChannelModel`], and every PD-RB level `i` is translated into
//! the TPL `P_i / gain` a device in that region must use to arrive at the
//! base station on that level. Levels whose TPL exceeds the device cap are
//! left out; a region with nothing left has a void pool and stays silent.

mod channel;
pub mod refine;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use channel::{AntennaPattern, Blockage, ChannelModel, Point};

use crate::error::{Error, Result};
use crate::grid::PowerGrid;

/// Relative tolerance for reconstructing an RPL from a pool entry.
pub const RPL_RECONSTRUCTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Area {
    Rectangle { origin: Point, width: f64, height: f64 },
    Disk { center: Point, radius: f64 },
}

impl Area {
    fn bounds(&self) -> (Point, f64, f64) {
        match *self {
            Area::Rectangle { origin, width, height } => (origin, width, height),
            Area::Disk { center, radius } => (
                Point::new(center.x - radius, center.y - radius),
                2.0 * radius,
                2.0 * radius,
            ),
        }
    }

    fn contains(&self, p: Point) -> bool {
        match *self {
            Area::Rectangle { .. } => true,
            Area::Disk { center, radius } => center.distance(p) <= radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub center: Point,
    pub width: f64,
    pub height: f64,
    pub mean_gain: Option<f64>,
}

/// Tiles `area` into a `rows x cols` grid of cells, row-major from the
/// lower-left corner. For a disk, only cells whose center lies inside the
/// disk are kept; ids stay contiguous.
pub fn partition_area(area: &Area, rows: usize, cols: usize) -> Result<Vec<Region>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "partition needs at least one row and column, got {rows}x{cols}"
        )));
    }
    let (origin, width, height) = area.bounds();
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(Error::InvalidParameter("area has no extent".into()));
    }
    let (cw, ch) = (width / cols as f64, height / rows as f64);
    let mut regions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let center = Point::new(origin.x + (c as f64 + 0.5) * cw, origin.y + (r as f64 + 0.5) * ch);
            if area.contains(center) {
                regions.push(Region {
                    id: regions.len(),
                    center,
                    width: cw,
                    height: ch,
                    mean_gain: None,
                });
            }
        }
    }
    Ok(regions)
}

/// Mean gain of `region`, evaluated at its center.
pub fn mean_gain(region: &Region, model: &ChannelModel, bs: Point) -> Result<f64> {
    model.gain(bs, region.center)
}

/// Fills in the mean gain of every region.
pub fn assign_gains(regions: &mut [Region], model: &ChannelModel, bs: Point) -> Result<()> {
    model.validate()?;
    for region in regions.iter_mut() {
        region.mean_gain = Some(mean_gain(region, model, bs)?);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    /// PD-RB level index (0 = weakest) this TPL lands on.
    pub level: usize,
    pub tpl: f64,
}

/// The TPLs available to devices in one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPool {
    #[serde(rename = "id")]
    pub region_id: usize,
    pub center: Point,
    pub mean_gain: f64,
    #[serde(rename = "pool")]
    pub entries: Vec<PoolEntry>,
}

impl PowerPool {
    pub fn is_void(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn average_tpl(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.iter().map(|e| e.tpl).sum::<f64>() / self.entries.len() as f64)
        }
    }

    pub fn levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    /// SHA-256 over the channel model and grid the map was generated from.
    pub channel_model_hash: String,
    pub max_tpl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMap {
    pub grid: PowerGrid,
    pub channel_model: Option<ChannelModel>,
    pub regions: Vec<PowerPool>,
    pub metadata: MapMetadata,
}

fn generation_hash(grid: &PowerGrid, model: Option<&ChannelModel>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(grid).expect("grid serializes"));
    h.update(serde_json::to_vec(&model).expect("channel model serializes"));
    hex::encode(h.finalize())
}

/// Builds the power map: for each region and level, `tpl = P_i / gain`, kept
/// when `tpl <= max_tpl`.
pub fn build_power_map(
    regions: &[Region],
    grid: &PowerGrid,
    model: &ChannelModel,
    max_tpl: f64,
) -> Result<PowerMap> {
    if !(max_tpl > 0.0) {
        return Err(Error::InvalidParameter("max_tpl must be positive".into()));
    }
    let pools = regions
        .iter()
        .map(|r| {
            let gain = r.mean_gain.ok_or_else(|| {
                Error::InvalidInput(format!("region {} has no mean gain assigned", r.id))
            })?;
            if !(gain > 0.0) {
                return Err(Error::InvalidInput(format!("region {} has gain {gain}", r.id)));
            }
            let entries = grid
                .levels()
                .iter()
                .enumerate()
                .map(|(level, &p)| PoolEntry { level, tpl: p / gain })
                .filter(|e| e.tpl <= max_tpl)
                .collect();
            Ok(PowerPool {
                region_id: r.id,
                center: r.center,
                mean_gain: gain,
                entries,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerMap {
        grid: grid.clone(),
        channel_model: Some(model.clone()),
        regions: pools,
        metadata: MapMetadata {
            channel_model_hash: generation_hash(grid, Some(model)),
            max_tpl,
        },
    })
}

/// Partitions, assigns gains, and builds the map in one step.
pub fn generate_power_map(
    area: &Area,
    rows: usize,
    cols: usize,
    model: &ChannelModel,
    bs: Point,
    grid: &PowerGrid,
    max_tpl: f64,
) -> Result<PowerMap> {
    let mut regions = partition_area(area, rows, cols)?;
    assign_gains(&mut regions, model, bs)?;
    build_power_map(&regions, grid, model, max_tpl)
}

impl PowerMap {
    /// A single unit-gain region whose pool is the full level set.
    pub fn uniform(grid: &PowerGrid) -> Self {
        let max_tpl = *grid.levels().last().expect("grid has levels");
        PowerMap {
            grid: grid.clone(),
            channel_model: None,
            regions: vec![PowerPool {
                region_id: 0,
                center: Point::new(0.0, 0.0),
                mean_gain: 1.0,
                entries: grid
                    .levels()
                    .iter()
                    .enumerate()
                    .map(|(level, &tpl)| PoolEntry { level, tpl })
                    .collect(),
            }],
            metadata: MapMetadata {
                channel_model_hash: generation_hash(grid, None),
                max_tpl,
            },
        }
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn pool(&self, region: usize) -> Option<&PowerPool> {
        self.regions.get(region)
    }

    /// Keeps only pool entries whose level satisfies `keep`.
    pub fn retain_levels(&self, keep: impl Fn(usize) -> bool) -> PowerMap {
        let mut out = self.clone();
        for pool in &mut out.regions {
            pool.entries.retain(|e| keep(e.level));
        }
        out
    }

    /// Checks the map against `grid`: one pool per region with contiguous ids,
    /// levels inside the grid, and every TPL landing on its level.
    pub fn validate_against(&self, grid: &PowerGrid) -> Result<()> {
        if self.grid.levels() != grid.levels() {
            return Err(Error::InvalidInput(
                "power map was built for a different level set".into(),
            ));
        }
        for (i, pool) in self.regions.iter().enumerate() {
            if pool.region_id != i {
                return Err(Error::InvalidInput(format!(
                    "region ids must be 0..{}, found {} at position {i}",
                    self.regions.len(),
                    pool.region_id
                )));
            }
            for e in &pool.entries {
                if e.level >= grid.num_levels() {
                    return Err(Error::InvalidInput(format!(
                        "region {i} targets level {} outside the grid",
                        e.level
                    )));
                }
                let rpl = grid.level(e.level);
                if ((e.tpl * pool.mean_gain - rpl) / rpl).abs() > RPL_RECONSTRUCTION_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "region {i} level {} TPL does not reproduce its RPL",
                        e.level
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

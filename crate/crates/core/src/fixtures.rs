//! Synthetic catalog and scenes for tests, benches and demos.
//!
//! Scenes are perfectly separable by NDWI: ocean pixels have green above
//! NIR, land pixels the reverse. A wavy north-south coastline splits each
//! scene, and a no-data wedge fills the top-left corner.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{select_scenes, write_catalog, SceneRecord, Satellite, SelectionPolicy, Tile};
use crate::dataset::CoastalType;
use crate::error::{Error, Result};
use crate::raster::{write_mask, write_raster, BandRole, RasterScene, SegMask};
use crate::seed;

pub const SCENE_WIDTH: usize = 288;
pub const SCENE_HEIGHT: usize = 768;
const WEDGE: usize = 48;
/// Training crops per scene in the fixture run config, kept small so the
/// materialized dataset stays around a hundred megabytes.
pub const FIXTURE_TRAIN_CROPS: usize = 4;

pub fn sandy_tile() -> Tile {
    Tile::new(205, 23)
}

pub fn rocky_tile() -> Tile {
    Tile::new(207, 22)
}

fn tile_center(tile: Tile) -> (f64, f64) {
    if tile == sandy_tile() {
        (53.35, -6.26)
    } else {
        (54.6, -8.5)
    }
}

fn record(id: &str, sat: Satellite, at: &str, tile: Tile, tier: u32, cloud: f64) -> SceneRecord {
    let (lat, lon) = tile_center(tile);
    SceneRecord {
        scene_id: id.to_string(),
        satellite: sat,
        acquired_at: at.parse::<DateTime<Utc>>().expect("fixture timestamp"),
        path: tile.path,
        row: tile.row,
        tier,
        cloud_cover_pct: cloud,
        center_lat: lat,
        center_lon: lon,
        solar_altitude_deg: None,
        altitude_class: None,
    }
}

/// Sixty catalog records over two tiles and the years 2002, 2003 and 2014.
///
/// The first 23 exercise the selection rules (cloud ties, the L7 cutoff,
/// tier and cloud filters); the rest are filtered out or beaten by a
/// lower-cloud record of the same group.
pub fn fixture_catalog() -> Vec<SceneRecord> {
    use Satellite::*;
    let (s, r) = (sandy_tile(), rocky_tile());
    let mut out = vec![
        record("F01", L7, "2002-06-10T11:30:00Z", s, 1, 4.0),
        record("F02", L5, "2002-06-18T11:20:00Z", r, 1, 2.5),
        record("F03", L5, "2002-06-26T11:20:00Z", s, 2, 0.5),
        record("F04", L7, "2002-03-14T11:30:00Z", s, 1, 5.0),
        record("F05", L5, "2002-09-20T11:20:00Z", r, 1, 5.0),
        record("F06", L5, "2002-09-04T11:20:00Z", s, 1, 12.0),
        record("F07", L7, "2002-12-05T11:30:00Z", r, 1, 3.1),
        record("F08", L5, "2002-01-20T11:20:00Z", s, 1, 2.7),
        record("F09", L5, "2002-11-28T11:20:00Z", s, 1, 10.0),
        record("F10", L7, "2003-05-30T11:30:00Z", s, 1, 1.0),
        record("F11", L7, "2003-06-15T11:30:00Z", r, 1, 0.2),
        record("F12", L5, "2003-06-23T11:20:00Z", r, 1, 6.0),
        record("F13", L7, "2003-05-31T11:30:00Z", s, 1, 0.1),
        record("F14", L5, "2003-09-15T11:20:00Z", s, 1, 7.5),
        record("F15", L5, "2003-03-20T11:20:00Z", r, 1, 7.5),
        record("F16", L7, "2003-09-01T11:30:00Z", r, 1, 1.0),
        record("F17", L5, "2003-12-10T11:20:00Z", s, 1, 9.9),
        record("F18", L7, "2003-01-15T11:30:00Z", r, 1, 15.0),
        record("F19", L8, "2014-06-05T11:35:00Z", s, 1, 3.0),
        record("F20", L8, "2014-06-05T11:35:00Z", r, 1, 3.0),
        record("F21", L8, "2014-07-01T11:35:00Z", s, 2, 0.0),
        record("F22", L8, "2014-09-10T11:35:00Z", r, 1, 8.8),
        record("F23", L8, "2014-03-25T11:35:00Z", s, 1, 9.0),
    ];
    for k in 24..=60 {
        let id = format!("F{k:02}");
        let day = 1 + (k % 27);
        out.push(match k % 4 {
            0 => record(&id, L5, &format!("2002-07-{day:02}T11:20:00Z"), s, 2, 1.5),
            1 => record(&id, L5, &format!("2003-10-{day:02}T11:20:00Z"), r, 1, 10.0 + k as f64),
            2 => record(&id, L7, &format!("2003-08-{day:02}T11:30:00Z"), s, 1, 0.5),
            _ => record(&id, L8, &format!("2014-06-{day:02}T11:35:00Z"), s, 1, 5.0 + (k % 5) as f64 * 0.9),
        });
    }
    out
}

/// Selection policy taking two extra scenes from the rocky tile.
pub fn fixture_policy() -> SelectionPolicy {
    let mut p = SelectionPolicy::default();
    p.per_tile_extra.insert(rocky_tile(), 2);
    p
}

pub fn fixture_coastal_types() -> BTreeMap<Tile, CoastalType> {
    BTreeMap::from([(sandy_tile(), CoastalType::Sandy), (rocky_tile(), CoastalType::Rocky)])
}

/// Land and ocean reflectances per band, ordered as [`BandRole::ALL`].
const LAND: [f32; 7] = [0.06, 0.08, 0.09, 0.30, 0.25, 0.15, 295.0];
const OCEAN: [f32; 7] = [0.09, 0.10, 0.05, 0.02, 0.01, 0.005, 288.0];

/// Column of the coastline on `row` for a scene with the given phase.
fn coast_col(width: usize, row: usize, phase: f64) -> f64 {
    width as f64 / 2.0 + 18.0 * (row as f64 / 57.0 + phase).sin() + 6.0 * (row as f64 / 13.0).cos()
}

/// Scene and exact land/ocean mask. Land lies west of the coastline.
pub fn separable_scene(scene_id: &str, width: usize, height: usize, seed: u64) -> (RasterScene, SegMask) {
    let mut rng = seed::derived_rng(seed, scene_id);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let nodata: Vec<bool> = (0..width * height)
        .map(|i| (i / width) + (i % width) < WEDGE)
        .collect();
    let mask = SegMask::from_fn(width, height, |r, c| {
        if r + c < WEDGE {
            SegMask::NODATA
        } else {
            u8::from(c as f64 >= coast_col(width, r, phase))
        }
    })
    .expect("fixture mask codes are valid");
    let bands = BandRole::ALL
        .iter()
        .enumerate()
        .map(|(b, &role)| {
            let plane = (0..width * height)
                .map(|i| {
                    let base = if mask.values()[i] == SegMask::OCEAN { OCEAN[b] } else { LAND[b] };
                    // Multiplicative noise keeps green/NIR on the right side
                    // of each other.
                    base * rng.gen_range(0.9..1.1)
                })
                .collect();
            (role, plane)
        })
        .collect();
    let scene = RasterScene::new(scene_id, width, height, bands, nodata).expect("fixture scene is consistent");
    (scene, mask)
}

/// Files written by [`write_fixture_set`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureSet {
    pub catalog: String,
    pub scene_dir: String,
    pub mask_dir: String,
    pub config: String,
    pub scene_ids: Vec<String>,
}

/// Writes the catalog CSV, a run config using [`FIXTURE_TRAIN_CROPS`], and
/// scenes plus rough masks for every record the fixture policy selects.
pub fn write_fixture_set(dir: &Path, seed: u64) -> Result<FixtureSet> {
    let scene_dir = dir.join("scenes");
    let mask_dir = dir.join("masks");
    for d in [dir, &scene_dir, &mask_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let catalog = fixture_catalog();
    let catalog_path = dir.join("catalog.csv");
    let file = fs::File::create(&catalog_path).map_err(|e| Error::io(&catalog_path, e))?;
    write_catalog(&catalog, file)?;

    let policy = fixture_policy();
    let selected = select_scenes(&crate::catalog::filter_catalog(&catalog, &policy), &policy)?;
    let mut ids = Vec::new();
    for r in &selected {
        let (scene, mask) = separable_scene(&r.scene_id, SCENE_WIDTH, SCENE_HEIGHT, seed);
        write_raster(&scene, &scene_dir.join(&r.scene_id))?;
        write_mask(&mask, &mask_dir.join(&r.scene_id))?;
        ids.push(r.scene_id.clone());
    }

    let config = serde_json::json!({
        "catalog": "catalog.csv",
        "scene_dir": "scenes",
        "mask_dir": "masks",
        "policy": policy,
        "coastal_types": fixture_coastal_types(),
        "crop": { "train_per_scene": FIXTURE_TRAIN_CROPS },
        "seed": seed,
    });
    let config_path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&config)?;
    text.push('\n');
    fs::write(&config_path, text).map_err(|e| Error::io(&config_path, e))?;

    Ok(FixtureSet {
        catalog: catalog_path.display().to_string(),
        scene_dir: scene_dir.display().to_string(),
        mask_dir: mask_dir.display().to_string(),
        config: config_path.display().to_string(),
        scene_ids: ids,
    })
}

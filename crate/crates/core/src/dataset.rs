//! Crop sampling under dataset constraints, flip augmentation, and the
//! JSON-lines dataset manifest.
//!
//! Crops are axis-aligned squares. A test crop contains no no-data pixels and
//! has an ocean fraction (per the rough mask) inside a configured range. A
//! training crop contains no no-data pixels and does not intersect its
//! scene's test crop. One test rectangle is shared by every scene of a tile.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{AltitudeClass, SceneRecord, Tile};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::{read_mask, read_raster, write_mask, write_raster, RasterScene, SegMask};
use crate::seed;

pub const CROP_SIZE: usize = 256;
pub const TRAIN_CROPS_PER_SCENE: usize = 300;
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoastalType {
    Sandy,
    Rocky,
    Unlabeled,
}

impl CoastalType {
    pub fn as_str(self) -> &'static str {
        match self {
            CoastalType::Sandy => "sandy",
            CoastalType::Rocky => "rocky",
            CoastalType::Unlabeled => "unlabeled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSource {
    Rough,
    Precise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub scene_id: String,
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
    pub split: Split,
    pub flip_v: bool,
    pub flip_h: bool,
    pub seed: u64,
}

impl CropSpec {
    pub fn intersects(&self, other: &CropSpec) -> bool {
        self.row0 < other.row0 + other.size
            && other.row0 < self.row0 + self.size
            && self.col0 < other.col0 + other.size
            && other.col0 < self.col0 + self.size
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.size > 0 && self.row0 + self.size <= height && self.col0 + self.size <= width
    }

    /// Bundle name of the materialized crop.
    pub fn name(&self, index: usize) -> String {
        crop_name(&self.scene_id, self.split, index)
    }
}

pub fn crop_name(scene_id: &str, split: Split, index: usize) -> String {
    format!("{scene_id}_{}_{index}", split.as_str())
}

pub fn mask_name(crop: &str) -> String {
    format!("{crop}_mask")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropParams {
    pub size: usize,
    pub train_per_scene: usize,
    pub test_ocean_min: f64,
    pub test_ocean_max: f64,
    pub max_attempts: usize,
}

impl Default for CropParams {
    fn default() -> Self {
        CropParams {
            size: CROP_SIZE,
            train_per_scene: TRAIN_CROPS_PER_SCENE,
            test_ocean_min: 0.40,
            test_ocean_max: 0.60,
            max_attempts: MAX_ATTEMPTS,
        }
    }
}

/// Summed-area tables answering "how many invalid / ocean pixels fall in
/// this window" in constant time.
#[derive(Debug, Clone)]
pub struct WindowCounter {
    width: usize,
    height: usize,
    invalid: Vec<u32>,
    ocean: Vec<u32>,
}

impl WindowCounter {
    /// Invalid pixels are scene no-data plus, when a mask is given, mask
    /// no-data.
    pub fn new(scene: &RasterScene, mask: Option<&SegMask>) -> Result<Self> {
        if let Some(m) = mask {
            if !scene.same_shape(m) {
                return Err(Error::Dimension(format!(
                    "{}: scene is {}x{}, mask is {}x{}",
                    scene.scene_id(),
                    scene.width(),
                    scene.height(),
                    m.width(),
                    m.height()
                )));
            }
        }
        let (w, h) = (scene.width(), scene.height());
        let stride = w + 1;
        let mut invalid = vec![0u32; stride * (h + 1)];
        let mut ocean = vec![0u32; stride * (h + 1)];
        for r in 0..h {
            let mut run_bad = 0u32;
            let mut run_ocean = 0u32;
            for c in 0..w {
                let i = r * w + c;
                let code = mask.map(|m| m.values()[i]);
                run_bad += u32::from(!scene.is_valid(i) || code == Some(SegMask::NODATA));
                run_ocean += u32::from(code == Some(SegMask::OCEAN));
                let o = (r + 1) * stride + c + 1;
                invalid[o] = invalid[o - stride] + run_bad;
                ocean[o] = ocean[o - stride] + run_ocean;
            }
        }
        Ok(WindowCounter {
            width: w,
            height: h,
            invalid,
            ocean,
        })
    }

    fn sum(table: &[u32], stride: usize, r0: usize, c0: usize, size: usize) -> u32 {
        let (r1, c1) = (r0 + size, c0 + size);
        table[r1 * stride + c1] + table[r0 * stride + c0]
            - table[r0 * stride + c1]
            - table[r1 * stride + c0]
    }

    pub fn invalid_in(&self, r0: usize, c0: usize, size: usize) -> u32 {
        Self::sum(&self.invalid, self.width + 1, r0, c0, size)
    }

    pub fn ocean_in(&self, r0: usize, c0: usize, size: usize) -> u32 {
        Self::sum(&self.ocean, self.width + 1, r0, c0, size)
    }

    fn test_ok(&self, r0: usize, c0: usize, p: &CropParams) -> bool {
        if self.invalid_in(r0, c0, p.size) != 0 {
            return false;
        }
        let frac = f64::from(self.ocean_in(r0, c0, p.size)) / (p.size * p.size) as f64;
        (p.test_ocean_min..=p.test_ocean_max).contains(&frac)
    }
}

/// Draws one test window valid in every scene of a tile.
///
/// `counters` must all share dimensions; `scene_id` names the resulting spec.
pub fn sample_test_location(
    counters: &[WindowCounter],
    scene_id: &str,
    params: &CropParams,
    seed: u64,
) -> Result<CropSpec> {
    let first = counters
        .first()
        .ok_or(Error::EmptyInput("no scenes for test location"))?;
    let (w, h) = (first.width, first.height);
    if counters.iter().any(|c| c.width != w || c.height != h) {
        return Err(Error::Dimension(format!(
            "scenes of {scene_id}'s tile differ in size"
        )));
    }
    let infeasible = |attempts| Error::NoFeasibleWindow {
        scene_id: scene_id.to_string(),
        attempts,
    };
    if params.size == 0 || params.size > w || params.size > h {
        return Err(infeasible(0));
    }
    let mut rng = seed::rng(seed);
    for _ in 0..params.max_attempts {
        let r0 = rng.gen_range(0..=h - params.size);
        let c0 = rng.gen_range(0..=w - params.size);
        if counters.iter().all(|c| c.test_ok(r0, c0, params)) {
            return Ok(CropSpec {
                scene_id: scene_id.to_string(),
                row0: r0,
                col0: c0,
                size: params.size,
                split: Split::Test,
                flip_v: false,
                flip_h: false,
                seed,
            });
        }
    }
    Err(infeasible(params.max_attempts))
}

/// Uniformly random valid test window for a single scene, with default
/// crop parameters.
pub fn sample_test_crop(scene: &RasterScene, rough_mask: &SegMask, seed: u64) -> Result<CropSpec> {
    sample_test_crop_with(scene, rough_mask, &CropParams::default(), seed)
}

pub fn sample_test_crop_with(
    scene: &RasterScene,
    rough_mask: &SegMask,
    params: &CropParams,
    seed: u64,
) -> Result<CropSpec> {
    let counter = WindowCounter::new(scene, Some(rough_mask))?;
    sample_test_location(&[counter], scene.scene_id(), params, seed)
}

/// `n` training windows avoiding no-data and the test rectangle, each with
/// independent 50% vertical and horizontal flips.
///
/// The attempt cap applies per crop. Training crops may overlap each other.
pub fn sample_train_crops(
    scene: &RasterScene,
    test_crop: &CropSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<CropSpec>> {
    let params = CropParams {
        size: test_crop.size,
        ..CropParams::default()
    };
    sample_train_crops_with(scene, test_crop, n, &params, seed)
}

pub fn sample_train_crops_with(
    scene: &RasterScene,
    test_crop: &CropSpec,
    n: usize,
    params: &CropParams,
    seed: u64,
) -> Result<Vec<CropSpec>> {
    if n == 0 {
        return Err(Error::OutOfRange("training crop count must be at least 1".into()));
    }
    let counter = WindowCounter::new(scene, None)?;
    let (w, h, size) = (scene.width(), scene.height(), params.size);
    let infeasible = |attempts| Error::NoFeasibleWindow {
        scene_id: scene.scene_id().to_string(),
        attempts,
    };
    if size == 0 || size > w || size > h {
        return Err(infeasible(0));
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut found = None;
        for _ in 0..params.max_attempts {
            let spec = CropSpec {
                scene_id: scene.scene_id().to_string(),
                row0: rng.gen_range(0..=h - size),
                col0: rng.gen_range(0..=w - size),
                size,
                split: Split::Train,
                flip_v: false,
                flip_h: false,
                seed,
            };
            if counter.invalid_in(spec.row0, spec.col0, size) == 0 && !spec.intersects(test_crop) {
                found = Some(spec);
                break;
            }
        }
        let mut spec = found.ok_or_else(|| infeasible(params.max_attempts))?;
        spec.flip_v = rng.gen_bool(0.5);
        spec.flip_h = rng.gen_bool(0.5);
        out.push(spec);
    }
    Ok(out)
}

fn crop_index(spec: &CropSpec, width: usize, i: usize, j: usize) -> usize {
    let s = spec.size;
    let r = spec.row0 + if spec.flip_v { s - 1 - i } else { i };
    let c = spec.col0 + if spec.flip_h { s - 1 - j } else { j };
    r * width + c
}

/// Cuts the window out of scene and mask, applying the same flips to both
/// (vertical first, then horizontal).
pub fn extract_crop(scene: &RasterScene, mask: &SegMask, spec: &CropSpec) -> Result<(RasterScene, SegMask)> {
    if !scene.same_shape(mask) {
        return Err(Error::Dimension(format!(
            "{}: scene and mask sizes differ",
            scene.scene_id()
        )));
    }
    let sub = extract_scene(scene, spec)?;
    let w = scene.width();
    let s = spec.size;
    let mut values = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s {
            values.push(mask.values()[crop_index(spec, w, i, j)]);
        }
    }
    Ok((sub, SegMask::new(s, s, values)?))
}

pub fn extract_scene(scene: &RasterScene, spec: &CropSpec) -> Result<RasterScene> {
    if !spec.fits(scene.width(), scene.height()) {
        return Err(Error::OutOfRange(format!(
            "crop at ({},{}) size {} exceeds {}x{} scene {}",
            spec.row0,
            spec.col0,
            spec.size,
            scene.width(),
            scene.height(),
            scene.scene_id()
        )));
    }
    let w = scene.width();
    let s = spec.size;
    let idx: Vec<usize> = (0..s * s).map(|k| crop_index(spec, w, k / s, k % s)).collect();
    let bands = scene
        .bands()
        .iter()
        .map(|(role, plane)| (*role, idx.iter().map(|&i| plane[i]).collect()))
        .collect();
    let nodata = idx.iter().map(|&i| !scene.is_valid(i)).collect();
    RasterScene::with_nodata_value(scene.scene_id(), s, s, bands, nodata, scene.nodata_value())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub crop: CropSpec,
    pub index: usize,
    pub tile: Tile,
    pub acquired_at: DateTime<Utc>,
    pub altitude_class: AltitudeClass,
    pub coastal_type: CoastalType,
    pub mask_source: MaskSource,
    pub rng_seed: u64,
}

impl ManifestEntry {
    pub fn name(&self) -> String {
        self.crop.name(self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub rng_seed: u64,
}

impl DatasetManifest {
    pub fn tests(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.crop.split == Split::Test)
    }

    pub fn trains(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.crop.split == Split::Train)
    }

    /// Structural audit: one test rectangle per tile, one test crop per
    /// scene, and no training crop overlapping its scene's test crop.
    pub fn validate(&self) -> Result<()> {
        let mut tile_rect: BTreeMap<Tile, (usize, usize, usize)> = BTreeMap::new();
        let mut scene_test: BTreeMap<&str, &CropSpec> = BTreeMap::new();
        for e in self.tests() {
            let rect = (e.crop.row0, e.crop.col0, e.crop.size);
            if *tile_rect.entry(e.tile).or_insert(rect) != rect {
                return Err(Error::Record(format!("tile {} has more than one test location", e.tile)));
            }
            if e.crop.flip_v || e.crop.flip_h {
                return Err(Error::Record(format!("test crop {} is flipped", e.name())));
            }
            if scene_test.insert(&e.crop.scene_id, &e.crop).is_some() {
                return Err(Error::Record(format!("scene {} has two test crops", e.crop.scene_id)));
            }
        }
        for e in self.trains() {
            if let Some(t) = scene_test.get(e.crop.scene_id.as_str()) {
                if e.crop.intersects(t) {
                    return Err(Error::Record(format!("{} overlaps the test crop", e.name())));
                }
            }
        }
        if self.entries.iter().any(|e| e.rng_seed != self.rng_seed) {
            return Err(Error::Record("entries disagree on rng_seed".into()));
        }
        Ok(())
    }

    /// Re-checks the pixel-level constraints of every entry of one scene.
    pub fn validate_scene(&self, scene: &RasterScene, rough: &SegMask, params: &CropParams) -> Result<()> {
        let counter = WindowCounter::new(scene, None)?;
        let with_mask = WindowCounter::new(scene, Some(rough))?;
        for e in self.entries.iter().filter(|e| e.crop.scene_id == scene.scene_id()) {
            let c = &e.crop;
            if !c.fits(scene.width(), scene.height()) {
                return Err(Error::Record(format!("{} out of bounds", e.name())));
            }
            if counter.invalid_in(c.row0, c.col0, c.size) != 0 {
                return Err(Error::Record(format!("{} contains no-data", e.name())));
            }
            if c.split == Split::Test {
                let p = CropParams { size: c.size, ..*params };
                if !with_mask.test_ok(c.row0, c.col0, &p) {
                    return Err(Error::Record(format!("{} violates the ocean ratio", e.name())));
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|e| Error::io("<manifest>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<manifest>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str::<ManifestEntry>(&line)?);
        }
        let rng_seed = entries.first().map(|e| e.rng_seed).unwrap_or(0);
        let m = DatasetManifest { entries, rng_seed };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Supplies full scenes, rough masks and optional precise test masks.
pub trait SceneSource: Sync {
    fn load(&self, record: &SceneRecord) -> Result<(RasterScene, SegMask)>;

    /// Crop-sized precise annotation of the scene's test crop, if any.
    fn precise_test_mask(&self, _record: &SceneRecord) -> Result<Option<SegMask>> {
        Ok(None)
    }
}

/// Scenes at `<scene_dir>/<scene_id>`, rough masks at
/// `<mask_dir>/<scene_id>`, precise test masks at
/// `<mask_dir>/<scene_id>_test_precise`.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub scene_dir: PathBuf,
    pub mask_dir: PathBuf,
}

impl SceneSource for DirSource {
    fn load(&self, record: &SceneRecord) -> Result<(RasterScene, SegMask)> {
        let scene = read_raster(&self.scene_dir.join(&record.scene_id))?;
        let mask = read_mask(&self.mask_dir.join(&record.scene_id))?;
        Ok((scene, mask))
    }

    fn precise_test_mask(&self, record: &SceneRecord) -> Result<Option<SegMask>> {
        let p = self.mask_dir.join(format!("{}_test_precise.json", record.scene_id));
        if p.exists() {
            read_mask(&p).map(Some)
        } else {
            Ok(None)
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions<'a> {
    pub params: CropParams,
    pub coastal_types: BTreeMap<Tile, CoastalType>,
    pub rng_seed: u64,
    /// Materialize crops as bundles here; manifest-only when `None`.
    pub out_dir: Option<&'a Path>,
    pub exec: Exec,
}

/// Samples the whole dataset: one test location per tile, then test and
/// training crops for each scene.
///
/// RNG streams are keyed by tile and scene id, so the manifest does not
/// depend on scheduling or thread count.
pub fn build_dataset(
    records: &[SceneRecord],
    source: &dyn SceneSource,
    opts: &BuildOptions<'_>,
) -> Result<DatasetManifest> {
    let mut by_tile: BTreeMap<Tile, Vec<&SceneRecord>> = BTreeMap::new();
    for r in records {
        if r.altitude_class.is_none() {
            return Err(Error::Record(format!("{} has no altitude class", r.scene_id)));
        }
        by_tile.entry(r.tile()).or_default().push(r);
    }
    for scenes in by_tile.values_mut() {
        scenes.sort_by(|a, b| a.acquired_at.cmp(&b.acquired_at).then(a.scene_id.cmp(&b.scene_id)));
    }

    let mut tests: BTreeMap<Tile, CropSpec> = BTreeMap::new();
    for (tile, scenes) in &by_tile {
        let counters = opts.exec.try_map(scenes, |r| {
            let (scene, mask) = source.load(r)?;
            WindowCounter::new(&scene, Some(&mask))
        })?;
        let seed = seed::derive(opts.rng_seed, &format!("test:{tile}"));
        let spec = sample_test_location(&counters, &scenes[0].scene_id, &opts.params, seed)?;
        tests.insert(*tile, spec);
    }

    let ordered: Vec<&SceneRecord> = by_tile.values().flatten().copied().collect();
    let per_scene = opts.exec.try_map(&ordered, |r| -> Result<Vec<ManifestEntry>> {
        let tile = r.tile();
        let test = CropSpec {
            scene_id: r.scene_id.clone(),
            ..tests[&tile].clone()
        };
        let (scene, rough) = source.load(r)?;
        let train_seed = seed::derive(opts.rng_seed, &format!("train:{}", r.scene_id));
        let trains = sample_train_crops_with(&scene, &test, opts.params.train_per_scene, &opts.params, train_seed)?;

        let precise = source.precise_test_mask(r)?;
        let entry = |crop: CropSpec, index: usize, mask_source: MaskSource| ManifestEntry {
            crop,
            index,
            tile,
            acquired_at: r.acquired_at,
            altitude_class: r.altitude_class.expect("checked above"),
            coastal_type: opts
                .coastal_types
                .get(&tile)
                .copied()
                .unwrap_or(CoastalType::Unlabeled),
            mask_source,
            rng_seed: opts.rng_seed,
        };
        let test_source = if precise.is_some() { MaskSource::Precise } else { MaskSource::Rough };
        let mut entries = vec![entry(test, 0, test_source)];
        entries.extend(
            trains
                .into_iter()
                .enumerate()
                .map(|(i, c)| entry(c, i, MaskSource::Rough)),
        );

        if let Some(dir) = opts.out_dir {
            for e in &entries {
                let (sub, mut mask) = extract_crop(&scene, &rough, &e.crop)?;
                if e.crop.split == Split::Test {
                    if let Some(p) = &precise {
                        if !sub.same_shape(p) {
                            return Err(Error::Dimension(format!(
                                "precise mask for {} is {}x{}, crop is {}",
                                r.scene_id,
                                p.width(),
                                p.height(),
                                e.crop.size
                            )));
                        }
                        mask = p.clone();
                    }
                }
                let name = e.name();
                write_raster(&sub.with_scene_id(name.clone()), &dir.join(&name))?;
                write_mask(&mask, &dir.join(mask_name(&name)))?;
            }
        }
        Ok(entries)
    })?;

    let manifest = DatasetManifest {
        entries: per_scene.into_iter().flatten().collect(),
        rng_seed: opts.rng_seed,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Loads the materialized crop and mask for a manifest entry.
pub fn load_crop(dataset_dir: &Path, entry: &ManifestEntry) -> Result<(RasterScene, SegMask)> {
    let name = entry.name();
    let scene = read_raster(&dataset_dir.join(&name))?;
    let mask = read_mask(&dataset_dir.join(mask_name(&name)))?;
    Ok((scene, mask))
}

//! In-memory scenes and masks plus the Raster Bundle file format.
//!
//! A bundle is a `<name>.json` header next to a `<name>.bin` payload. Scene
//! payloads are little-endian `f32`, band-sequential and row-major. Mask
//! payloads are one `u8` per pixel with codes 0 (land), 1 (ocean) and
//! 255 (no-data).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f32 = -9999.0;

/// Spectral band roster shared by Landsat 5, 7, 8 and 9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandRole {
    Blue,
    Green,
    Red,
    #[serde(rename = "NIR")]
    Nir,
    #[serde(rename = "SWIR1")]
    Swir1,
    #[serde(rename = "SWIR2")]
    Swir2,
    Thermal,
}

impl BandRole {
    pub const ALL: [BandRole; 7] = [
        BandRole::Blue,
        BandRole::Green,
        BandRole::Red,
        BandRole::Nir,
        BandRole::Swir1,
        BandRole::Swir2,
        BandRole::Thermal,
    ];

    /// Stable 1-based roster index.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn from_index(index: usize) -> Option<BandRole> {
        index
            .checked_sub(1)
            .and_then(|i| BandRole::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            BandRole::Blue => "Blue",
            BandRole::Green => "Green",
            BandRole::Red => "Red",
            BandRole::Nir => "NIR",
            BandRole::Swir1 => "SWIR1",
            BandRole::Swir2 => "SWIR2",
            BandRole::Thermal => "Thermal",
        }
    }
}

impl fmt::Display for BandRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BandRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BandRole::ALL
            .iter()
            .copied()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownBand(s.to_string()))
    }
}

/// Multi-band float image with a per-pixel no-data mask.
///
/// Pixels flagged no-data hold the sentinel value in every band, and any
/// pixel carrying the sentinel in every band is flagged, so the flag and the
/// payload always agree.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterScene {
    scene_id: String,
    width: usize,
    height: usize,
    bands: Vec<(BandRole, Vec<f32>)>,
    nodata_mask: Vec<bool>,
    nodata: f32,
}

impl RasterScene {
    pub fn new(
        scene_id: impl Into<String>,
        width: usize,
        height: usize,
        bands: Vec<(BandRole, Vec<f32>)>,
        nodata_mask: Vec<bool>,
    ) -> Result<Self> {
        Self::with_nodata_value(scene_id, width, height, bands, nodata_mask, DEFAULT_NODATA)
    }

    pub fn with_nodata_value(
        scene_id: impl Into<String>,
        width: usize,
        height: usize,
        mut bands: Vec<(BandRole, Vec<f32>)>,
        mut nodata_mask: Vec<bool>,
        nodata: f32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "scene dimensions must be positive, got {width}x{height}"
            )));
        }
        if bands.is_empty() {
            return Err(Error::EmptyInput("scene has no bands"));
        }
        let n = width * height;
        for (i, (role, plane)) in bands.iter().enumerate() {
            if bands[..i].iter().any(|(r, _)| r == role) {
                return Err(Error::DuplicateBand(*role));
            }
            if plane.len() != n {
                return Err(Error::Dimension(format!(
                    "band {role} has {} pixels, expected {n}",
                    plane.len()
                )));
            }
        }
        if nodata_mask.len() != n {
            return Err(Error::Dimension(format!(
                "nodata mask has {} pixels, expected {n}",
                nodata_mask.len()
            )));
        }
        for (i, flag) in nodata_mask.iter_mut().enumerate() {
            if !*flag && bands.iter().all(|(_, p)| p[i] == nodata) {
                *flag = true;
            }
        }
        for (_, plane) in bands.iter_mut() {
            for (v, &flag) in plane.iter_mut().zip(&nodata_mask) {
                if flag {
                    *v = nodata;
                }
            }
        }
        Ok(RasterScene {
            scene_id: scene_id.into(),
            width,
            height,
            bands,
            nodata_mask,
            nodata,
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn with_scene_id(mut self, scene_id: impl Into<String>) -> Self {
        self.scene_id = scene_id.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn nodata_value(&self) -> f32 {
        self.nodata
    }

    pub fn nodata_mask(&self) -> &[bool] {
        &self.nodata_mask
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        !self.nodata_mask[idx]
    }

    pub fn valid_count(&self) -> usize {
        self.nodata_mask.iter().filter(|f| !**f).count()
    }

    pub fn bands(&self) -> &[(BandRole, Vec<f32>)] {
        &self.bands
    }

    pub fn band_roles(&self) -> impl Iterator<Item = BandRole> + '_ {
        self.bands.iter().map(|(r, _)| *r)
    }

    pub fn band(&self, role: BandRole) -> Option<&[f32]> {
        self.bands
            .iter()
            .find(|(r, _)| *r == role)
            .map(|(_, p)| p.as_slice())
    }

    pub fn require_band(&self, role: BandRole) -> Result<&[f32]> {
        self.band(role).ok_or(Error::MissingBand(role))
    }

    /// Swaps in a new plane for `role`. The caller keeps no-data pixels at
    /// the sentinel.
    pub(crate) fn replace_band(&mut self, role: BandRole, plane: Vec<f32>) -> Result<()> {
        debug_assert_eq!(plane.len(), self.pixel_count());
        let slot = self
            .bands
            .iter_mut()
            .find(|(r, _)| *r == role)
            .ok_or(Error::MissingBand(role))?;
        slot.1 = plane;
        Ok(())
    }

    pub fn same_shape(&self, mask: &SegMask) -> bool {
        self.width == mask.width() && self.height == mask.height()
    }
}

/// Binary land/ocean mask with a no-data code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl SegMask {
    pub const LAND: u8 = 0;
    pub const OCEAN: u8 = 1;
    pub const NODATA: u8 = 255;

    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask has {} pixels, expected {}",
                values.len(),
                width * height
            )));
        }
        if let Some(&bad) = values.iter().find(|v| !is_mask_code(**v)) {
            return Err(Error::InvalidMaskCode(bad));
        }
        Ok(SegMask {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, code: u8) -> Result<Self> {
        Self::new(width, height, vec![code; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.width + col]
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.values[idx] != Self::NODATA
    }

    pub fn same_shape(&self, other: &SegMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Swaps land and ocean, leaving no-data untouched.
    pub fn complement(&self) -> SegMask {
        let values = self
            .values
            .iter()
            .map(|&v| match v {
                Self::LAND => Self::OCEAN,
                Self::OCEAN => Self::LAND,
                other => other,
            })
            .collect();
        SegMask {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

fn is_mask_code(v: u8) -> bool {
    matches!(v, SegMask::LAND | SegMask::OCEAN | SegMask::NODATA)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleHeader {
    width: usize,
    height: usize,
    dtype: String,
    bands: Vec<String>,
    nodata: f64,
    scene_id: String,
}

const DTYPE_F32: &str = "f32le";
const DTYPE_U8: &str = "u8";
const MASK_BAND: &str = "mask";

/// Header and payload paths for a bundle. `path` may name the header, the
/// payload, or the common stem.
pub fn bundle_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.as_os_str().to_string_lossy();
    let stem = s
        .strip_suffix(".json")
        .or_else(|| s.strip_suffix(".bin"))
        .unwrap_or(&s);
    (
        PathBuf::from(format!("{stem}.json")),
        PathBuf::from(format!("{stem}.bin")),
    )
}

fn read_header(path: &Path) -> Result<BundleHeader> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: BundleHeader =
        serde_json::from_str(&text).map_err(|e| Error::Header(e.to_string()))?;
    if header.width == 0 || header.height == 0 {
        return Err(Error::Header(format!(
            "dimensions must be positive, got {}x{}",
            header.width, header.height
        )));
    }
    Ok(header)
}

fn write_bundle(path: &Path, header: &BundleHeader, payload: &[u8]) -> Result<()> {
    let (hpath, ppath) = bundle_paths(path);
    let mut text = serde_json::to_string_pretty(header)?;
    text.push('\n');
    fs::write(&hpath, text).map_err(|e| Error::io(&hpath, e))?;
    fs::write(&ppath, payload).map_err(|e| Error::io(&ppath, e))?;
    Ok(())
}

/// Reads the dtype of a bundle without loading its payload.
pub fn bundle_dtype(path: &Path) -> Result<String> {
    Ok(read_header(&bundle_paths(path).0)?.dtype)
}

pub fn read_raster(path: &Path) -> Result<RasterScene> {
    let (hpath, ppath) = bundle_paths(path);
    let header = read_header(&hpath)?;
    if header.dtype != DTYPE_F32 {
        return Err(Error::Header(format!(
            "expected dtype {DTYPE_F32:?} for a scene, found {:?}",
            header.dtype
        )));
    }
    let roles = header
        .bands
        .iter()
        .map(|b| b.parse::<BandRole>())
        .collect::<Result<Vec<_>>>()?;
    for (i, r) in roles.iter().enumerate() {
        if roles[..i].contains(r) {
            return Err(Error::DuplicateBand(*r));
        }
    }
    if roles.is_empty() {
        return Err(Error::Header("no bands listed".into()));
    }
    let payload = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let n = header.width * header.height;
    let expected = n * roles.len() * 4;
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            actual: payload.len(),
        });
    }
    let nodata = header.nodata as f32;
    let bands: Vec<(BandRole, Vec<f32>)> = roles
        .iter()
        .zip(payload.chunks_exact(n * 4))
        .map(|(&role, bytes)| {
            let plane = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            (role, plane)
        })
        .collect();
    let nodata_mask = (0..n)
        .map(|i| bands.iter().all(|(_, p)| p[i] == nodata))
        .collect();
    RasterScene::with_nodata_value(
        header.scene_id,
        header.width,
        header.height,
        bands,
        nodata_mask,
        nodata,
    )
}

pub fn write_raster(scene: &RasterScene, path: &Path) -> Result<()> {
    let header = BundleHeader {
        width: scene.width,
        height: scene.height,
        dtype: DTYPE_F32.into(),
        bands: scene.band_roles().map(|r| r.name().to_string()).collect(),
        nodata: f64::from(scene.nodata),
        scene_id: scene.scene_id.clone(),
    };
    let mut payload = Vec::with_capacity(scene.pixel_count() * scene.bands.len() * 4);
    for (_, plane) in &scene.bands {
        for v in plane {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bundle(path, &header, &payload)
}

pub fn read_mask(path: &Path) -> Result<SegMask> {
    let (hpath, ppath) = bundle_paths(path);
    let header = read_header(&hpath)?;
    if header.dtype != DTYPE_U8 {
        return Err(Error::Header(format!(
            "expected dtype {DTYPE_U8:?} for a mask, found {:?}",
            header.dtype
        )));
    }
    if header.bands.len() != 1 || header.bands[0] != MASK_BAND {
        return Err(Error::Header(format!(
            "mask bundles carry a single band named {MASK_BAND:?}"
        )));
    }
    let payload = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let expected = header.width * header.height;
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            actual: payload.len(),
        });
    }
    SegMask::new(header.width, header.height, payload)
}

pub fn write_mask(mask: &SegMask, path: &Path) -> Result<()> {
    if let Some(&bad) = mask.values.iter().find(|v| !is_mask_code(**v)) {
        return Err(Error::InvalidMaskCode(bad));
    }
    let id = path
        .file_name()
        .map(|s| {
            let s = s.to_string_lossy();
            s.trim_end_matches(".json").trim_end_matches(".bin").to_string()
        })
        .unwrap_or_default();
    let header = BundleHeader {
        width: mask.width,
        height: mask.height,
        dtype: DTYPE_U8.into(),
        bands: vec![MASK_BAND.into()],
        nodata: f64::from(SegMask::NODATA),
        scene_id: id,
    };
    write_bundle(path, &header, &mask.values)
}

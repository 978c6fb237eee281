//! Permutation band importance for in-process predictors and, through a
//! file round-trip, for external ones.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gbdt::{predict_gbdt_with, GbdtModel};
use crate::index::{compute_ndwi_with, threshold_segment, NdwiSegmenter};
use crate::metrics::{confusion, metrics_from_counts};
use crate::raster::{read_mask, read_raster, write_raster, BandRole, RasterScene, SegMask};
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BASELINE_VARIANT: &str = "baseline";

/// Anything that maps a scene to a land/ocean mask deterministically.
pub trait Predictor: Sync {
    fn predict(&self, scene: &RasterScene) -> Result<SegMask>;
}

impl Predictor for NdwiSegmenter {
    fn predict(&self, scene: &RasterScene) -> Result<SegMask> {
        threshold_segment(&compute_ndwi_with(scene, Exec::Sequential)?, self.threshold)
    }
}

impl Predictor for GbdtModel {
    fn predict(&self, scene: &RasterScene) -> Result<SegMask> {
        predict_gbdt_with(self, scene, Exec::Sequential)
    }
}

impl<F> Predictor for F
where
    F: Fn(&RasterScene) -> Result<SegMask> + Sync,
{
    fn predict(&self, scene: &RasterScene) -> Result<SegMask> {
        self(scene)
    }
}

#[derive(Debug, Clone)]
pub struct TestImage {
    pub id: String,
    pub scene: RasterScene,
    pub truth: SegMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandImportance {
    pub band: BandRole,
    /// Accuracy drop in percentage points.
    pub score: f64,
    pub baseline_accuracy: f64,
    pub permuted_accuracy: f64,
    pub seed: u64,
}

/// Copy of `scene` with the valid pixels of `band` shuffled among
/// themselves.
pub fn permute_band(scene: &RasterScene, band: BandRole, seed: u64) -> Result<RasterScene> {
    let plane = scene.require_band(band)?;
    let valid: Vec<usize> = (0..scene.pixel_count()).filter(|&i| scene.is_valid(i)).collect();
    let mut values: Vec<f32> = valid.iter().map(|&i| plane[i]).collect();
    values.shuffle(&mut seed::rng(seed));
    let mut out_plane = plane.to_vec();
    for (&i, v) in valid.iter().zip(values) {
        out_plane[i] = v;
    }
    let mut out = scene.clone();
    out.replace_band(band, out_plane)?;
    Ok(out)
}

/// Seed of the permutation applied to one image and band.
pub fn permutation_seed(master: u64, image_id: &str, band: BandRole, repeat: usize) -> u64 {
    seed::derive(master, &format!("perm:{image_id}:{band}:{repeat}"))
}

fn image_accuracy(id: &str, pred: &SegMask, truth: &SegMask) -> Result<f64> {
    confusion(pred, truth, None)
        .and_then(|c| metrics_from_counts(&c))
        .map(|s| s.accuracy)
        .map_err(|e| Error::Predictor {
            image_id: id.to_string(),
            source: Box::new(e),
        })
}

fn predict_accuracy(predictor: &dyn Predictor, id: &str, scene: &RasterScene, truth: &SegMask) -> Result<f64> {
    let pred = predictor.predict(scene).map_err(|e| Error::Predictor {
        image_id: id.to_string(),
        source: Box::new(e),
    })?;
    image_accuracy(id, &pred, truth)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Folds per-(band, repeat, image) accuracies, laid out band-major, into
/// scores.
fn assemble(baseline: &[f64], permuted: &[f64], n_images: usize, repeats: usize, seed: u64) -> Vec<BandImportance> {
    let base = mean(baseline);
    BandRole::ALL
        .iter()
        .enumerate()
        .map(|(b, &band)| {
            let per_repeat: Vec<f64> = (0..repeats)
                .map(|r| {
                    let start = (b * repeats + r) * n_images;
                    mean(&permuted[start..start + n_images])
                })
                .collect();
            let p = mean(&per_repeat);
            BandImportance {
                band,
                score: (base - p) * 100.0,
                baseline_accuracy: base,
                permuted_accuracy: p,
                seed,
            }
        })
        .collect()
}

pub fn band_importance(predictor: &dyn Predictor, test_set: &[TestImage], seed: u64) -> Result<Vec<BandImportance>> {
    band_importance_with(predictor, test_set, seed, 1, Exec::default())
}

/// Macro accuracy drop for each band, averaging `repeats` independent
/// permutations.
pub fn band_importance_with(
    predictor: &dyn Predictor,
    test_set: &[TestImage],
    seed: u64,
    repeats: usize,
    exec: Exec,
) -> Result<Vec<BandImportance>> {
    if test_set.is_empty() {
        return Err(Error::EmptyInput("no test images for band importance"));
    }
    if repeats == 0 {
        return Err(Error::OutOfRange("repeats must be at least 1".into()));
    }
    let baseline = exec.try_map(test_set, |t| predict_accuracy(predictor, &t.id, &t.scene, &t.truth))?;
    let n = test_set.len();
    let permuted = exec.map_range(BandRole::ALL.len() * repeats * n, |k| {
        let t = &test_set[k % n];
        let r = (k / n) % repeats;
        let band = BandRole::ALL[k / (n * repeats)];
        let scene = permute_band(&t.scene, band, permutation_seed(seed, &t.id, band, r)).map_err(|e| {
            Error::Predictor {
                image_id: t.id.clone(),
                source: Box::new(e),
            }
        })?;
        predict_accuracy(predictor, &t.id, &scene, &t.truth)
    });
    let permuted: Vec<f64> = permuted.into_iter().collect::<Result<_>>()?;
    Ok(assemble(&baseline, &permuted, n, repeats, seed))
}

pub fn variant_name(image_id: &str, variant: &str) -> String {
    format!("{image_id}__{variant}")
}

pub fn perm_variant(band: BandRole) -> String {
    format!("perm_{band}")
}

pub fn prediction_name(image_id: &str, variant: &str) -> String {
    format!("{}_pred", variant_name(image_id, variant))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteImage {
    pub image_id: String,
    /// Variant name to input bundle stem.
    pub inputs: BTreeMap<String, String>,
    /// Variant name to the mask bundle stem expected back.
    pub expected_predictions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub seed: u64,
    pub bands: Vec<BandRole>,
    pub images: Vec<SuiteImage>,
}

fn variants() -> Vec<(String, Option<BandRole>)> {
    std::iter::once((BASELINE_VARIANT.to_string(), None))
        .chain(BandRole::ALL.iter().map(|&b| (perm_variant(b), Some(b))))
        .collect()
}

/// Writes the baseline and seven single-band permutations of every test
/// image, plus a manifest naming the masks to produce.
pub fn export_permuted_suite(test_set: &[TestImage], out_dir: &Path, seed: u64) -> Result<SuiteManifest> {
    export_permuted_suite_with(test_set, out_dir, seed, Exec::default())
}

pub fn export_permuted_suite_with(
    test_set: &[TestImage],
    out_dir: &Path,
    seed: u64,
    exec: Exec,
) -> Result<SuiteManifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let images = exec.try_map(test_set, |t| {
        let mut inputs = BTreeMap::new();
        let mut expected = BTreeMap::new();
        for (variant, band) in variants() {
            let scene = match band {
                None => t.scene.clone(),
                Some(b) => permute_band(&t.scene, b, permutation_seed(seed, &t.id, b, 0))?,
            };
            let stem = variant_name(&t.id, &variant);
            write_raster(&scene.with_scene_id(stem.clone()), &out_dir.join(&stem))?;
            inputs.insert(variant.clone(), stem);
            expected.insert(variant.clone(), prediction_name(&t.id, &variant));
        }
        Ok::<_, Error>(SuiteImage {
            image_id: t.id.clone(),
            inputs,
            expected_predictions: expected,
        })
    })?;
    let manifest = SuiteManifest {
        seed,
        bands: BandRole::ALL.to_vec(),
        images,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads one exported input by manifest stem.
pub fn read_suite_input(suite_dir: &Path, stem: &str) -> Result<RasterScene> {
    read_raster(&suite_dir.join(stem))
}

pub fn read_suite_manifest(suite_dir: &Path) -> Result<SuiteManifest> {
    let path = suite_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Scores externally produced masks named per [`prediction_name`]. With the
/// same predictor and seed this equals [`band_importance`].
pub fn score_external_predictions(pred_dir: &Path, test_set: &[TestImage], seed: u64) -> Result<Vec<BandImportance>> {
    if test_set.is_empty() {
        return Err(Error::EmptyInput("no test images for band importance"));
    }
    let score = |t: &TestImage, variant: &str| -> Result<f64> {
        let pred = read_mask(&pred_dir.join(prediction_name(&t.id, variant)))?;
        image_accuracy(&t.id, &pred, &t.truth)
    };
    let baseline: Vec<f64> = test_set.iter().map(|t| score(t, BASELINE_VARIANT)).collect::<Result<_>>()?;
    let mut permuted = Vec::with_capacity(BandRole::ALL.len() * test_set.len());
    for band in BandRole::ALL {
        for t in test_set {
            permuted.push(score(t, &perm_variant(band))?);
        }
    }
    Ok(assemble(&baseline, &permuted, test_set.len(), 1, seed))
}

pub fn write_importance_csv<W: Write>(rows: &[BandImportance], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<importance>", e))?;
    Ok(())
}

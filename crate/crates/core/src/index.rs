//! Spectral water index and threshold segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::{BandRole, RasterScene, SegMask};

pub const DEFAULT_THRESHOLD: f64 = 0.0;

const ROW_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexKind {
    #[serde(rename = "NDWI")]
    Ndwi,
}

/// Per-pixel index intensity. `None` marks pixels where the index is
/// undefined (no-data input or zero denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexField {
    pub width: usize,
    pub height: usize,
    pub kind: IndexKind,
    pub values: Vec<Option<f64>>,
}

/// `(G - NIR) / (G + NIR)`, evaluated in double precision.
pub fn ndwi(green: f32, nir: f32) -> Option<f64> {
    let (g, n) = (f64::from(green), f64::from(nir));
    let den = g + n;
    if den == 0.0 || !den.is_finite() {
        None
    } else {
        Some((g - n) / den)
    }
}

pub fn compute_ndwi(scene: &RasterScene) -> Result<IndexField> {
    compute_ndwi_with(scene, Exec::default())
}

pub fn compute_ndwi_with(scene: &RasterScene, exec: Exec) -> Result<IndexField> {
    let green = scene.require_band(BandRole::Green)?;
    let nir = scene.require_band(BandRole::Nir)?;
    let mut values = vec![None; scene.pixel_count()];
    exec.for_each_chunk_mut(&mut values, ROW_CHUNK, |ci, out| {
        let base = ci * ROW_CHUNK;
        for (k, v) in out.iter_mut().enumerate() {
            let i = base + k;
            *v = if scene.is_valid(i) { ndwi(green[i], nir[i]) } else { None };
        }
    });
    Ok(IndexField {
        width: scene.width(),
        height: scene.height(),
        kind: IndexKind::Ndwi,
        values,
    })
}

/// Ocean where the index is at or above `threshold`, land below, no-data
/// where undefined.
pub fn threshold_segment(field: &IndexField, threshold: f64) -> Result<SegMask> {
    let values = field
        .values
        .iter()
        .map(|v| match v {
            Some(x) if *x >= threshold => SegMask::OCEAN,
            Some(_) => SegMask::LAND,
            None => SegMask::NODATA,
        })
        .collect();
    SegMask::new(field.width, field.height, values)
}

/// NDWI with a fixed threshold, packaged as a predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdwiSegmenter {
    pub threshold: f64,
}

impl Default for NdwiSegmenter {
    fn default() -> Self {
        NdwiSegmenter {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl NdwiSegmenter {
    pub fn segment(&self, scene: &RasterScene) -> Result<SegMask> {
        threshold_segment(&compute_ndwi(scene)?, self.threshold)
    }
}

/// Rejects scenes that cannot be segmented, naming the missing band.
pub fn check_ndwi_bands(scene: &RasterScene) -> Result<()> {
    for b in [BandRole::Green, BandRole::Nir] {
        if scene.band(b).is_none() {
            return Err(Error::MissingBand(b));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_band(w: usize, h: usize, g: Vec<f32>, n: Vec<f32>) -> RasterScene {
        RasterScene::new("t", w, h, vec![(BandRole::Green, g), (BandRole::Nir, n)], vec![false; w * h]).unwrap()
    }

    #[test]
    fn arithmetic_cases() {
        let v = ndwi(0.3, 0.1).unwrap();
        assert!((v - 0.5).abs() < 1e-7, "{v}");
        assert_eq!(ndwi(0.2, 0.2), Some(0.0));
        assert_eq!(ndwi(0.0, 0.0), None);
    }

    #[test]
    fn threshold_is_inclusive() {
        let field = IndexField {
            width: 3,
            height: 1,
            kind: IndexKind::Ndwi,
            values: vec![Some(0.0), Some(-0.001), None],
        };
        let m = threshold_segment(&field, 0.0).unwrap();
        assert_eq!(m.values(), &[1, 0, 255]);
    }

    #[test]
    fn missing_band_is_an_error() {
        let s = RasterScene::new("t", 1, 1, vec![(BandRole::Green, vec![0.1])], vec![false]).unwrap();
        assert!(matches!(compute_ndwi(&s), Err(Error::MissingBand(BandRole::Nir))));
        assert!(check_ndwi_bands(&s).is_err());
    }

    #[test]
    fn nodata_pixels_are_undefined() {
        let s = RasterScene::new(
            "t",
            2,
            1,
            vec![(BandRole::Green, vec![0.4, 0.4]), (BandRole::Nir, vec![0.1, 0.1])],
            vec![true, false],
        )
        .unwrap();
        let f = compute_ndwi(&s).unwrap();
        assert_eq!(f.values[0], None);
        assert!(f.values[1].unwrap() > 0.0);
    }

    #[test]
    fn separable_halves() {
        let (w, h) = (64, 32);
        let mut g = vec![0.0; w * h];
        let mut n = vec![0.0; w * h];
        for i in 0..w * h {
            let right = i % w >= w / 2;
            g[i] = if right { 0.4 } else { 0.1 };
            n[i] = if right { 0.1 } else { 0.4 };
        }
        let mask = NdwiSegmenter::default().segment(&two_band(w, h, g, n)).unwrap();
        let truth = SegMask::from_fn(w, h, |_, c| u8::from(c >= w / 2)).unwrap();
        assert_eq!(mask, truth);
    }

    #[test]
    fn strategies_agree() {
        let w = 300;
        let g: Vec<f32> = (0..w * w).map(|i| ((i * 37) % 101) as f32 / 100.0).collect();
        let n: Vec<f32> = (0..w * w).map(|i| ((i * 53) % 97) as f32 / 100.0).collect();
        let s = two_band(w, w, g, n);
        assert_eq!(
            compute_ndwi_with(&s, Exec::Sequential).unwrap(),
            compute_ndwi_with(&s, Exec::Parallel).unwrap()
        );
    }

    proptest! {
        #[test]
        fn sign_is_scale_invariant(vals in prop::collection::vec((0.001f32..1.0, 0.001f32..1.0), 1..64), c in 0.01f32..100.0) {
            let n = vals.len();
            let g: Vec<f32> = vals.iter().map(|v| v.0).collect();
            let nir: Vec<f32> = vals.iter().map(|v| v.1).collect();
            let base = NdwiSegmenter::default().segment(&two_band(n, 1, g.clone(), nir.clone())).unwrap();
            let scaled = NdwiSegmenter::default()
                .segment(&two_band(n, 1, g.iter().map(|x| x * c).collect(), nir.iter().map(|x| x * c).collect()))
                .unwrap();
            // Rounding can only collapse pairs that are within an ulp; skip those.
            for i in 0..n {
                let close = (g[i] - nir[i]).abs() <= f32::EPSILON * g[i].max(nir[i]) * 4.0;
                if !close {
                    prop_assert_eq!(base.values()[i], scaled.values()[i]);
                }
            }
        }

        #[test]
        fn swapping_bands_negates(g in 0.001f32..1.0, n in 0.001f32..1.0) {
            let a = ndwi(g, n).unwrap();
            let b = ndwi(n, g).unwrap();
            prop_assert_eq!(a, -b);
        }
    }
}

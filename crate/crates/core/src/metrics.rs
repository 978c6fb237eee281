//! Segmentation metrics: confusion counts, coastline-buffered scores, edge
//! maps, Pratt's Figure of Merit, and stratified macro-averaged reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::{AltitudeClass, Tile};
use crate::dataset::{CoastalType, ManifestEntry};
use crate::edt::squared_edt_with;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::SegMask;

pub const DEFAULT_BUFFER_RADIUS: f64 = 10.0;
pub const DEFAULT_FOM_ALPHA: f64 = 1.0 / 9.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_shape(a: &SegMask, b: &SegMask) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "masks are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

/// Counts over pixels valid in both masks, optionally restricted to
/// `region`.
pub fn confusion(pred: &SegMask, truth: &SegMask, region: Option<&[bool]>) -> Result<ConfusionCounts> {
    check_shape(pred, truth)?;
    if let Some(r) = region {
        if r.len() != truth.len() {
            return Err(Error::Dimension(format!(
                "region has {} pixels, masks have {}",
                r.len(),
                truth.len()
            )));
        }
    }
    let mut c = ConfusionCounts::default();
    for (i, (&p, &t)) in pred.values().iter().zip(truth.values()).enumerate() {
        if p == SegMask::NODATA || t == SegMask::NODATA || region.is_some_and(|r| !r[i]) {
            continue;
        }
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Accuracy, precision, recall and F1.
///
/// With no predicted positives, precision is 1 when there are also no false
/// negatives and 0 otherwise; recall mirrors this with no actual positives.
/// F1 is 0 when precision and recall are both 0.
pub fn metrics_from_counts(c: &ConfusionCounts) -> Result<Scores> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyRegion);
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let accuracy = (tp + tn) / total as f64;
    let precision = if c.tp + c.fp == 0 {
        if c.fn_ == 0 { 1.0 } else { 0.0 }
    } else {
        tp / (tp + fp)
    };
    let recall = if c.tp + c.fn_ == 0 {
        if c.fp == 0 { 1.0 } else { 0.0 }
    } else {
        tp / (tp + fn_)
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Scores {
        accuracy,
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub edge: Vec<bool>,
}

impl EdgeMap {
    pub fn count(&self) -> usize {
        self.edge.iter().filter(|e| **e).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.edge.iter().any(|e| *e)
    }
}

const NEIGHBORS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn neighbors(w: usize, h: usize, r: usize, c: usize) -> impl Iterator<Item = usize> {
    NEIGHBORS.iter().filter_map(move |&(dr, dc)| {
        let rr = r.checked_add_signed(dr)?;
        let cc = c.checked_add_signed(dc)?;
        (rr < h && cc < w).then_some(rr * w + cc)
    })
}

/// Edge pixels: valid pixels with an in-bounds 4-neighbour of a different
/// class.
///
/// For the gradient, a no-data pixel takes the strict majority class of its
/// valid 4-neighbours and is skipped on a tie or when it has none, which
/// keeps edges identical under complementing. No-data pixels are never
/// edges themselves.
pub fn derive_edges(mask: &SegMask) -> EdgeMap {
    let (w, h) = (mask.width(), mask.height());
    let v = mask.values();
    let filled: Vec<Option<u8>> = (0..w * h)
        .map(|i| {
            if v[i] != SegMask::NODATA {
                return Some(v[i]);
            }
            let (mut land, mut ocean) = (0, 0);
            for j in neighbors(w, h, i / w, i % w) {
                match v[j] {
                    SegMask::LAND => land += 1,
                    SegMask::OCEAN => ocean += 1,
                    _ => {}
                }
            }
            match land.cmp(&ocean) {
                std::cmp::Ordering::Greater => Some(SegMask::LAND),
                std::cmp::Ordering::Less => Some(SegMask::OCEAN),
                std::cmp::Ordering::Equal => None,
            }
        })
        .collect();
    let edge = (0..w * h)
        .map(|i| {
            v[i] != SegMask::NODATA
                && neighbors(w, h, i / w, i % w)
                    .any(|j| filled[j].is_some_and(|x| x != v[i]))
        })
        .collect();
    EdgeMap {
        width: w,
        height: h,
        edge,
    }
}

fn check_edge_shape(a: &EdgeMap, b: &EdgeMap) -> Result<()> {
    if a.width == b.width && a.height == b.height {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "edge maps are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

/// Pratt's Figure of Merit of detected edges against actual edges.
///
/// Both maps empty scores 1; exactly one empty scores 0.
pub fn fom(pred_edges: &EdgeMap, truth_edges: &EdgeMap, alpha: f64) -> Result<f64> {
    fom_with(pred_edges, truth_edges, alpha, Exec::default())
}

pub fn fom_with(pred_edges: &EdgeMap, truth_edges: &EdgeMap, alpha: f64, exec: Exec) -> Result<f64> {
    check_edge_shape(pred_edges, truth_edges)?;
    if !(alpha > 0.0) {
        return Err(Error::OutOfRange(format!("FOM alpha must be positive, got {alpha}")));
    }
    let (ne, ng) = (pred_edges.count(), truth_edges.count());
    match (ne, ng) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let d2 = squared_edt_with(&truth_edges.edge, truth_edges.width, truth_edges.height, exec)
        .expect("truth edges are nonempty");
    // Row-major summation keeps the result independent of partitioning.
    let sum: f64 = pred_edges
        .edge
        .iter()
        .zip(&d2)
        .filter(|(e, _)| **e)
        .map(|(_, d)| 1.0 / (1.0 + alpha * d))
        .sum();
    Ok(sum / ne.max(ng) as f64)
}

/// Pixels within Euclidean distance `radius` of a truth edge pixel.
pub fn coastline_buffer(truth_edges: &EdgeMap, radius: f64) -> Vec<bool> {
    coastline_buffer_with(truth_edges, radius, Exec::default())
}

pub fn coastline_buffer_with(truth_edges: &EdgeMap, radius: f64, exec: Exec) -> Vec<bool> {
    let r2 = radius.max(0.0).powi(2);
    match squared_edt_with(&truth_edges.edge, truth_edges.width, truth_edges.height, exec) {
        Some(d2) => d2.into_iter().map(|d| d <= r2).collect(),
        None => vec![false; truth_edges.width * truth_edges.height],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub buffer_radius: f64,
    pub fom_alpha: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            buffer_radius: DEFAULT_BUFFER_RADIUS,
            fom_alpha: DEFAULT_FOM_ALPHA,
        }
    }
}

/// Grouping labels of a test image.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strata {
    pub tile: Option<Tile>,
    pub decade: Option<i32>,
    pub altitude_class: Option<AltitudeClass>,
    pub coastal_type: Option<CoastalType>,
}

impl Strata {
    pub fn from_entry(e: &ManifestEntry) -> Self {
        Strata {
            tile: Some(e.tile),
            decade: Some(decade_of(e.acquired_at)),
            altitude_class: Some(e.altitude_class),
            coastal_type: Some(e.coastal_type),
        }
    }
}

pub fn decade_of(t: DateTime<Utc>) -> i32 {
    t.year().div_euclid(10) * 10
}

/// Per-image evaluation. Buffered scores are `None` when the ground truth
/// has no coastline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub image_id: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fom: f64,
    pub buffered_accuracy: Option<f64>,
    pub buffered_precision: Option<f64>,
    pub buffered_recall: Option<f64>,
    pub buffered_f1: Option<f64>,
    pub tile: Option<Tile>,
    pub decade: Option<i32>,
    pub altitude_class: Option<AltitudeClass>,
    pub coastal_type: Option<CoastalType>,
}

impl MetricRow {
    pub fn with_strata(mut self, image_id: impl Into<String>, s: &Strata) -> Self {
        self.image_id = image_id.into();
        self.tile = s.tile;
        self.decade = s.decade;
        self.altitude_class = s.altitude_class;
        self.coastal_type = s.coastal_type;
        self
    }

    pub fn strata(&self) -> Strata {
        Strata {
            tile: self.tile,
            decade: self.decade,
            altitude_class: self.altitude_class,
            coastal_type: self.coastal_type,
        }
    }

    pub fn buffered(&self) -> Option<Scores> {
        Some(Scores {
            accuracy: self.buffered_accuracy?,
            precision: self.buffered_precision?,
            recall: self.buffered_recall?,
            f1: self.buffered_f1?,
        })
    }
}

pub fn evaluate_image(pred: &SegMask, truth: &SegMask) -> Result<MetricRow> {
    evaluate_image_with(pred, truth, &EvalParams::default(), Exec::default())
}

pub fn evaluate_image_with(pred: &SegMask, truth: &SegMask, params: &EvalParams, exec: Exec) -> Result<MetricRow> {
    check_shape(pred, truth)?;
    let overall = metrics_from_counts(&confusion(pred, truth, None)?)?;
    let truth_edges = derive_edges(truth);
    let pred_edges = derive_edges(pred);
    let buffer = coastline_buffer_with(&truth_edges, params.buffer_radius, exec);
    let buffered = match metrics_from_counts(&confusion(pred, truth, Some(&buffer))?) {
        Ok(s) => Some(s),
        Err(Error::EmptyRegion) => None,
        Err(e) => return Err(e),
    };
    let fom = fom_with(&pred_edges, &truth_edges, params.fom_alpha, exec)?;
    Ok(MetricRow {
        image_id: String::new(),
        accuracy: overall.accuracy,
        precision: overall.precision,
        recall: overall.recall,
        f1: overall.f1,
        fom,
        buffered_accuracy: buffered.map(|s| s.accuracy),
        buffered_precision: buffered.map(|s| s.precision),
        buffered_recall: buffered.map(|s| s.recall),
        buffered_f1: buffered.map(|s| s.f1),
        tile: None,
        decade: None,
        altitude_class: None,
        coastal_type: None,
    })
}

/// One image to evaluate, with its labels.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub image_id: String,
    pub pred: SegMask,
    pub truth: SegMask,
    pub strata: Strata,
}

/// Evaluates images in parallel; rows keep input order.
pub fn evaluate_batch(items: &[EvalItem], params: &EvalParams, exec: Exec) -> Result<Vec<MetricRow>> {
    // Parallelism is across images; each image runs sequentially.
    exec.try_map(items, |it| {
        evaluate_image_with(&it.pred, &it.truth, params, Exec::Sequential)
            .map(|row| row.with_strata(it.image_id.clone(), &it.strata))
            .map_err(|e| Error::Predictor {
                image_id: it.image_id.clone(),
                source: Box::new(e),
            })
    })
}

/// Unweighted means over a group of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fom: f64,
    /// Images contributing to the buffered means.
    pub buffered_n: usize,
    pub buffered_accuracy: Option<f64>,
    pub buffered_precision: Option<f64>,
    pub buffered_recall: Option<f64>,
    pub buffered_f1: Option<f64>,
}

fn mean_of(rows: &[&MetricRow]) -> MeanMetrics {
    let n = rows.len();
    let mean = |f: &dyn Fn(&MetricRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n as f64;
    let buffered: Vec<Scores> = rows.iter().filter_map(|r| r.buffered()).collect();
    let bn = buffered.len();
    let bmean = |f: &dyn Fn(&Scores) -> f64| {
        (bn > 0).then(|| buffered.iter().map(f).sum::<f64>() / bn as f64)
    };
    MeanMetrics {
        n,
        accuracy: mean(&|r| r.accuracy),
        precision: mean(&|r| r.precision),
        recall: mean(&|r| r.recall),
        f1: mean(&|r| r.f1),
        fom: mean(&|r| r.fom),
        buffered_n: bn,
        buffered_accuracy: bmean(&|s| s.accuracy),
        buffered_precision: bmean(&|s| s.precision),
        buffered_recall: bmean(&|s| s.recall),
        buffered_f1: bmean(&|s| s.f1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub value: String,
    #[serde(flatten)]
    pub means: MeanMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: MeanMetrics,
    pub by_tile: Vec<GroupSummary>,
    pub by_decade: Vec<GroupSummary>,
    pub by_altitude: Vec<GroupSummary>,
    pub by_coastal_type: Vec<GroupSummary>,
}

fn group_by<K: Ord, F: Fn(&MetricRow) -> Option<K>>(
    rows: &[&MetricRow],
    key: F,
    label: impl Fn(&K) -> String,
) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<K, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        if let Some(k) = key(r) {
            groups.entry(k).or_default().push(r);
        }
    }
    groups
        .iter()
        .map(|(k, g)| GroupSummary {
            value: label(k),
            means: mean_of(g),
        })
        .collect()
}

/// Macro-averages rows overall and per stratum. Rows are folded in image-id
/// order, groups listed in key order; rows lacking a label are left out of
/// that stratum.
pub fn aggregate_report(rows: &[MetricRow]) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no metric rows to aggregate"));
    }
    let mut sorted: Vec<&MetricRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(EvalReport {
        overall: mean_of(&sorted),
        by_tile: group_by(&sorted, |r| r.tile, |t| t.to_string()),
        by_decade: group_by(&sorted, |r| r.decade, |d| d.to_string()),
        by_altitude: group_by(&sorted, |r| r.altitude_class, |a| a.to_string()),
        by_coastal_type: group_by(&sorted, |r| r.coastal_type, |c| c.as_str().to_string()),
    })
}

pub fn write_rows_csv<W: Write>(rows: &[MetricRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<rows>", e))?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Side-by-side tables across methods: overall scores, buffered scores, and
/// accuracy per tile, decade, altitude class and coastal type.
///
/// Returns `(file stem, CSV text)` pairs. Group sizes come from the first
/// method.
pub fn comparison_tables(methods: &[(String, EvalReport)]) -> Vec<(String, String)> {
    let mut out = Vec::new();

    let mut overall = String::from("method,n,accuracy,precision,recall,f1,fom\n");
    let mut buffered = String::from("method,n,accuracy,precision,recall,f1\n");
    for (name, rep) in methods {
        let m = &rep.overall;
        let _ = writeln!(
            overall,
            "{name},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            m.n, m.accuracy, m.precision, m.recall, m.f1, m.fom
        );
        let _ = writeln!(
            buffered,
            "{name},{},{},{},{},{}",
            m.buffered_n,
            fmt_opt(m.buffered_accuracy),
            fmt_opt(m.buffered_precision),
            fmt_opt(m.buffered_recall),
            fmt_opt(m.buffered_f1)
        );
    }
    out.push(("overall".to_string(), overall));
    out.push(("buffered".to_string(), buffered));

    type Groups = fn(&EvalReport) -> &Vec<GroupSummary>;
    let strata: [(&str, &str, Groups); 4] = [
        ("by_tile", "tile", |r| &r.by_tile),
        ("by_decade", "decade", |r| &r.by_decade),
        ("by_altitude", "altitude", |r| &r.by_altitude),
        ("by_type", "type", |r| &r.by_coastal_type),
    ];
    for (stem, col, get) in strata {
        let mut values: Vec<&str> = Vec::new();
        for (_, rep) in methods {
            for g in get(rep) {
                if !values.contains(&g.value.as_str()) {
                    values.push(&g.value);
                }
            }
        }
        let mut text = format!("{col},n");
        for (name, _) in methods {
            let _ = write!(text, ",{name}");
        }
        text.push('\n');
        for v in values {
            let n = methods
                .first()
                .and_then(|(_, r)| get(r).iter().find(|g| g.value == v))
                .map(|g| g.means.n)
                .unwrap_or(0);
            let _ = write!(text, "\"{v}\",{n}");
            for (_, rep) in methods {
                let acc = get(rep).iter().find(|g| g.value == v).map(|g| g.means.accuracy);
                let _ = write!(text, ",{}", fmt_opt(acc));
            }
            text.push('\n');
        }
        out.push((stem.to_string(), text));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, f: impl FnMut(usize, usize) -> u8) -> SegMask {
        SegMask::from_fn(w, h, f).unwrap()
    }

    #[test]
    fn identical_masks() {
        let t = mask(10, 10, |r, _| u8::from(r < 4));
        let c = confusion(&t, &t, None).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 40, tn: 60, fp: 0, fn_: 0 });
        let s = metrics_from_counts(&c).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
        let inv = confusion(&t.complement(), &t, None).unwrap();
        assert_eq!((inv.tp, inv.tn), (0, 0));
    }

    #[test]
    fn count_conventions() {
        let s = metrics_from_counts(&ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 0 }).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        let s = metrics_from_counts(&ConfusionCounts { tp: 0, fp: 0, fn_: 5, tn: 0 }).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = metrics_from_counts(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 9 }).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(matches!(metrics_from_counts(&ConfusionCounts::default()), Err(Error::EmptyRegion)));
    }

    #[test]
    fn nodata_excluded_and_shapes_checked() {
        let a = SegMask::new(3, 1, vec![1, 255, 0]).unwrap();
        let b = SegMask::new(3, 1, vec![1, 1, 255]).unwrap();
        assert_eq!(confusion(&a, &b, None).unwrap().total(), 1);
        let c = SegMask::filled(1, 3, 0).unwrap();
        assert!(matches!(confusion(&a, &c, None), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_mask_has_no_edges() {
        assert!(derive_edges(&SegMask::filled(9, 7, 0).unwrap()).is_empty());
    }

    #[test]
    fn half_split_edges_are_two_columns() {
        let m = mask(8, 8, |_, c| u8::from(c >= 4));
        let e = derive_edges(&m);
        assert_eq!(e.count(), 16);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(e.edge[r * 8 + c], c == 3 || c == 4);
            }
        }
    }

    #[test]
    fn isolated_pixel_edges() {
        let m = mask(5, 5, |r, c| u8::from(r == 2 && c == 2));
        let e = derive_edges(&m);
        let expected = [(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)];
        assert_eq!(e.count(), 5);
        for (r, c) in expected {
            assert!(e.edge[r * 5 + c]);
        }
        // Corner pixel: only two in-bounds neighbours.
        let m = mask(5, 5, |r, c| u8::from(r == 0 && c == 0));
        assert_eq!(derive_edges(&m).count(), 3);
    }

    #[test]
    fn nodata_takes_neighbour_majority() {
        // Column of land, nodata, ocean, ocean with land on both sides of the
        // no-data pixel: it has three land neighbours and one ocean one, so
        // it reads as land and the ocean pixel below it becomes an edge.
        let m = SegMask::new(3, 3, vec![0, 0, 0, 0, 255, 0, 1, 1, 1]).unwrap();
        let e = derive_edges(&m);
        assert!(e.edge[7]);
        assert!(!e.edge[4]);
        // One land and one ocean neighbour: a tie, so no gradient through it.
        let m = SegMask::new(4, 1, vec![0, 255, 1, 1]).unwrap();
        assert!(derive_edges(&m).is_empty());
        // A no-data island with no valid neighbours contributes nothing.
        let m = SegMask::new(1, 1, vec![255]).unwrap();
        assert!(derive_edges(&m).is_empty());
    }

    #[test]
    fn complement_has_same_edges() {
        let m = mask(20, 15, |r, c| u8::from((r * 3 + c * c) % 7 < 3));
        assert_eq!(derive_edges(&m), derive_edges(&m.complement()));
    }

    fn single(w: usize, h: usize, r: usize, c: usize) -> EdgeMap {
        let mut edge = vec![false; w * h];
        edge[r * w + c] = true;
        EdgeMap { width: w, height: h, edge }
    }

    #[test]
    fn fom_hand_cases() {
        let t = single(9, 9, 4, 1);
        assert_eq!(fom(&t, &t, DEFAULT_FOM_ALPHA).unwrap(), 1.0);
        let p = single(9, 9, 4, 4);
        let v = fom(&p, &t, DEFAULT_FOM_ALPHA).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "{v}");
        let empty = EdgeMap { width: 9, height: 9, edge: vec![false; 81] };
        assert_eq!(fom(&empty, &empty, DEFAULT_FOM_ALPHA).unwrap(), 1.0);
        assert_eq!(fom(&empty, &t, DEFAULT_FOM_ALPHA).unwrap(), 0.0);
        assert_eq!(fom(&t, &empty, DEFAULT_FOM_ALPHA).unwrap(), 0.0);
        assert!(fom(&t, &t, 0.0).is_err());
        assert!(fom(&t, &single(3, 3, 0, 0), DEFAULT_FOM_ALPHA).is_err());
    }

    #[test]
    fn buffer_disk_and_radius_zero() {
        let e = single(21, 21, 10, 10);
        assert_eq!(coastline_buffer(&e, 10.0).iter().filter(|b| **b).count(), 317);
        let m = mask(12, 12, |r, c| u8::from(r + c > 11));
        let edges = derive_edges(&m);
        assert_eq!(coastline_buffer(&edges, 0.0), edges.edge);
        let none = EdgeMap { width: 4, height: 4, edge: vec![false; 16] };
        assert!(coastline_buffer(&none, 10.0).iter().all(|b| !b));
    }

    #[test]
    fn shifted_boundary_hurts_buffer_more() {
        let truth = mask(64, 64, |_, c| u8::from(c >= 32));
        let pred = mask(64, 64, |_, c| u8::from(c >= 33));
        let row = evaluate_image(&pred, &truth).unwrap();
        assert!(row.buffered_accuracy.unwrap() < row.accuracy);
        assert_eq!(row.accuracy, 1.0 - 64.0 / 4096.0);
        // Buffer spans columns 21..=41, i.e. 21 columns.
        assert_eq!(row.buffered_accuracy.unwrap(), 1.0 - 1.0 / 22.0);

        let same = evaluate_image(&truth, &truth).unwrap();
        assert_eq!(same.accuracy, 1.0);
        assert_eq!(same.fom, 1.0);
        assert_eq!(same.buffered_f1, Some(1.0));
    }

    #[test]
    fn buffer_absent_without_coastline() {
        let t = SegMask::filled(8, 8, 0).unwrap();
        let row = evaluate_image(&t, &t).unwrap();
        assert_eq!(row.buffered_accuracy, None);
        assert_eq!(row.fom, 1.0);
    }

    #[test]
    fn huge_radius_matches_overall() {
        let truth = mask(40, 30, |r, c| u8::from(c + r / 3 >= 20));
        let pred = mask(40, 30, |r, c| u8::from((c + r) % 11 > 4));
        let row = evaluate_image_with(&pred, &truth, &EvalParams { buffer_radius: 1e6, ..Default::default() }, Exec::Sequential).unwrap();
        assert_eq!(row.buffered().unwrap().accuracy, row.accuracy);
        assert_eq!(row.buffered().unwrap().f1, row.f1);
    }

    fn row(id: &str, acc: f64, tile: (u32, u32), year: i32) -> MetricRow {
        MetricRow {
            image_id: id.into(),
            accuracy: acc,
            precision: acc,
            recall: acc,
            f1: acc,
            fom: acc,
            buffered_accuracy: Some(acc / 2.0),
            buffered_precision: Some(acc / 2.0),
            buffered_recall: Some(acc / 2.0),
            buffered_f1: Some(acc / 2.0),
            tile: Some(Tile::new(tile.0, tile.1)),
            decade: Some(year.div_euclid(10) * 10),
            altitude_class: Some(AltitudeClass::High),
            coastal_type: Some(CoastalType::Sandy),
        }
    }

    #[test]
    fn macro_means() {
        let rows = vec![row("b", 1.0, (205, 23), 1995), row("a", 0.9, (205, 24), 2001)];
        let rep = aggregate_report(&rows).unwrap();
        assert!((rep.overall.accuracy - 0.95).abs() < 1e-15);
        assert_eq!(rep.by_tile.len(), 2);
        assert_eq!(rep.by_tile[0].value, "(205,23)");
        assert_eq!(rep.by_tile[0].means.accuracy, 1.0);
        assert_eq!(rep.by_decade.iter().map(|g| g.value.as_str()).collect::<Vec<_>>(), ["1990", "2000"]);
        assert!(aggregate_report(&[]).is_err());
    }

    #[test]
    fn rows_csv_round_trip() {
        let mut rows = vec![row("a", 0.75, (205, 23), 1987)];
        rows[0].buffered_accuracy = None;
        rows[0].coastal_type = None;
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_rows_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn decades() {
        assert_eq!(decade_of("1989-12-31T23:00:00Z".parse().unwrap()), 1980);
        assert_eq!(decade_of("2020-01-01T00:00:00Z".parse().unwrap()), 2020);
    }
}

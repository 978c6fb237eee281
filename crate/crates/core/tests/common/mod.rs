//! Naive reference implementations and random inputs shared by the
//! integration tests.

#![allow(dead_code)]

use coastseg_core::raster::SegMask;
use coastseg_core::seed;
use rand::Rng;

/// Blobby random mask: a few random half-planes and discs, plus sparse
/// no-data when `nodata_rate > 0`.
pub fn random_mask(w: usize, h: usize, s: u64, nodata_rate: f64) -> SegMask {
    let mut rng = seed::rng(s);
    let discs: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..5))
        .map(|_| (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64), rng.gen_range(3.0..20.0)))
        .collect();
    let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-20.0..20.0));
    let mut noise = seed::rng(s ^ 0xabcd);
    SegMask::from_fn(w, h, |r, col| {
        if nodata_rate > 0.0 && noise.gen_bool(nodata_rate) {
            return SegMask::NODATA;
        }
        let (y, x) = (r as f64, col as f64);
        let mut v = a * (x - w as f64 / 2.0) + b * (y - h as f64 / 2.0) + c > 0.0;
        for &(cy, cx, rad) in &discs {
            if (y - cy).powi(2) + (x - cx).powi(2) <= rad * rad {
                v = !v;
            }
        }
        u8::from(v)
    })
    .unwrap()
}

/// Perturbs a mask by flipping a random subset of valid pixels.
pub fn perturb(mask: &SegMask, s: u64, rate: f64) -> SegMask {
    let mut rng = seed::rng(s);
    let v = mask
        .values()
        .iter()
        .map(|&x| if x != SegMask::NODATA && rng.gen_bool(rate) { 1 - x } else { x })
        .collect();
    SegMask::new(mask.width(), mask.height(), v).unwrap()
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

pub fn naive_counts(pred: &SegMask, truth: &SegMask, region: Option<&[bool]>) -> Counts {
    let mut c = Counts::default();
    for r in 0..truth.height() {
        for col in 0..truth.width() {
            let (p, t) = (pred.get(r, col), truth.get(r, col));
            if p == SegMask::NODATA || t == SegMask::NODATA {
                continue;
            }
            if let Some(reg) = region {
                if !reg[r * truth.width() + col] {
                    continue;
                }
            }
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
    }
    c
}

/// (accuracy, precision, recall, f1) with the empty-denominator rules.
pub fn naive_scores(c: Counts) -> Option<(f64, f64, f64, f64)> {
    let total = c.tp + c.fp + c.tn + c.fn_;
    if total == 0 {
        return None;
    }
    let acc = (c.tp + c.tn) as f64 / total as f64;
    let p = match (c.tp + c.fp, c.fn_) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (d, _) => c.tp as f64 / d as f64,
    };
    let r = match (c.tp + c.fn_, c.fp) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (d, _) => c.tp as f64 / d as f64,
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Some((acc, p, r, f1))
}

/// Edge rule: valid pixel with an in-bounds 4-neighbour of another class,
/// no-data neighbours read as their strict valid-neighbour majority and are
/// ignored on ties.
pub fn naive_edges(m: &SegMask) -> Vec<bool> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let at = |r: i64, c: i64| -> Option<u8> {
        if r < 0 || c < 0 || r >= h || c >= w {
            None
        } else {
            Some(m.get(r as usize, c as usize))
        }
    };
    let dirs = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let effective = |r: i64, c: i64| -> Option<u8> {
        let v = at(r, c)?;
        if v != SegMask::NODATA {
            return Some(v);
        }
        let mut votes = [0, 0];
        for (dr, dc) in dirs {
            if let Some(x) = at(r + dr, c + dc) {
                if x != SegMask::NODATA {
                    votes[x as usize] += 1;
                }
            }
        }
        match votes {
            [l, o] if l > o => Some(0),
            [l, o] if o > l => Some(1),
            _ => None,
        }
    };
    let mut out = vec![false; (w * h) as usize];
    for r in 0..h {
        for c in 0..w {
            let v = at(r, c).unwrap();
            if v == SegMask::NODATA {
                continue;
            }
            out[(r * w + c) as usize] = dirs
                .iter()
                .any(|&(dr, dc)| effective(r + dr, c + dc).is_some_and(|x| x != v));
        }
    }
    out
}

fn points(edge: &[bool], w: usize) -> Vec<(i64, i64)> {
    edge.iter()
        .enumerate()
        .filter(|(_, e)| **e)
        .map(|(i, _)| ((i / w) as i64, (i % w) as i64))
        .collect()
}

/// Squared distance from every pixel to the nearest edge pixel.
fn nearest_sq(edge: &[bool], w: usize) -> Vec<Option<i64>> {
    let pts = points(edge, w);
    (0..edge.len())
        .map(|i| {
            let (r, c) = ((i / w) as i64, (i % w) as i64);
            pts.iter().map(|&(pr, pc)| (r - pr).pow(2) + (c - pc).pow(2)).min()
        })
        .collect()
}

pub fn naive_buffer(edge: &[bool], w: usize, radius: f64) -> Vec<bool> {
    nearest_sq(edge, w)
        .into_iter()
        .map(|d| d.is_some_and(|d| (d as f64).sqrt() <= radius))
        .collect()
}

/// O(N_E * N_G) figure of merit.
pub fn naive_fom(pred: &[bool], truth: &[bool], w: usize, alpha: f64) -> f64 {
    let pe = points(pred, w);
    let te = points(truth, w);
    match (pe.len(), te.len()) {
        (0, 0) => return 1.0,
        (0, _) | (_, 0) => return 0.0,
        _ => {}
    }
    let mut sum = 0.0;
    for &(r, c) in &pe {
        let d2 = te.iter().map(|&(tr, tc)| (r - tr).pow(2) + (c - tc).pow(2)).min().unwrap();
        sum += 1.0 / (1.0 + alpha * d2 as f64);
    }
    sum / pe.len().max(te.len()) as f64
}

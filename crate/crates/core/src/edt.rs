//! Exact Euclidean distance transform.
//!
//! Separable lower-envelope algorithm of Felzenszwalb and Huttenlocher: a
//! 1-D squared-distance transform down every column followed by one along
//! every row. Squared distances between lattice points are integers well
//! below 2^53, so the output equals brute force exactly.

use crate::exec::Exec;

/// 1-D squared distance transform of `f` (sampled at 0..n) into `out`.
fn transform_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k];
            let pf = p as f64;
            s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this stops at k = 0 at the latest.
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every pixel to the nearest `true` pixel
/// of a row-major `width`×`height` grid. `None` when there is no feature.
pub fn squared_edt(features: &[bool], width: usize, height: usize) -> Option<Vec<f64>> {
    squared_edt_with(features, width, height, Exec::default())
}

pub fn squared_edt_with(features: &[bool], width: usize, height: usize, exec: Exec) -> Option<Vec<f64>> {
    assert_eq!(features.len(), width * height, "feature grid size");
    if !features.iter().any(|&b| b) {
        return None;
    }
    // Finite stand-in for infinity: larger than any lattice distance, small
    // enough that sums with lattice terms stay exact.
    let far = ((width + height) as f64).powi(2) * 4.0 + 1.0;

    let columns: Vec<Vec<f64>> = exec.map_range(width, |c| {
        let f: Vec<f64> = (0..height)
            .map(|r| if features[r * width + c] { 0.0 } else { far })
            .collect();
        let mut out = vec![0.0; height];
        let mut v = vec![0usize; height];
        let mut z = vec![0.0; height + 1];
        transform_1d(&f, &mut out, &mut v, &mut z);
        out
    });

    let mut grid = vec![0.0f64; width * height];
    exec.for_each_chunk_mut(&mut grid, width, |r, row| {
        let f: Vec<f64> = (0..width).map(|c| columns[c][r]).collect();
        let mut v = vec![0usize; width];
        let mut z = vec![0.0; width + 1];
        transform_1d(&f, row, &mut v, &mut z);
    });
    Some(grid)
}

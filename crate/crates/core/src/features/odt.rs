//! Per-orientation-bin exact Euclidean distance transforms for chamfer queries.

use rayon::prelude::*;

use super::edges::EdgeMap;
use crate::geom::wrap_orientation;
use crate::real::Real;

/// Nearest-edge distance fields, one per orientation bin of width pi/B.
/// Bins with no edge points hold the sentinel (image diagonal) everywhere.
#[derive(Debug, Clone)]
pub struct OrientedDistanceTransform<T> {
    pub bins: usize,
    pub width: usize,
    pub height: usize,
    pub sentinel: T,
    fields: Vec<Vec<T>>,
}

impl<T: Real> OrientedDistanceTransform<T> {
    pub fn field(&self, bin: usize) -> &[T] {
        &self.fields[bin]
    }

    /// Orientation bin lookup. Bins are center-aligned: bin k covers
    /// [(k - 0.5), (k + 0.5)) * pi/B, wrapping, so bin 0 is centered on
    /// horizontal tangents rather than split across the wrap.
    pub fn bin_of(&self, orientation: T) -> usize {
        bin_index(orientation, self.bins)
    }
}

/// 1D squared-distance transform along one axis given per-cell squared
/// distances `f` (sentinel-squared where no seed exists in that slice).
fn dt_1d_squared(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        let mut s;
        loop {
            let vk = v[k];
            s = ((f[q] + (q * q) as f64) - (f[vk] + (vk * vk) as f64)) / (2.0 * (q as f64 - vk as f64));
            if s <= z[k] {
                if k == 0 {
                    // Replace the only parabola.
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    s = f64::NAN;
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        if !s.is_nan() {
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
    }
    if !started {
        out.copy_from_slice(f);
        return;
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Exact 2D Euclidean distance transform from a seed mask.
fn edt(width: usize, height: usize, seeds: &[bool]) -> Vec<f64> {
    // Pass 1: squared distance to the nearest seed within each column.
    let mut g = vec![f64::INFINITY; width * height];
    for x in 0..width {
        let mut last: Option<usize> = None;
        for y in 0..height {
            if seeds[y * width + x] {
                last = Some(y);
            }
            if let Some(s) = last {
                let d = (y - s) as f64;
                g[y * width + x] = d * d;
            }
        }
        last = None;
        for y in (0..height).rev() {
            if seeds[y * width + x] {
                last = Some(y);
            }
            if let Some(s) = last {
                let d = (s - y) as f64;
                let v = d * d;
                if v < g[y * width + x] {
                    g[y * width + x] = v;
                }
            }
        }
    }
    // Pass 2: 1D parabola transform along rows.
    let mut out = vec![f64::INFINITY; width * height];
    let mut row = vec![0.0f64; width];
    let mut row_out = vec![0.0f64; width];
    for y in 0..height {
        row.copy_from_slice(&g[y * width..(y + 1) * width]);
        dt_1d_squared(&row, &mut row_out);
        out[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    out
}

/// Center-aligned orientation bin of width pi/bins; see
/// [`OrientedDistanceTransform::bin_of`].
pub fn bin_index<T: Real>(orientation: T, bins: usize) -> usize {
    let o = wrap_orientation(orientation);
    let w = T::PI() / T::of_usize(bins);
    ((o / w + T::of(0.5)).floor().f64() as usize) % bins
}

/// Partition edge points by orientation bin and compute one exact distance
/// field per bin over the full image grid.
pub fn oriented_distance_transform<T: Real>(
    edges: &EdgeMap<T>,
    bins: usize,
) -> OrientedDistanceTransform<T> {
    assert!(bins >= 1, "need at least one orientation bin");
    let (w, h) = (edges.width, edges.height);
    let sentinel_f64 = ((w * w + h * h) as f64).sqrt();
    let mut masks = vec![vec![false; w * h]; bins];
    for p in &edges.points {
        masks[bin_index(p.orientation, bins)][p.y * w + p.x] = true;
    }
    let fields: Vec<Vec<T>> = masks
        .par_iter()
        .map(|mask| {
            if mask.iter().any(|&s| s) {
                edt(w, h, mask)
                    .into_iter()
                    .map(|d2| T::of(d2.sqrt().min(sentinel_f64)))
                    .collect()
            } else {
                vec![T::of(sentinel_f64); w * h]
            }
        })
        .collect();
    OrientedDistanceTransform { bins, width: w, height: h, sentinel: T::of(sentinel_f64), fields }
}

/// Bilinear interpolation of the distance field in the bin containing
/// `orientation`. Out-of-bounds queries clamp to the border.
pub fn chamfer_query<T: Real>(odt: &OrientedDistanceTransform<T>, x: T, y: T, orientation: T) -> T {
    let field = odt.field(odt.bin_of(orientation));
    let (w, h) = (odt.width, odt.height);
    let get = |xi: isize, yi: isize| -> T {
        let xi = xi.clamp(0, w as isize - 1) as usize;
        let yi = yi.clamp(0, h as isize - 1) as usize;
        field[yi * w + xi]
    };
    let xf = x.floor();
    let yf = y.floor();
    let fx = x - xf;
    let fy = y - yf;
    let xi = xf.f64() as isize;
    let yi = yf.f64() as isize;
    let one = T::one();
    (one - fy) * ((one - fx) * get(xi, yi) + fx * get(xi + 1, yi))
        + fy * ((one - fx) * get(xi, yi + 1) + fx * get(xi + 1, yi + 1))
}

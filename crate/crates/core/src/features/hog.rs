//! 31-dimensional HoG cell descriptors over a scale pyramid.
//!
//! Per cell: 18 contrast-sensitive orientation channels, 9 contrast-insensitive
//! channels, and 4 normalization (texture) features. Gradients use centered
//! differences with replicated borders; pixels vote into their containing cell
//! with hard orientation binning.

use rayon::prelude::*;

use super::FeatureError;
use crate::imagedata::Image;
use crate::real::Real;

/// Feature dimensionality per cell.
pub const HOG_DIMS: usize = 31;

const SIGNED_BINS: usize = 18;
const UNSIGNED_BINS: usize = 9;
const TRUNCATION: f64 = 0.2;
/// Gradient magnitudes below this are treated as sensor noise and ignored;
/// without a floor, contrast normalization saturates featureless regions.
const MAGNITUDE_FLOOR: f64 = 0.02;
// 1/sqrt(18), the texture feature scale.
const TEXTURE_SCALE: f64 = 0.235_702_260_395_515_84;

/// One pyramid level: a `cells_h x cells_w` grid of 31-dim descriptors.
#[derive(Debug, Clone)]
pub struct HogLevel<T> {
    pub scale: T,
    pub cells_w: usize,
    pub cells_h: usize,
    pub data: Vec<T>,
}

impl<T: Real> HogLevel<T> {
    #[inline]
    pub fn cell(&self, cx: usize, cy: usize) -> &[T] {
        let base = (cy * self.cells_w + cx) * HOG_DIMS;
        &self.data[base..base + HOG_DIMS]
    }
}

/// HoG descriptors of an image at a sequence of strictly decreasing scales.
#[derive(Debug, Clone)]
pub struct HogPyramid<T> {
    pub levels: Vec<HogLevel<T>>,
    pub cell_size: usize,
    pub dims: usize,
}

impl<T: Real> HogPyramid<T> {
    /// Image-pixel coordinates of the center of a `cells x cells` template
    /// whose top-left cell sits at `(cx, cy)` on `level`.
    pub fn template_center(&self, level: usize, cx: usize, cy: usize, cells: usize) -> (T, T) {
        let lv = &self.levels[level];
        let half = T::of_usize(cells) * T::of(0.5);
        let c = T::of_usize(self.cell_size);
        let x = (T::of_usize(cx) + half) * c / lv.scale;
        let y = (T::of_usize(cy) + half) * c / lv.scale;
        (x, y)
    }
}

/// Compute cell gradient histograms (18 signed bins) for one image.
fn cell_histograms<T: Real>(img: &Image<T>, cell: usize) -> (usize, usize, Vec<T>) {
    let cw = img.width() / cell;
    let ch = img.height() / cell;
    let mut hist = vec![T::zero(); cw * ch * SIGNED_BINS];
    let bin_width = T::TAU() / T::of_usize(SIGNED_BINS);
    for y in 0..ch * cell {
        for x in 0..cw * cell {
            let xi = x as isize;
            let yi = y as isize;
            let dx = img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi);
            let dy = img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1);
            let mag = (dx * dx + dy * dy).sqrt();
            if mag < T::of(MAGNITUDE_FLOOR) {
                continue;
            }
            let mut angle = dy.atan2(dx);
            if angle < T::zero() {
                angle += T::TAU();
            }
            let mut bin = (angle / bin_width).f64() as usize;
            if bin >= SIGNED_BINS {
                bin = SIGNED_BINS - 1;
            }
            let (cx, cy) = (x / cell, y / cell);
            hist[(cy * cw + cx) * SIGNED_BINS + bin] += mag;
        }
    }
    (cw, ch, hist)
}

/// Contrast-normalize cell histograms into 31-dim descriptors.
fn normalize<T: Real>(cw: usize, ch: usize, hist: &[T]) -> Vec<T> {
    // Unsigned energy per cell.
    let mut energy = vec![T::zero(); cw * ch];
    for c in 0..cw * ch {
        let h = &hist[c * SIGNED_BINS..(c + 1) * SIGNED_BINS];
        let mut e = T::zero();
        for o in 0..UNSIGNED_BINS {
            let u = h[o] + h[o + UNSIGNED_BINS];
            e += u * u;
        }
        energy[c] = e;
    }
    let e_at = |cx: isize, cy: isize| -> T {
        let cx = cx.clamp(0, cw as isize - 1) as usize;
        let cy = cy.clamp(0, ch as isize - 1) as usize;
        energy[cy * cw + cx]
    };
    let eps = T::of(1e-4);
    let trunc = T::of(TRUNCATION);
    let half = T::of(0.5);
    let tex = T::of(TEXTURE_SCALE);
    let mut out = vec![T::zero(); cw * ch * HOG_DIMS];
    for cy in 0..ch {
        for cx in 0..cw {
            let (x, y) = (cx as isize, cy as isize);
            // 2x2 block energies around the cell, border-clamped.
            let blocks = [
                e_at(x - 1, y - 1) + e_at(x, y - 1) + e_at(x - 1, y) + e_at(x, y),
                e_at(x, y - 1) + e_at(x + 1, y - 1) + e_at(x, y) + e_at(x + 1, y),
                e_at(x - 1, y) + e_at(x, y) + e_at(x - 1, y + 1) + e_at(x, y + 1),
                e_at(x, y) + e_at(x + 1, y) + e_at(x, y + 1) + e_at(x + 1, y + 1),
            ];
            let norms = blocks.map(|b| T::one() / (b + eps).sqrt());
            let h = &hist[(cy * cw + cx) * SIGNED_BINS..(cy * cw + cx + 1) * SIGNED_BINS];
            let f = &mut out[(cy * cw + cx) * HOG_DIMS..(cy * cw + cx + 1) * HOG_DIMS];
            let mut texture = [T::zero(); 4];
            for o in 0..SIGNED_BINS {
                let mut acc = T::zero();
                for (k, n) in norms.iter().enumerate() {
                    let v = (h[o] * *n).min(trunc);
                    acc += v;
                    texture[k] += v;
                }
                f[o] = half * acc;
            }
            for o in 0..UNSIGNED_BINS {
                let u = h[o] + h[o + UNSIGNED_BINS];
                let mut acc = T::zero();
                for n in &norms {
                    acc += (u * *n).min(trunc);
                }
                f[SIGNED_BINS + o] = half * acc;
            }
            for k in 0..4 {
                f[SIGNED_BINS + UNSIGNED_BINS + k] = tex * texture[k];
            }
        }
    }
    out
}

fn level_features<T: Real>(img: &Image<T>, cell: usize, scale: T) -> HogLevel<T> {
    let (cw, ch, hist) = cell_histograms(img, cell);
    let data = normalize(cw, ch, &hist);
    HogLevel { scale, cells_w: cw, cells_h: ch, data }
}

/// Build a HoG pyramid. `scale_step` is the per-level shrink factor in (0, 1);
/// level `l` holds the image resampled by `scale_step^l`.
pub fn hog_pyramid<T: Real>(
    image: &Image<T>,
    cell_size: usize,
    levels: usize,
    scale_step: T,
) -> Result<HogPyramid<T>, FeatureError> {
    if cell_size == 0 || levels == 0 {
        return Err(FeatureError::InvalidParameter("cell_size and levels must be >= 1".into()));
    }
    if !(scale_step > T::zero() && scale_step < T::one()) {
        return Err(FeatureError::InvalidParameter("scale_step must be in (0, 1)".into()));
    }
    // Check the coarsest level still spans a 3x3 cell grid.
    let mut scales = Vec::with_capacity(levels);
    let mut s = T::one();
    for l in 0..levels {
        let w = (T::of_usize(image.width()) * s).round().f64() as usize;
        let h = (T::of_usize(image.height()) * s).round().f64() as usize;
        let (cw, ch) = (w / cell_size, h / cell_size);
        if cw < 3 || ch < 3 {
            return Err(FeatureError::ImageTooSmall { level: l, got: cw, got2: ch });
        }
        scales.push((s, w, h));
        s = s * scale_step;
    }
    let lvls: Vec<HogLevel<T>> = scales
        .par_iter()
        .map(|&(scale, w, h)| {
            if w == image.width() && h == image.height() {
                level_features(image, cell_size, scale)
            } else {
                level_features(&image.resize(w, h), cell_size, scale)
            }
        })
        .collect();
    Ok(HogPyramid { levels: lvls, cell_size, dims: HOG_DIMS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_zero_features() {
        let img = Image::constant(32, 32, 0.5_f64);
        let pyr = hog_pyramid(&img, 4, 2, 0.8).unwrap();
        for lv in &pyr.levels {
            assert!(lv.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn grid_arithmetic() {
        let img = Image::constant(64, 64, 0.0_f64);
        let pyr = hog_pyramid(&img, 4, 1, 0.5).unwrap();
        assert_eq!(pyr.levels.len(), 1);
        assert_eq!(pyr.levels[0].cells_w, 16);
        assert_eq!(pyr.levels[0].cells_h, 16);
        assert_eq!(pyr.levels[0].data.len(), 16 * 16 * 31);
    }

    #[test]
    fn too_small_rejected() {
        let img = Image::constant(8, 8, 0.0_f64);
        assert!(matches!(
            hog_pyramid(&img, 4, 1, 0.5),
            Err(FeatureError::ImageTooSmall { .. })
        ));
    }

    /// Hand-computed descriptor of a vertical step edge on a single 8x8 cell.
    ///
    /// Image: columns 0..4 are 0.0, columns 4..8 are 1.0. Centered differences
    /// give dx = 1 at columns 3 and 4 (16 pixels), dx = 0 elsewhere, dy = 0
    /// everywhere. Angle 0 -> signed bin 0, so the cell histogram is
    /// s[0] = 16. Unsigned energy = 16^2 = 256; every 2x2 block clamps to the
    /// single cell: block energy 4*256 = 1024, norm = 1/32. Then
    /// f[0] = 0.5 * 4 * min(16/32, 0.2) = 0.4, same for unsigned bin 18,
    /// and each texture feature = (1/sqrt(18)) * 0.2.
    #[test]
    fn step_edge_hand_oracle() {
        let img = Image::from_fn(8, 8, |x, _| if x < 4 { 0.0_f64 } else { 1.0 });
        let lv = level_features(&img, 8, 1.0);
        assert_eq!((lv.cells_w, lv.cells_h), (1, 1));
        let f = lv.cell(0, 0);
        assert!((f[0] - 0.4).abs() < 1e-12, "signed bin 0: {}", f[0]);
        for o in 1..18 {
            assert_eq!(f[o], 0.0, "signed bin {o}");
        }
        assert!((f[18] - 0.4).abs() < 1e-12, "unsigned bin 0: {}", f[18]);
        for o in 19..27 {
            assert_eq!(f[o], 0.0, "unsigned bin {}", o - 18);
        }
        let t = 0.235_702_260_395_515_84 * 0.2;
        for k in 27..31 {
            assert!((f[k] - t).abs() < 1e-12, "texture {k}: {}", f[k]);
        }
        // Energy concentrated in the horizontal-gradient bin.
        let total: f64 = f[..18].iter().sum();
        assert!((f[0] - total).abs() < 1e-12);
    }

    #[test]
    fn invariant_to_constant_offset() {
        let base = Image::from_fn(32, 32, |x, y| 0.3 + 0.4 * (((x * 7 + y * 3) % 13) as f64 / 13.0));
        let shifted = Image::from_fn(32, 32, |x, y| base.get(x, y) - 0.2);
        let a = hog_pyramid(&base, 4, 1, 0.5).unwrap();
        let b = hog_pyramid(&shifted, 4, 1, 0.5).unwrap();
        assert_eq!(a.levels[0].data, b.levels[0].data);
    }
}

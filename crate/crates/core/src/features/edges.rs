//! Gradient-based edge detection: centered differences, non-maximum
//! suppression along the gradient direction, hysteresis linking.

use crate::geom::wrap_orientation;
use crate::imagedata::Image;
use crate::real::Real;

/// An edge pixel with its tangent orientation in [0, pi) and gradient magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint<T> {
    pub x: usize,
    pub y: usize,
    pub orientation: T,
    pub magnitude: T,
}

#[derive(Debug, Clone)]
pub struct EdgeMap<T> {
    pub width: usize,
    pub height: usize,
    pub points: Vec<EdgePoint<T>>,
}

impl<T: Real> EdgeMap<T> {
    pub fn new(width: usize, height: usize, points: Vec<EdgePoint<T>>) -> Self {
        Self { width, height, points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Separable Gaussian smoothing, sigma = 1, radius 3.
fn smooth<T: Real>(image: &Image<T>) -> Image<T> {
    let kernel: [f64; 7] = [0.004433, 0.054006, 0.242036, 0.39905, 0.242036, 0.054006, 0.004433];
    let k: Vec<T> = kernel.iter().map(|&v| T::of(v)).collect();
    let (w, h) = (image.width(), image.height());
    let horiz = Image::from_fn(w, h, |x, y| {
        let mut acc = T::zero();
        for (i, &kv) in k.iter().enumerate() {
            acc += kv * image.get_clamped(x as isize + i as isize - 3, y as isize);
        }
        acc
    });
    Image::from_fn(w, h, |x, y| {
        let mut acc = T::zero();
        for (i, &kv) in k.iter().enumerate() {
            acc += kv * horiz.get_clamped(x as isize, y as isize + i as isize - 3);
        }
        acc.min(T::one()).max(T::zero())
    })
}

/// Detect edges with hysteresis thresholds `low <= high` on the gradient
/// magnitude. The image is Gaussian-smoothed first; orientations are
/// tangents (gradient direction + pi/2).
pub fn detect_edges<T: Real>(image: &Image<T>, low: T, high: T) -> EdgeMap<T> {
    assert!(low >= T::zero() && low <= high, "need 0 <= low <= high");
    let image = smooth(image);
    let (w, h) = (image.width(), image.height());
    let mut mag = vec![T::zero(); w * h];
    let mut dir = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let dx = image.get_clamped(xi + 1, yi) - image.get_clamped(xi - 1, yi);
            let dy = image.get_clamped(xi, yi + 1) - image.get_clamped(xi, yi - 1);
            mag[y * w + x] = (dx * dx + dy * dy).sqrt();
            dir[y * w + x] = dy.atan2(dx);
        }
    }

    // Non-maximum suppression: survive only if at least as strong as the
    // forward neighbor and strictly stronger than the backward neighbor
    // along the quantized gradient direction.
    let get = |m: &[T], x: isize, y: isize| -> T {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            T::zero()
        } else {
            m[y as usize * w + x as usize]
        }
    };
    let quarter = T::FRAC_PI_4();
    let mut nms = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = mag[y * w + x];
            if g <= T::zero() {
                continue;
            }
            let sector = ((dir[y * w + x] / quarter).round().f64() as i64).rem_euclid(4);
            let (ox, oy) = match sector {
                0 => (1isize, 0isize),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            let (xi, yi) = (x as isize, y as isize);
            if g >= get(&mag, xi + ox, yi + oy) && g > get(&mag, xi - ox, yi - oy) {
                nms[y * w + x] = true;
            }
        }
    }

    // Hysteresis: BFS from strong pixels through weak ones (8-connected).
    let mut state = vec![0u8; w * h]; // 0 none, 1 weak, 2 kept
    let mut queue = Vec::new();
    for i in 0..w * h {
        if !nms[i] {
            continue;
        }
        if mag[i] >= high {
            state[i] = 2;
            queue.push(i);
        } else if mag[i] >= low && mag[i] > T::zero() {
            state[i] = 1;
        }
    }
    while let Some(i) = queue.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if state[j] == 1 {
                    state[j] = 2;
                    queue.push(j);
                }
            }
        }
    }

    let half_pi = T::FRAC_PI_2();
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if state[y * w + x] == 2 {
                points.push(EdgePoint {
                    x,
                    y,
                    orientation: wrap_orientation(dir[y * w + x] + half_pi),
                    magnitude: mag[y * w + x],
                });
            }
        }
    }
    EdgeMap::new(w, h, points)
}

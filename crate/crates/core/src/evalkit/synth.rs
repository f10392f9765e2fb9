//! Synthetic deformable-body sequence generator.
//!
//! A smoothly bending medial axis (sinusoidal tangent modulation whose phase
//! advances over time) is swept with a tapered radius profile; the silhouette
//! is rendered through the same fragment geometry the shape model scores, so
//! the model class can represent the ground truth exactly. Occluding blobs
//! and additive noise control difficulty. Everything is driven by one seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geom::{wrap_angle, Point2};
use crate::imagedata::{Annotation, FrameSequence, Image};
use crate::real::Real;
use crate::shape::{fragment_boundary, PartState};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig<T> {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub part_count: usize,
    /// Arc length of the body in px.
    pub body_length: T,
    /// Radius at the head; the profile tapers linearly toward the tail.
    pub base_radius: T,
    /// Fraction of the base radius lost from head to tail, in [0, 1).
    pub taper: T,
    /// Tangent oscillation amplitude in radians.
    pub bend_amplitude: T,
    /// Spatial periods of the bend along the body.
    pub bend_frequency: T,
    /// Bend phase advance per frame, radians.
    pub bend_speed: T,
    /// Initial body heading, radians.
    pub heading: T,
    /// Per-frame random-walk step of the body center, px.
    pub drift: T,
    pub occluder_count: usize,
    pub occluder_radius: T,
    /// Additive Gaussian noise sigma on [0, 1] pixel values.
    pub noise: T,
    pub seed: u64,
}

impl<T: Real> SynthConfig<T> {
    /// Small desk-scale default: gentle bend, light noise, no occlusion.
    pub fn desk(width: usize, height: usize, parts: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            frames: 10,
            part_count: parts,
            body_length: T::of(0.55) * T::of_usize(width.min(height)),
            base_radius: T::of(5.0),
            taper: T::of(0.3),
            bend_amplitude: T::of(0.6),
            bend_frequency: T::of(1.2),
            bend_speed: T::of(0.35),
            heading: T::zero(),
            drift: T::of(1.0),
            occluder_count: 0,
            occluder_radius: T::of(6.0),
            noise: T::of(0.01),
            seed,
        }
    }

    /// Self-overlapping high-curvature preset.
    pub fn omega(width: usize, height: usize, parts: usize, seed: u64) -> Self {
        let mut cfg = Self::desk(width, height, parts, seed);
        cfg.bend_amplitude = T::of(2.1);
        cfg.bend_frequency = T::of(0.9);
        cfg
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.width < 16 || self.height < 16 {
            return Err(EvalError::ConfigError("frame too small".into()));
        }
        if self.frames == 0 || self.part_count < 2 {
            return Err(EvalError::ConfigError("need frames >= 1 and parts >= 2".into()));
        }
        if !(self.body_length > T::zero())
            || !(self.base_radius > T::zero())
            || self.taper < T::zero()
            || self.taper >= T::one()
        {
            return Err(EvalError::ConfigError("invalid body profile".into()));
        }
        if self.noise < T::zero() || self.drift < T::zero() {
            return Err(EvalError::ConfigError("negative noise or drift".into()));
        }
        Ok(())
    }
}

/// Per-frame full shape ground truth.
pub type SynthGroundTruth<T> = Vec<Vec<PartState<T>>>;

/// Scene raster drawn at 4x resolution and box-downsampled, so silhouette
/// boundaries come out anti-aliased and edge orientations stay faithful.
struct Raster<T> {
    width: usize,
    height: usize,
    sup: Vec<T>,
}

const SUPER: usize = 4;

impl<T: Real> Raster<T> {
    fn new(width: usize, height: usize, v: T) -> Self {
        Self { width, height, sup: vec![v; width * SUPER * height * SUPER] }
    }

    /// Map an original-coordinate value to the supersample grid, where
    /// supersample centers of pixel x sit at x + (i - 1.5)/4.
    #[inline]
    fn up(v: T) -> T {
        v * T::of_usize(SUPER) + T::of(1.5)
    }

    /// Even-odd fill of a closed polygon (original coordinates).
    fn fill_polygon(&mut self, poly: &[Point2<T>], value: T) {
        if poly.len() < 3 {
            return;
        }
        let (sw, sh) = (self.width * SUPER, self.height * SUPER);
        let scaled: Vec<Point2<T>> =
            poly.iter().map(|p| Point2::new(Self::up(p.x), Self::up(p.y))).collect();
        for y in 0..sh {
            let fy = T::of_usize(y);
            let mut xs: Vec<T> = Vec::new();
            for i in 0..scaled.len() {
                let p0 = scaled[i];
                let p1 = scaled[(i + 1) % scaled.len()];
                if (p0.y > fy) != (p1.y > fy) {
                    let t = (fy - p0.y) / (p1.y - p0.y);
                    xs.push(p0.x + t * (p1.x - p0.x));
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in xs.chunks(2) {
                if pair.len() < 2 {
                    continue;
                }
                let x0 = pair[0].ceil().f64().max(0.0) as usize;
                let x1 = pair[1].floor().f64().min((sw - 1) as f64) as isize;
                for x in x0 as isize..=x1 {
                    if x >= 0 {
                        self.sup[y * sw + x as usize] = value;
                    }
                }
            }
        }
    }

    fn fill_disk(&mut self, cx: T, cy: T, r: T, value: T) {
        let (sw, sh) = (self.width * SUPER, self.height * SUPER);
        let (cx, cy, r) = (Self::up(cx), Self::up(cy), r * T::of_usize(SUPER));
        let r2 = r * r;
        let x0 = (cx - r).floor().f64().max(0.0) as usize;
        let x1 = (cx + r).ceil().f64().min((sw - 1) as f64) as usize;
        let y0 = (cy - r).floor().f64().max(0.0) as usize;
        let y1 = (cy + r).ceil().f64().min((sh - 1) as f64) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = T::of_usize(x) - cx;
                let dy = T::of_usize(y) - cy;
                if dx * dx + dy * dy <= r2 {
                    self.sup[y * sw + x] = value;
                }
            }
        }
    }

    /// Box-average the supersampled scene down to the output resolution.
    fn finish(self) -> Vec<T> {
        let sw = self.width * SUPER;
        let inv = T::one() / T::of_usize(SUPER * SUPER);
        let mut out = vec![T::zero(); self.width * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = T::zero();
                for sy in 0..SUPER {
                    for sx in 0..SUPER {
                        acc += self.sup[(y * SUPER + sy) * sw + x * SUPER + sx];
                    }
                }
                out[y * self.width + x] = acc * inv;
            }
        }
        out
    }
}

const BACKGROUND: f64 = 0.9;
const BODY: f64 = 0.2;
const OCCLUDER: f64 = 0.78;

/// Gaussian sample via Box-Muller, driven by the shared sequence RNG.
fn gaussian<T: Real>(rng: &mut ChaCha8Rng) -> T {
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    T::of((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
}

/// Axis stations and tangents for one frame's body curve.
fn body_axis<T: Real>(
    cfg: &SynthConfig<T>,
    center: Point2<T>,
    phase: T,
    samples: usize,
) -> (Vec<Point2<T>>, Vec<T>) {
    let l = cfg.body_length;
    let du = l / T::of_usize(samples - 1);
    let tau = T::TAU();
    let mut pts = Vec::with_capacity(samples);
    let mut dirs = Vec::with_capacity(samples);
    let mut p = Point2::new(T::zero(), T::zero());
    for k in 0..samples {
        let u = du * T::of_usize(k);
        let dir = cfg.heading + cfg.bend_amplitude * (tau * cfg.bend_frequency * u / l + phase).sin();
        dirs.push(dir);
        pts.push(p);
        // Midpoint integration step.
        let u_mid = u + du * T::of(0.5);
        let dir_mid =
            cfg.heading + cfg.bend_amplitude * (tau * cfg.bend_frequency * u_mid / l + phase).sin();
        p = p.add(Point2::from_angle(dir_mid).scale(du));
    }
    // Center the body on `center`.
    let mut cx = T::zero();
    let mut cy = T::zero();
    for q in &pts {
        cx += q.x;
        cy += q.y;
    }
    let n = T::of_usize(pts.len());
    let shift = center.sub(Point2::new(cx / n, cy / n));
    for q in pts.iter_mut() {
        *q = q.add(shift);
    }
    (pts, dirs)
}

/// Generate a synthetic sequence: rendered frames, per-frame annotations with
/// radii, and the full per-frame part-state ground truth.
pub fn synth_sequence<T: Real>(
    cfg: &SynthConfig<T>,
) -> Result<(FrameSequence<T>, Vec<Annotation<T>>, SynthGroundTruth<T>), EvalError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phase0 = T::of(rng.random_range(0.0..std::f64::consts::TAU));
    let k = cfg.part_count;
    let samples = 256usize;
    let mut center = Point2::new(
        T::of_usize(cfg.width) * T::of(0.5),
        T::of_usize(cfg.height) * T::of(0.5),
    );
    let home = center;
    let max_wander = T::of(0.12) * T::of_usize(cfg.width.min(cfg.height));

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut annotations = Vec::with_capacity(cfg.frames);
    let mut ground_truth = Vec::with_capacity(cfg.frames);

    for t in 0..cfg.frames {
        let phase = phase0 + cfg.bend_speed * T::of_usize(t);
        let (pts, dirs) = body_axis(cfg, center, phase, samples);
        // Stations at uniform arc length (the integration step is uniform).
        let station = |i: usize| -> usize { i * (samples - 1) / (k - 1) };
        let l = cfg.body_length;
        // Flaring from the radius slope along the headward direction.
        let eta = (cfg.base_radius * cfg.taper / l).atan();
        let states: Vec<PartState<T>> = (0..k)
            .map(|i| {
                let s = station(i);
                let u = l * T::of_usize(s) / T::of_usize(samples - 1);
                let r = cfg.base_radius * (T::one() - cfg.taper * u / l);
                // Axis orientation points toward the head (toward the parent).
                PartState::new(pts[s].x, pts[s].y, r, wrap_angle(dirs[s] + T::PI()), eta, 0)
            })
            .collect();

        // Silhouette polygon from the same fragment geometry the model uses.
        let mut left: Vec<Point2<T>> = Vec::new();
        let mut right: Vec<Point2<T>> = Vec::new();
        for w in states.windows(2) {
            let frag = fragment_boundary(&w[0], &w[1], T::of(0.5))
                .map_err(|e| EvalError::ConfigError(format!("degenerate body: {e}")))?;
            for s in &frag.left_samples {
                left.push(s.point);
            }
            for s in &frag.right_samples {
                right.push(s.point);
            }
        }
        let mut poly = left;
        poly.extend(right.into_iter().rev());
        // Bounds check with a 1 px margin, covering the rounded end caps.
        let margin = T::one();
        let mut extremes: Vec<Point2<T>> = poly.clone();
        for &(i, _) in &[(0usize, 0), (k - 1, 0)] {
            let z = &states[i];
            for (dx, dy) in [(z.r, T::zero()), (-z.r, T::zero()), (T::zero(), z.r), (T::zero(), -z.r)] {
                extremes.push(Point2::new(z.x + dx, z.y + dy));
            }
        }
        for p in &extremes {
            if p.x < margin
                || p.y < margin
                || p.x > T::of_usize(cfg.width) - margin - T::one()
                || p.y > T::of_usize(cfg.height) - margin - T::one()
            {
                return Err(EvalError::ConfigError(format!(
                    "body exceeds frame bounds at frame {t}"
                )));
            }
        }

        let mut raster = Raster::new(cfg.width, cfg.height, T::of(BACKGROUND));
        raster.fill_polygon(&poly, T::of(BODY));
        // Rounded end caps.
        let head = &states[0];
        let tail = &states[k - 1];
        raster.fill_disk(head.x, head.y, head.r, T::of(BODY));
        raster.fill_disk(tail.x, tail.y, tail.r, T::of(BODY));

        // Occluders near the body.
        for _ in 0..cfg.occluder_count {
            let s = rng.random_range(0..samples);
            let jx = T::of(rng.random_range(-6.0..6.0));
            let jy = T::of(rng.random_range(-6.0..6.0));
            let rr = cfg.occluder_radius * T::of(rng.random_range(0.75..1.25));
            raster.fill_disk(pts[s].x + jx, pts[s].y + jy, rr, T::of(OCCLUDER));
        }

        let mut pixels = raster.finish();
        // Additive noise, clamped to [0, 1].
        if cfg.noise > T::zero() {
            for v in pixels.iter_mut() {
                *v = (*v + cfg.noise * gaussian::<T>(&mut rng)).min(T::one()).max(T::zero());
            }
        }
        frames.push(
            Image::new(cfg.width, cfg.height, pixels)
                .map_err(|e| EvalError::ConfigError(e.to_string()))?,
        );
        annotations.push(Annotation {
            frame: t,
            keypoints: states.iter().map(|z| [z.x, z.y]).collect(),
            radii: Some(states.iter().map(|z| z.r).collect()),
        });
        ground_truth.push(states);

        // Random-walk drift, pulled back toward the frame center.
        let step = Point2::new(
            T::of(rng.random_range(-1.0..1.0)) * cfg.drift,
            T::of(rng.random_range(-1.0..1.0)) * cfg.drift,
        );
        center = center.add(step);
        center.x = center.x.min(home.x + max_wander).max(home.x - max_wander);
        center.y = center.y.min(home.y + max_wander).max(home.y - max_wander);
    }
    let seq = FrameSequence::new(frames, T::of(30.0))
        .map_err(|e| EvalError::ConfigError(e.to_string()))?;
    Ok((seq, annotations, ground_truth))
}

/// Background-only image (no target): blobs plus noise, for negative mining.
pub fn synth_background<T: Real>(width: usize, height: usize, blobs: usize, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raster = Raster::new(width, height, T::of(BACKGROUND));
    for _ in 0..blobs {
        let cx = T::of(rng.random_range(0.0..width as f64));
        let cy = T::of(rng.random_range(0.0..height as f64));
        let r = T::of(rng.random_range(2.0..8.0));
        let v = T::of(rng.random_range(0.35..0.8));
        raster.fill_disk(cx, cy, r, v);
    }
    let mut pixels = raster.finish();
    for v in pixels.iter_mut() {
        *v = (*v + T::of(0.015) * gaussian::<T>(&mut rng)).min(T::one()).max(T::zero());
    }
    Image::new(width, height, pixels).expect("background raster in range")
}

//! Frame ingestion, grayscale conversion and ground-truth annotation I/O.
//!
//! Frames are individual PNG files (8-bit grayscale or RGB); annotations are
//! a JSON document of keypoint chains with optional per-keypoint radii:
//!
//! ```json
//! {"part_count": 9,
//!  "sequences": [{"dir": "seq0",
//!                 "annotations": [{"frame": 0,
//!                                  "keypoints": [[x, y], ...],
//!                                  "radii": [r, ...]}]}]}
//! ```
//!
//! Coordinates are zero-based pixel centers, x rightward, y downward.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// Fixed RGB -> luminance weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum ImageDataError {
    #[error("path not found: {0}")]
    NotFound(PathBuf),
    #[error("mixed frame dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("no frames matched the pattern")]
    EmptySequence,
    #[error("annotation parse error: {0}")]
    ParseError(String),
    #[error("annotation has {got} keypoints, expected {expected}")]
    ArityError { expected: usize, got: usize },
    #[error("keypoint ({0}, {1}) out of bounds")]
    BoundsError(f64, f64),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image decode failed for {path}: {msg}")]
    DecodeError { path: PathBuf, msg: String },
}

/// Row-major grayscale image with luminance values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self, ImageDataError> {
        if width == 0 || height == 0 {
            return Err(ImageDataError::InvalidImage("zero dimension".into()));
        }
        if pixels.len() != width * height {
            return Err(ImageDataError::InvalidImage(format!(
                "pixel count {} != {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        for &p in &pixels {
            if !p.is_finite() || p < T::zero() || p > T::one() {
                return Err(ImageDataError::InvalidImage(format!(
                    "pixel value {p} outside [0, 1]"
                )));
            }
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn constant(width: usize, height: usize, v: T) -> Self {
        Self { width, height, pixels: vec![v; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    /// Clamped access: coordinates outside the image replicate the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample at a fractional position, clamped to the border.
    pub fn sample(&self, x: T, y: T) -> T {
        let xf = x.floor();
        let yf = y.floor();
        let fx = x - xf;
        let fy = y - yf;
        let xi = xf.f64() as isize;
        let yi = yf.f64() as isize;
        let v00 = self.get_clamped(xi, yi);
        let v10 = self.get_clamped(xi + 1, yi);
        let v01 = self.get_clamped(xi, yi + 1);
        let v11 = self.get_clamped(xi + 1, yi + 1);
        let one = T::one();
        (one - fy) * ((one - fx) * v00 + fx * v10) + fy * ((one - fx) * v01 + fx * v11)
    }

    /// Bilinear resize to the given dimensions.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        let sx = T::of_usize(self.width) / T::of_usize(width);
        let sy = T::of_usize(self.height) / T::of_usize(height);
        let half = T::of(0.5);
        Image::from_fn(width, height, |x, y| {
            let src_x = (T::of_usize(x) + half) * sx - half;
            let src_y = (T::of_usize(y) + half) * sy - half;
            self.sample(src_x, src_y)
        })
    }

    /// Luminance of an 8-bit RGB triple using the fixed weights.
    pub fn luma_from_rgb(r: u8, g: u8, b: u8) -> T {
        let v = (LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64)
            / 255.0;
        T::of(v.clamp(0.0, 1.0))
    }
}

/// Ordered frames with a common size.
#[derive(Debug, Clone)]
pub struct FrameSequence<T> {
    pub frames: Vec<Image<T>>,
    pub frame_rate: T,
}

impl<T: Real> FrameSequence<T> {
    pub fn new(frames: Vec<Image<T>>, frame_rate: T) -> Result<Self, ImageDataError> {
        if frames.is_empty() {
            return Err(ImageDataError::EmptySequence);
        }
        if !(frame_rate > T::zero()) {
            return Err(ImageDataError::InvalidImage("frame rate must be > 0".into()));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        for f in &frames[1..] {
            if f.width() != w || f.height() != h {
                return Err(ImageDataError::DimensionMismatch(w, h, f.width(), f.height()));
            }
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}

/// Ground-truth keypoints for one frame, ordered head to tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation<T> {
    pub frame: usize,
    pub keypoints: Vec<[T; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<T>>,
}

/// Annotations grouped by the frame directory they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceAnnotations<T> {
    pub dir: String,
    pub annotations: Vec<Annotation<T>>,
}

/// Parsed annotation file: the dataset minus the pixel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet<T> {
    pub part_count: usize,
    pub sequences: Vec<SequenceAnnotations<T>>,
}

/// Frame sequences paired with their annotations.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub sequences: Vec<(FrameSequence<T>, Vec<Annotation<T>>)>,
    pub part_count: usize,
}

fn natural_key(name: &str) -> Vec<(u8, u64, String)> {
    // Split into digit / non-digit runs so "f2" sorts before "f10".
    let mut key = Vec::new();
    let mut chars = name.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_ascii_digit() {
            let mut run = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    run.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            let n = run.parse::<u64>().unwrap_or(u64::MAX);
            key.push((0, n, String::new()));
        } else {
            let mut run = String::new();
            while let Some(&c) = chars.peek() {
                if !c.is_ascii_digit() {
                    run.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            key.push((1, 0, run));
        }
    }
    key
}

/// Minimal glob matcher supporting `*` and `?`.
fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    fn rec(p: &[char], n: &[char]) -> bool {
        match (p.first(), n.first()) {
            (None, None) => true,
            (Some('*'), _) => rec(&p[1..], n) || (!n.is_empty() && rec(p, &n[1..])),
            (Some('?'), Some(_)) => rec(&p[1..], &n[1..]),
            (Some(&pc), Some(&nc)) if pc == nc => rec(&p[1..], &n[1..]),
            _ => false,
        }
    }
    rec(&p, &n)
}

fn decode_image<T: Real>(path: &Path) -> Result<Image<T>, ImageDataError> {
    let dynimg = image::ImageReader::open(path)
        .map_err(|e| ImageDataError::DecodeError { path: path.to_owned(), msg: e.to_string() })?
        .decode()
        .map_err(|e| ImageDataError::DecodeError { path: path.to_owned(), msg: e.to_string() })?;
    let rgb = dynimg.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for p in rgb.pixels() {
        pixels.push(Image::<T>::luma_from_rgb(p.0[0], p.0[1], p.0[2]));
    }
    Image::new(w, h, pixels)
}

/// Load a directory of frames matching `pattern` (e.g. `*.png`), in natural
/// filename order, converted to luminance in [0, 1].
pub fn load_frames<T: Real>(
    path: impl AsRef<Path>,
    pattern: &str,
) -> Result<FrameSequence<T>, ImageDataError> {
    let path = path.as_ref();
    if !path.is_dir() {
        return Err(ImageDataError::NotFound(path.to_owned()));
    }
    let mut names: Vec<String> = std::fs::read_dir(path)
        .map_err(|_| ImageDataError::NotFound(path.to_owned()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| glob_match(pattern, n))
        .collect();
    if names.is_empty() {
        return Err(ImageDataError::EmptySequence);
    }
    names.sort_by_key(|n| natural_key(n));
    let mut frames = Vec::with_capacity(names.len());
    for name in &names {
        frames.push(decode_image(&path.join(name))?);
    }
    FrameSequence::new(frames, T::of(30.0))
}

/// Write a grayscale image as an 8-bit PNG.
pub fn save_png<T: Real>(img: &Image<T>, path: impl AsRef<Path>) -> Result<(), ImageDataError> {
    let mut buf = Vec::with_capacity(img.width() * img.height());
    for &p in img.pixels() {
        buf.push((p.f64().clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    image::save_buffer(
        path.as_ref(),
        &buf,
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| ImageDataError::DecodeError { path: path.as_ref().to_owned(), msg: e.to_string() })
}

fn validate_set<T: Real>(set: &AnnotationSet<T>) -> Result<(), ImageDataError> {
    if set.part_count == 0 {
        return Err(ImageDataError::ParseError("part_count must be >= 1".into()));
    }
    for seq in &set.sequences {
        for ann in &seq.annotations {
            if ann.keypoints.len() != set.part_count {
                return Err(ImageDataError::ArityError {
                    expected: set.part_count,
                    got: ann.keypoints.len(),
                });
            }
            for kp in &ann.keypoints {
                // Upper bounds are checked once frames are attached.
                if !kp[0].is_finite() || !kp[1].is_finite() || kp[0] < T::zero() || kp[1] < T::zero()
                {
                    return Err(ImageDataError::BoundsError(kp[0].f64(), kp[1].f64()));
                }
            }
            if let Some(radii) = &ann.radii {
                if radii.len() != ann.keypoints.len() {
                    return Err(ImageDataError::ArityError {
                        expected: ann.keypoints.len(),
                        got: radii.len(),
                    });
                }
                if radii.iter().any(|r| !(*r > T::zero())) {
                    return Err(ImageDataError::ParseError("radii must be > 0".into()));
                }
            }
        }
    }
    Ok(())
}

/// Parse and validate the JSON annotation format.
pub fn parse_annotations<T: Real>(path: impl AsRef<Path>) -> Result<AnnotationSet<T>, ImageDataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|_| ImageDataError::NotFound(path.to_owned()))?;
    parse_annotations_str(&text)
}

/// Parse the annotation JSON from a string.
pub fn parse_annotations_str<T: Real>(text: &str) -> Result<AnnotationSet<T>, ImageDataError> {
    let set: AnnotationSet<T> =
        serde_json::from_str(text).map_err(|e| ImageDataError::ParseError(e.to_string()))?;
    validate_set(&set)?;
    Ok(set)
}

/// Serialize an annotation set back to its JSON format.
pub fn serialize_annotations<T: Real>(set: &AnnotationSet<T>) -> String {
    serde_json::to_string_pretty(set).expect("annotation set serializes")
}

impl<T: Real> Dataset<T> {
    /// Attach frame sequences to a parsed annotation set, checking that every
    /// annotated frame exists and all keypoints are inside its frame.
    pub fn assemble(
        set: &AnnotationSet<T>,
        frames: Vec<FrameSequence<T>>,
    ) -> Result<Self, ImageDataError> {
        if frames.len() != set.sequences.len() {
            return Err(ImageDataError::ParseError(format!(
                "{} frame sequences for {} annotated sequences",
                frames.len(),
                set.sequences.len()
            )));
        }
        let mut sequences = Vec::new();
        for (seq, fs) in set.sequences.iter().zip(frames) {
            let (w, h) = (T::of_usize(fs.width()), T::of_usize(fs.height()));
            for ann in &seq.annotations {
                if ann.frame >= fs.frames.len() {
                    return Err(ImageDataError::ParseError(format!(
                        "annotation references frame {} of {}",
                        ann.frame,
                        fs.frames.len()
                    )));
                }
                for kp in &ann.keypoints {
                    if kp[0] >= w || kp[1] >= h {
                        return Err(ImageDataError::BoundsError(kp[0].f64(), kp[1].f64()));
                    }
                }
            }
            sequences.push((fs, seq.annotations.clone()));
        }
        Ok(Self { sequences, part_count: set.part_count })
    }
}

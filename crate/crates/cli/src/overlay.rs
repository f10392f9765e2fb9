//! Overlay rendering: silhouette boundaries and part markers drawn over a
//! grayscale frame, color-coded by candidate rank.

use std::path::Path;

use flexpose::fmp::PoseCandidate;
use flexpose::shape::fragment_boundary;
use flexpose::{Image, Scalar};

use crate::CliError;

const RANK_COLORS: [[u8; 3]; 6] = [
    [230, 60, 40],
    [50, 160, 230],
    [60, 200, 90],
    [240, 180, 40],
    [190, 80, 220],
    [90, 220, 210],
];

pub struct Overlay {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Overlay {
    pub fn from_frame(frame: &Image) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let mut rgb = Vec::with_capacity(w * h * 3);
        for &p in frame.pixels() {
            let v = (p.clamp(0.0, 1.0) * 255.0).round() as u8;
            rgb.extend_from_slice(&[v, v, v]);
        }
        Self { width: w, height: h, rgb }
    }

    fn set(&mut self, x: f64, y: f64, color: [u8; 3]) {
        let (xi, yi) = (x.round() as isize, y.round() as isize);
        if xi < 0 || yi < 0 || xi >= self.width as isize || yi >= self.height as isize {
            return;
        }
        let base = (yi as usize * self.width + xi as usize) * 3;
        self.rgb[base..base + 3].copy_from_slice(&color);
    }

    fn marker(&mut self, x: f64, y: f64, color: [u8; 3]) {
        for dy in -1..=1 {
            for dx in -1..=1 {
                self.set(x + dx as f64, y + dy as f64, color);
            }
        }
    }

    /// Draw one candidate: boundary curves when shape states are present,
    /// part markers always.
    pub fn draw(&mut self, pose: &PoseCandidate<Scalar>, rank: usize) {
        let color = RANK_COLORS[rank % RANK_COLORS.len()];
        if let Some(states) = &pose.states {
            for w in states.windows(2) {
                if let Ok(frag) = fragment_boundary(&w[0], &w[1], 0.5) {
                    for s in frag.left_samples.iter().chain(frag.right_samples.iter()) {
                        self.set(s.point.x, s.point.y, color);
                    }
                }
            }
        }
        for p in &pose.parts {
            self.marker(p.x, p.y, color);
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        image::save_buffer(
            path,
            &self.rgb,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

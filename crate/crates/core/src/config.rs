//! Run configuration: a flat key=value text format shared by the CLI and the
//! training pipeline. Unknown keys are rejected; defaults are echoed into run
//! manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{key}': {msg}")]
    InvalidValue { key: String, msg: String },
    #[error("malformed line {line}: '{text}'")]
    MalformedLine { line: usize, text: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Appearance mixture components per part.
    pub type_count: usize,
    /// Structural SVM regularization.
    pub svm_c: f64,
    /// Alternation rounds of negative mining + solving.
    pub rounds: usize,
    /// Duality-gap stop tolerance for the SVM solver.
    pub tolerance: f64,
    pub seed: u64,
    /// Stage-1 candidate count.
    pub stage1_m: usize,
    /// Stage-2 candidate count.
    pub stage2_m: usize,
    /// Tracking smoothness weight.
    pub gamma: f64,
    /// Keypoint-correctness threshold fraction.
    pub pck_beta: f64,
    pub hog_cell: usize,
    pub hog_levels: usize,
    /// Per-level shrink factor in (0, 1).
    pub hog_scale_step: f64,
    pub edge_low: f64,
    pub edge_high: f64,
    pub odt_bins: usize,
    /// Stage-1 candidate suppression radius in image px.
    pub nms_radius: f64,
    /// Square template side in HoG cells.
    pub template_cells: usize,
    /// Hard negatives harvested per background image per round.
    pub mine_per_image: usize,
    /// Resampled smoothness points; 0 means 4x the part count.
    pub smooth_points: usize,
    /// Silhouette boundary sampling step in px.
    pub theta_step: f64,
    /// Allow head/tail reversal in the tracking smoothness term.
    pub flip_tolerant: bool,
    // Synthetic generator keys (the synth subcommand).
    pub synth_width: usize,
    pub synth_height: usize,
    pub synth_frames: usize,
    pub synth_parts: usize,
    /// Body arc length in px; 0 means 0.55x the smaller frame side.
    pub synth_length: f64,
    pub synth_radius: f64,
    pub synth_taper: f64,
    pub synth_bend: f64,
    pub synth_bend_freq: f64,
    pub synth_bend_speed: f64,
    pub synth_drift: f64,
    pub synth_occluders: usize,
    pub synth_occluder_radius: f64,
    pub synth_noise: f64,
    /// Use the self-overlapping high-curvature preset.
    pub synth_omega: bool,
    /// Background-only images written by the synth command.
    pub synth_backgrounds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            type_count: 4,
            svm_c: 0.002,
            rounds: 3,
            tolerance: 1e-3,
            seed: 7,
            stage1_m: 500,
            stage2_m: 80,
            gamma: 0.01,
            pck_beta: 0.1,
            hog_cell: 4,
            hog_levels: 10,
            hog_scale_step: 0.840_896_415_253_714_5, // 2^(-1/4)
            edge_low: 0.05,
            edge_high: 0.15,
            odt_bins: 8,
            nms_radius: 4.0,
            template_cells: 3,
            mine_per_image: 20,
            smooth_points: 0,
            theta_step: 1.0,
            flip_tolerant: false,
            synth_width: 96,
            synth_height: 96,
            synth_frames: 20,
            synth_parts: 5,
            synth_length: 0.0,
            synth_radius: 5.0,
            synth_taper: 0.3,
            synth_bend: 0.6,
            synth_bend_freq: 1.2,
            synth_bend_speed: 0.35,
            synth_drift: 1.0,
            synth_occluders: 0,
            synth_occluder_radius: 6.0,
            synth_noise: 0.01,
            synth_omega: false,
            synth_backgrounds: 0,
        }
    }
}

macro_rules! config_keys {
    ($($key:ident : $ty:ty),* $(,)?) => {
        impl RunConfig {
            /// Set one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $(stringify!($key) => {
                        self.$key = value.trim().parse::<$ty>().map_err(|e| {
                            ConfigError::InvalidValue { key: key.into(), msg: e.to_string() }
                        })?;
                        Ok(())
                    })*
                    _ => Err(ConfigError::UnknownKey(key.into())),
                }
            }

            /// All keys with their current textual values (manifest echo).
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($key), self.$key.to_string())),*]
            }
        }
    };
}

config_keys! {
    type_count: usize,
    svm_c: f64,
    rounds: usize,
    tolerance: f64,
    seed: u64,
    stage1_m: usize,
    stage2_m: usize,
    gamma: f64,
    pck_beta: f64,
    hog_cell: usize,
    hog_levels: usize,
    hog_scale_step: f64,
    edge_low: f64,
    edge_high: f64,
    odt_bins: usize,
    nms_radius: f64,
    template_cells: usize,
    mine_per_image: usize,
    smooth_points: usize,
    theta_step: f64,
    flip_tolerant: bool,
    synth_width: usize,
    synth_height: usize,
    synth_frames: usize,
    synth_parts: usize,
    synth_length: f64,
    synth_radius: f64,
    synth_taper: f64,
    synth_bend: f64,
    synth_bend_freq: f64,
    synth_bend_speed: f64,
    synth_drift: f64,
    synth_occluders: usize,
    synth_occluder_radius: f64,
    synth_noise: f64,
    synth_omega: bool,
    synth_backgrounds: usize,
}

impl RunConfig {
    /// Parse the flat `key = value` format; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::MalformedLine { line: i + 1, text: raw.into() });
            };
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::parse_str(&text)
    }

    /// Build the generator configuration from the synth_* keys.
    pub fn synth_config(&self) -> crate::evalkit::SynthConfig<f64> {
        let mut cfg = if self.synth_omega {
            crate::evalkit::SynthConfig::omega(
                self.synth_width,
                self.synth_height,
                self.synth_parts,
                self.seed,
            )
        } else {
            crate::evalkit::SynthConfig::desk(
                self.synth_width,
                self.synth_height,
                self.synth_parts,
                self.seed,
            )
        };
        cfg.frames = self.synth_frames;
        if self.synth_length > 0.0 {
            cfg.body_length = self.synth_length;
        }
        cfg.base_radius = self.synth_radius;
        cfg.taper = self.synth_taper;
        if !self.synth_omega {
            cfg.bend_amplitude = self.synth_bend;
            cfg.bend_frequency = self.synth_bend_freq;
        }
        cfg.bend_speed = self.synth_bend_speed;
        cfg.drift = self.synth_drift;
        cfg.occluder_count = self.synth_occluders;
        cfg.occluder_radius = self.synth_occluder_radius;
        cfg.noise = self.synth_noise;
        cfg
    }

    /// Smoothness point count, defaulting to 4x the part count.
    pub fn smooth_points_for(&self, parts: usize) -> usize {
        if self.smooth_points >= 2 {
            self.smooth_points
        } else {
            (4 * parts).max(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_entries() {
        let cfg = RunConfig::default();
        let mut other = RunConfig::default();
        other.svm_c = 99.0;
        for (k, v) in cfg.entries() {
            other.set(k, &v).unwrap();
        }
        assert_eq!(cfg, other);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let cfg = RunConfig::parse_str(
            "# a comment\n  stage1_m = 120\nseed=3 # trailing\n\nflip_tolerant = true\n",
        )
        .unwrap();
        assert_eq!(cfg.stage1_m, 120);
        assert_eq!(cfg.seed, 3);
        assert!(cfg.flip_tolerant);
        assert_eq!(cfg.type_count, RunConfig::default().type_count);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::parse_str("no_such_key = 1\n"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse_str("stage1_m : 5\n"),
            Err(ConfigError::MalformedLine { .. })
        ));
        assert!(matches!(
            RunConfig::parse_str("stage1_m = x\n"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }
}

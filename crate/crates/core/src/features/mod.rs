//! Image features: HoG pyramid, gradient edges, oriented distance transforms.

mod edges;
mod hog;
mod odt;

pub use edges::{detect_edges, EdgeMap, EdgePoint};
pub use hog::{hog_pyramid, HogLevel, HogPyramid, HOG_DIMS};
pub use odt::{bin_index, chamfer_query, oriented_distance_transform, OrientedDistanceTransform};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image too small: level {level} spans {got}x{got2} cells, need at least 3x3")]
    ImageTooSmall { level: usize, got: usize, got2: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

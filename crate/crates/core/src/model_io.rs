//! Versioned model container: one JSON document holding the part-model
//! section, the shape section and the priors, with an explicit dimension
//! header validated on load.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::HOG_DIMS;
use crate::real::Real;
use crate::scfmp::ScfmpModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot access model file: {0}")]
    Io(String),
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("dimension header mismatch: {0}")]
    Dims(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsHeader {
    pub parts: usize,
    pub types: usize,
    pub template_cells: usize,
    pub hog_dims: usize,
    pub edges: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct ModelFile<T: Real> {
    format_version: u32,
    dims: DimsHeader,
    model: ScfmpModel<T>,
}

fn header<T: Real>(model: &ScfmpModel<T>) -> DimsHeader {
    DimsHeader {
        parts: model.fmp.parts,
        types: model.fmp.types,
        template_cells: model.fmp.template_cells,
        hog_dims: HOG_DIMS,
        edges: model.fmp.edges.len(),
    }
}

pub fn serialize_model<T: Real>(model: &ScfmpModel<T>) -> String {
    let file = ModelFile { format_version: FORMAT_VERSION, dims: header(model), model: model.clone() };
    serde_json::to_string(&file).expect("model serializes")
}

pub fn deserialize_model<T: Real>(text: &str) -> Result<ScfmpModel<T>, ModelIoError> {
    let file: ModelFile<T> =
        serde_json::from_str(text).map_err(|e| ModelIoError::Parse(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(ModelIoError::Version(file.format_version));
    }
    let expect = header(&file.model);
    if file.dims != expect {
        return Err(ModelIoError::Dims(format!("{:?} vs body {:?}", file.dims, expect)));
    }
    file.model.validate().map_err(|e| ModelIoError::Parse(e.to_string()))?;
    Ok(file.model)
}

pub fn save_model<T: Real>(model: &ScfmpModel<T>, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    std::fs::write(path.as_ref(), serialize_model(model)).map_err(|e| ModelIoError::Io(e.to_string()))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<ScfmpModel<T>, ModelIoError> {
    let text =
        std::fs::read_to_string(path.as_ref()).map_err(|e| ModelIoError::Io(e.to_string()))?;
    deserialize_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmp::FmpModel;
    use crate::scfmp::ShapePriors;

    #[test]
    fn round_trip_and_validation() {
        let model: ScfmpModel<f64> =
            ScfmpModel::zero(FmpModel::zero_chain(4, 2, 3), ShapePriors::uniform(4, 3.0));
        let text = serialize_model(&model);
        let back: ScfmpModel<f64> = deserialize_model(&text).unwrap();
        assert_eq!(model, back);
        // Wrong version rejected.
        let tampered = text.replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(deserialize_model::<f64>(&tampered), Err(ModelIoError::Version(9))));
        // Dimension header mismatch rejected (the header serializes first).
        let tampered = text.replacen("\"parts\":4", "\"parts\":5", 1);
        assert!(matches!(deserialize_model::<f64>(&tampered), Err(ModelIoError::Dims(_))));
    }
}

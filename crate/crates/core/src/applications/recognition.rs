//! Recognition features (concatenated weighted tile responses) and accuracy
//! under progressive decolorization.

use crate::applications::signs::LabeledImageSet;
use crate::applications::softmax::SoftmaxClassifier;
use crate::autoencoder::AutoencoderModel;
use crate::error::{Error, Result};
use crate::evalstats::accuracy;
use crate::imageio::{decolorize, Image};
use crate::semantics::{semantic_features, whitened_tiles, ConceptAssignment, SemanticWeights};

/// Weighted responses of every tile, tile-major and filter-minor
/// (length `h * tiles`).
pub fn extract_recognition_features(
    model: &AutoencoderModel,
    assignment: &ConceptAssignment,
    weights: &SemanticWeights,
    img: &Image,
) -> Result<Vec<f64>> {
    let (patches, _) = whitened_tiles(model, img)?;
    let s = semantic_features(model, assignment, weights, &patches)?;
    // column-major storage is already tile-major
    Ok(s.as_slice().to_vec())
}

pub fn extract_all(
    model: &AutoencoderModel,
    assignment: &ConceptAssignment,
    weights: &SemanticWeights,
    images: &[Image],
) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|img| extract_recognition_features(model, assignment, weights, img))
        .collect()
}

/// Accuracy of `clf` on `test` after decolorizing every image to each level,
/// in the order the levels are given.
pub fn evaluate_recognition(
    model: &AutoencoderModel,
    assignment: &ConceptAssignment,
    weights: &SemanticWeights,
    clf: &SoftmaxClassifier,
    test: &LabeledImageSet,
    levels: &[u32],
) -> Result<Vec<f64>> {
    levels
        .iter()
        .map(|&level| {
            let predictions = test
                .images()
                .iter()
                .map(|img| {
                    let challenged = decolorize(img, level)?;
                    let f = extract_recognition_features(model, assignment, weights, &challenged)?;
                    if f.len() != clf.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: format!("{} classifier features", clf.dim()),
                            found: f.len().to_string(),
                        });
                    }
                    clf.predict(&f)
                })
                .collect::<Result<Vec<_>>>()?;
            accuracy(&predictions, test.labels())
        })
        .collect()
}

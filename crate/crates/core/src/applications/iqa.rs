//! Full-reference quality score: rank correlation between the weighted
//! responses of a reference image and a distorted copy.

use nalgebra::DMatrix;

use crate::autoencoder::AutoencoderModel;
use crate::error::{Error, Result};
use crate::evalstats::spearman;
use crate::imageio::Image;
use crate::semantics::{semantic_features, whitened_tiles, ConceptAssignment, SemanticWeights};

/// Flattens an `h x n` response matrix filter by filter.
pub fn filter_major(responses: &DMatrix<f64>) -> Vec<f64> {
    responses.transpose().as_slice().to_vec()
}

/// Weighted responses of `img` over its non-overlapping tile grid.
pub fn weighted_responses(
    model: &AutoencoderModel,
    assignment: &ConceptAssignment,
    weights: &SemanticWeights,
    img: &Image,
) -> Result<DMatrix<f64>> {
    let (patches, _) = whitened_tiles(model, img)?;
    semantic_features(model, assignment, weights, &patches)
}

/// Spearman correlation of the flattened weighted responses; 1 means the
/// distorted image responds exactly like the reference.
pub fn iqa_score(
    model: &AutoencoderModel,
    assignment: &ConceptAssignment,
    weights: &SemanticWeights,
    reference: &Image,
    distorted: &Image,
) -> Result<f64> {
    if reference.width() != distorted.width() || reference.height() != distorted.height() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", reference.width(), reference.height()),
            found: format!("{}x{}", distorted.width(), distorted.height()),
        });
    }
    let r = filter_major(&weighted_responses(model, assignment, weights, reference)?);
    let d = filter_major(&weighted_responses(model, assignment, weights, distorted)?);
    spearman(&r, &d)
}

//! Kurtosis-based grouping of encoder filters into color and edge concepts,
//! concept-weighted responses and per-patch max-activation maps.

use std::fmt;

use nalgebra::DMatrix;

use crate::autoencoder::{encode, AutoencoderModel};
use crate::error::{Error, Result};
use crate::imageio::Image;
use crate::patches::{apply_zca, grid_patches, PatchMatrix, TileGrid};

pub const EDGE_THRESHOLD: f64 = 5.0;
pub const COLOR_THRESHOLD: f64 = 2.0;

/// Fourth standardized moment with population (1/n) moments.
pub fn kurtosis(w: &[f64]) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::UndefinedKurtosis);
    }
    let n = w.len() as f64;
    let mu = w.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in w {
        let c = (v - mu) * (v - mu);
        m2 += c;
        m4 += c * c;
    }
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 || !m2.is_finite() {
        return Err(Error::UndefinedKurtosis);
    }
    Ok(m4 / (m2 * m2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Concept {
    Color,
    Edge,
    Unassigned,
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Concept::Color => "color",
            Concept::Edge => "edge",
            Concept::Unassigned => "unassigned",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptAssignment {
    kappas: Vec<f64>,
    labels: Vec<Concept>,
    edge_threshold: f64,
    color_threshold: f64,
}

impl ConceptAssignment {
    /// Labels each kurtosis value: above `edge_threshold` is an edge, below
    /// `color_threshold` a color, anything in between unassigned.
    pub fn from_kappas(
        kappas: Vec<f64>,
        edge_threshold: f64,
        color_threshold: f64,
    ) -> Result<Self> {
        if color_threshold.is_nan() || edge_threshold.is_nan() || color_threshold > edge_threshold {
            return Err(Error::InvalidArgument(format!(
                "color threshold {color_threshold} must not exceed edge threshold {edge_threshold}"
            )));
        }
        let labels = kappas
            .iter()
            .map(|&k| {
                if k > edge_threshold {
                    Concept::Edge
                } else if k < color_threshold {
                    Concept::Color
                } else {
                    Concept::Unassigned
                }
            })
            .collect();
        Ok(Self {
            kappas,
            labels,
            edge_threshold,
            color_threshold,
        })
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn labels(&self) -> &[Concept] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn edge_threshold(&self) -> f64 {
        self.edge_threshold
    }

    pub fn color_threshold(&self) -> f64 {
        self.color_threshold
    }

    pub fn count(&self, concept: Concept) -> usize {
        self.labels.iter().filter(|&&l| l == concept).count()
    }

    pub fn indices(&self, concept: Concept) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == concept)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Computes the kurtosis of every encoder filter (column of W1) and labels it.
pub fn group_filters(
    model: &AutoencoderModel,
    edge_threshold: f64,
    color_threshold: f64,
) -> Result<ConceptAssignment> {
    let kappas = (0..model.hidden())
        .map(|j| kurtosis(model.w1().column(j).as_slice()).map_err(|_| Error::ConstantFilter(j)))
        .collect::<Result<Vec<_>>>()?;
    ConceptAssignment::from_kappas(kappas, edge_threshold, color_threshold)
}

/// Multipliers for color, edge and unassigned filter responses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticWeights {
    color: f64,
    edge: f64,
    unassigned: f64,
}

impl SemanticWeights {
    /// Edge-only weighting used for recognition under decolorization.
    pub const RECOGNITION: SemanticWeights = SemanticWeights {
        color: 0.0,
        edge: 1.0,
        unassigned: 0.0,
    };

    /// Edge-emphasizing weighting used for quality scoring.
    pub const QUALITY: SemanticWeights = SemanticWeights {
        color: 0.5,
        edge: 2.0,
        unassigned: 0.0,
    };

    /// Every filter at full weight, as though no grouping had happened.
    pub const ALL: SemanticWeights = SemanticWeights {
        color: 1.0,
        edge: 1.0,
        unassigned: 1.0,
    };

    /// Unassigned filters get weight 0.
    pub fn new(color: f64, edge: f64) -> Result<Self> {
        Self::with_unassigned(color, edge, 0.0)
    }

    pub fn with_unassigned(color: f64, edge: f64, unassigned: f64) -> Result<Self> {
        for (name, v) in [("w_c", color), ("w_e", edge), ("w_u", unassigned)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self {
            color,
            edge,
            unassigned,
        })
    }

    pub fn color(&self) -> f64 {
        self.color
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn unassigned(&self) -> f64 {
        self.unassigned
    }

    pub fn for_concept(&self, concept: Concept) -> f64 {
        match concept {
            Concept::Color => self.color,
            Concept::Edge => self.edge,
            Concept::Unassigned => self.unassigned,
        }
    }
}

fn check_assignment(model: &AutoencoderModel, assignment: &ConceptAssignment) -> Result<()> {
    if assignment.len() != model.hidden() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} filter labels", model.hidden()),
            found: assignment.len().to_string(),
        });
    }
    Ok(())
}

/// Scales each response row by the weight of its filter's concept.
pub fn weight_responses(
    responses: &mut DMatrix<f64>,
    assignment: &ConceptAssignment,
    weights: &SemanticWeights,
) {
    for (j, &label) in assignment.labels().iter().enumerate() {
        let w = weights.for_concept(label);
        if w != 1.0 {
            responses.row_mut(j).scale_mut(w);
        }
    }
}

/// Encoder responses to whitened patches with concept weights applied (h x n).
pub fn semantic_features(
    model: &AutoencoderModel,
    assignment: &ConceptAssignment,
    weights: &SemanticWeights,
    patches: &PatchMatrix,
) -> Result<DMatrix<f64>> {
    check_assignment(model, assignment)?;
    let mut s = encode(model, patches)?;
    weight_responses(&mut s, assignment, weights);
    Ok(s)
}

/// Non-overlapping patch tiling of `img`, whitened with the model's transform.
pub fn whitened_tiles(model: &AutoencoderModel, img: &Image) -> Result<(PatchMatrix, TileGrid)> {
    let (raw, grid) = grid_patches(img, model.patch_side())?;
    Ok((apply_zca(model.zca(), &raw)?, grid))
}

/// Which filters compete in a max-activation map.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSubset {
    All,
    Concept(Concept),
    Indices(Vec<usize>),
}

impl FilterSubset {
    fn resolve(&self, assignment: &ConceptAssignment) -> Result<Vec<usize>> {
        let h = assignment.len();
        let idx = match self {
            FilterSubset::All => (0..h).collect(),
            FilterSubset::Concept(c) => assignment.indices(*c),
            FilterSubset::Indices(v) => {
                if let Some(&bad) = v.iter().find(|&&j| j >= h) {
                    return Err(Error::InvalidArgument(format!(
                        "filter index {bad} out of range for {h} filters"
                    )));
                }
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        if idx.is_empty() {
            return Err(Error::EmptySubset);
        }
        Ok(idx)
    }
}

/// Per-tile index of the most active filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationMap {
    pub grid: TileGrid,
    /// Row-major over tiles.
    pub filters: Vec<usize>,
}

impl ActivationMap {
    pub fn at(&self, row: usize, col: usize) -> usize {
        self.filters[row * self.grid.cols + col]
    }

    /// Number of tiles where both maps pick the same filter.
    pub fn agreement(&self, other: &ActivationMap) -> usize {
        self.filters
            .iter()
            .zip(&other.filters)
            .filter(|(a, b)| a == b)
            .count()
    }
}

/// For every non-overlapping tile, the subset filter with the largest response;
/// ties go to the lowest index.
pub fn max_activation_map(
    model: &AutoencoderModel,
    assignment: &ConceptAssignment,
    img: &Image,
    subset: &FilterSubset,
) -> Result<ActivationMap> {
    check_assignment(model, assignment)?;
    let candidates = subset.resolve(assignment)?;
    let (patches, grid) = whitened_tiles(model, img)?;
    let s = encode(model, &patches)?;
    let filters = (0..grid.len())
        .map(|t| {
            let mut best = candidates[0];
            for &j in &candidates[1..] {
                if s[(j, t)] > s[(best, t)] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(ActivationMap { grid, filters })
}

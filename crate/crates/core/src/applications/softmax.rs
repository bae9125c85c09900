//! Multinomial logistic regression trained by gradient descent.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::textblock::TextDocument;

pub const CLASSIFIER_FORMAT: &str = "semfilt-clf/1";

/// Weights are `(dim + 1) x k`; the last row is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    weights: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Coefficient of the squared l2 norm of the non-bias weights.
    pub l2: f64,
    /// Mini-batch size; 0 means full batch.
    pub batch: usize,
    pub seed: u64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.5,
            l2: 1e-4,
            batch: 0,
            seed: 0,
        }
    }
}

impl SoftmaxClassifier {
    pub fn zeros(dim: usize, classes: usize) -> Result<Self> {
        Self::from_weights(DMatrix::zeros(dim + 1, classes))
    }

    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a classifier needs at least 2 classes, got {}",
                weights.ncols()
            )));
        }
        if weights.nrows() < 1 {
            return Err(Error::InvalidArgument("classifier has no bias row".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite classifier weight".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features", self.dim()),
                found: x.len().to_string(),
            });
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim();
        let w = self.weights.rows(0, d);
        let mut z = w.tr_mul(&DVector::from_column_slice(x));
        z += self.weights.row(d).transpose();
        z
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(softmax(&self.logits(x)))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.document().write_atomic(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_document(&TextDocument::read(path)?)
    }

    pub fn document(&self) -> TextDocument {
        let mut doc = TextDocument::new(CLASSIFIER_FORMAT);
        doc.header("dim", self.dim());
        doc.header("classes", self.classes());
        doc.block(
            "weights",
            self.weights.nrows(),
            self.weights.ncols(),
            self.weights.transpose().as_slice().to_vec(),
        );
        doc
    }

    pub fn from_document(doc: &TextDocument) -> Result<Self> {
        doc.expect_format(CLASSIFIER_FORMAT)?;
        let dim: usize = doc.get("dim")?;
        let classes: usize = doc.get("classes")?;
        let block = doc.block_named("weights")?;
        block.expect_shape(dim + 1, classes)?;
        Self::from_weights(DMatrix::from_row_slice(dim + 1, classes, &block.values))
    }
}

fn softmax(z: &DVector<f64>) -> Vec<f64> {
    let max = z.max();
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Design matrix with a trailing column of ones (`n x (dim + 1)`).
fn design(features: &[Vec<f64>], rows: &[usize], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), dim + 1, |i, j| {
        if j == dim {
            1.0
        } else {
            features[rows[i]][j]
        }
    })
}

/// Mean cross-entropy plus `l2 * |W|^2` (bias row excluded), and its gradient.
pub fn loss_and_gradient(
    clf: &SoftmaxClassifier,
    features: &[Vec<f64>],
    labels: &[usize],
    l2: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let rows: Vec<usize> = (0..features.len()).collect();
    check_data(features, labels, clf.dim(), clf.classes())?;
    Ok(batch_loss_and_gradient(clf, features, labels, &rows, l2))
}

fn batch_loss_and_gradient(
    clf: &SoftmaxClassifier,
    features: &[Vec<f64>],
    labels: &[usize],
    rows: &[usize],
    l2: f64,
) -> (f64, DMatrix<f64>) {
    let dim = clf.dim();
    let x = design(features, rows, dim);
    let mut z = &x * &clf.weights;
    let n = rows.len() as f64;
    let mut loss = 0.0;
    for (i, mut row) in z.row_iter_mut().enumerate() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let total = row.sum();
        row /= total;
        let y = labels[rows[i]];
        loss -= row[y].max(f64::MIN_POSITIVE).ln();
        row[y] -= 1.0;
    }
    // z now holds P - Y
    let mut grad = x.tr_mul(&z) / n;
    loss /= n;
    if l2 > 0.0 {
        let w = clf.weights.rows(0, dim);
        loss += l2 * w.norm_squared();
        let mut g = grad.rows_mut(0, dim);
        g += w * (2.0 * l2);
    }
    (loss, grad)
}

fn check_data(features: &[Vec<f64>], labels: &[usize], dim: usize, classes: usize) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", features.len()),
            found: labels.len().to_string(),
        });
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: format!("{dim} features"),
            found: bad.len().to_string(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside 0..{classes}"
        )));
    }
    Ok(())
}

/// Trains from zero weights; the class count is one past the largest label.
pub fn train_softmax(
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &SoftmaxConfig,
) -> Result<SoftmaxClassifier> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    train_softmax_k(features, labels, classes, cfg)
}

pub fn train_softmax_k(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    cfg: &SoftmaxConfig,
) -> Result<SoftmaxClassifier> {
    let dim = features.first().map_or(0, Vec::len);
    check_data(features, labels, dim, classes.max(2))?;
    for c in 0..classes {
        if !labels.contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "class {c} has no training examples"
            )));
        }
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite())
        || cfg.l2.is_nan()
        || cfg.l2 < 0.0
    {
        return Err(Error::InvalidArgument(
            "learning rate and l2 must be finite and nonnegative".into(),
        ));
    }
    let mut clf = SoftmaxClassifier::zeros(dim, classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let batch = if cfg.batch == 0 {
        order.len()
    } else {
        cfg.batch
    };
    for epoch in 0..cfg.epochs {
        if batch < order.len() {
            order.shuffle(&mut rng);
        }
        for rows in order.chunks(batch) {
            let (loss, grad) = batch_loss_and_gradient(&clf, features, labels, rows, cfg.l2);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, cost: loss });
            }
            clf.weights -= grad * cfg.learning_rate;
        }
    }
    if clf.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            cost: f64::NAN,
        });
    }
    Ok(clf)
}

//! Gradient-descent training, finite-difference gradient checks and model files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::{
    cost, cost_and_gradient, cost_threaded, gradient, AutoencoderModel, Geometry, RegKind,
    Regularizer,
};
use crate::error::{Error, Result};
use crate::imageio::CHANNELS;
use crate::patches::{PatchMatrix, ZcaTransform};
use crate::textblock::{Block, TextDocument};

pub const MODEL_FORMAT: &str = "semfilt-model/1";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Mini-batch size; 0 trains on the full batch.
    pub batch: usize,
    pub seed: u64,
    /// Half-width of the uniform weight init; `None` uses `sqrt(6) / sqrt(d + h + 1)`.
    pub init_scale: Option<f64>,
    pub regularizer: Regularizer,
    /// Column chunks evaluated in parallel for each cost/gradient pass.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            epochs: 400,
            learning_rate: 0.05,
            batch: 0,
            seed: 0,
            init_scale: None,
            regularizer: Regularizer::default(),
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.hidden < 2 {
            return Err(Error::InvalidArgument(format!(
                "hidden size must be at least 2, got {}",
                self.hidden
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if let Some(r) = self.init_scale {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!("init scale {r}")));
            }
        }
        Ok(())
    }

    pub fn init_range(&self, d: usize) -> f64 {
        self.init_scale
            .unwrap_or_else(|| 6f64.sqrt() / ((d + self.hidden + 1) as f64).sqrt())
    }
}

/// A trained model and its cost after initialization and after every epoch.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: AutoencoderModel,
    pub history: Vec<f64>,
}

impl Trained {
    pub fn initial_cost(&self) -> f64 {
        self.history[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.history.last().expect("history is never empty")
    }
}

/// RGB patch geometry when `d = 3 * side^2`, otherwise a flat vector.
pub fn infer_geometry(d: usize) -> Geometry {
    if d.is_multiple_of(CHANNELS) {
        let side = ((d / CHANNELS) as f64).sqrt().round() as usize;
        if side * side * CHANNELS == d {
            return Geometry::rgb(side);
        }
    }
    Geometry::flat(d)
}

/// Uniform `[-r, r]` weights (W1 then W2, column-major), zero biases.
pub fn initialize(
    geometry: Geometry,
    cfg: &TrainConfig,
    zca: ZcaTransform,
    rng: &mut impl Rng,
) -> Result<AutoencoderModel> {
    let d = geometry.dim();
    let h = cfg.hidden;
    let r = cfg.init_range(d);
    let mut draw = || {
        if r > 0.0 {
            rng.random_range(-r..=r)
        } else {
            0.0
        }
    };
    let w1 = DMatrix::from_fn(d, h, |_, _| draw());
    let w2 = DMatrix::from_fn(h, d, |_, _| draw());
    AutoencoderModel::new(
        w1,
        DVector::zeros(h),
        w2,
        DVector::zeros(d),
        geometry,
        cfg.regularizer,
        zca,
    )
}

/// Trains an autoencoder on whitened patches by plain gradient descent.
///
/// The returned model embeds `zca` (the transform that produced `patches`)
/// and the configured regularizer.
pub fn train(patches: &PatchMatrix, zca: &ZcaTransform, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if patches.dim() != zca.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("patch dimension {}", zca.dim()),
            found: patches.dim().to_string(),
        });
    }
    if patches.count() == 0 {
        return Err(Error::InvalidArgument("no training patches".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = initialize(infer_geometry(patches.dim()), cfg, zca.clone(), &mut rng)?;
    let reg = cfg.regularizer;
    let n = patches.count();
    let mut history = Vec::with_capacity(cfg.epochs + 1);

    if cfg.batch == 0 || cfg.batch >= n {
        for epoch in 0..cfg.epochs {
            let (c, grads) = cost_and_gradient(&model, patches, &reg, cfg.threads)?;
            if !c.is_finite() {
                return Err(Error::Diverged { epoch, cost: c });
            }
            history.push(c);
            model.descend(&grads, cfg.learning_rate);
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..cfg.epochs {
            let c = cost_threaded(&model, patches, &reg, cfg.threads)?;
            if !c.is_finite() {
                return Err(Error::Diverged { epoch, cost: c });
            }
            history.push(c);
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch) {
                let part = patches.select_columns(batch);
                let (_, grads) = cost_and_gradient(&model, &part, &reg, cfg.threads)?;
                model.descend(&grads, cfg.learning_rate);
            }
        }
    }

    let last = cost_threaded(&model, patches, &reg, cfg.threads)?;
    if !last.is_finite() || !model.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            cost: last,
        });
    }
    history.push(last);
    Ok(Trained { model, history })
}

/// Builds a random model and data set and returns the largest relative
/// difference between the analytic gradient and central finite differences.
///
/// Weights are pushed at least `1e-3` away from zero so the l1 term stays
/// differentiable under the `1e-5` probe step.
pub fn gradcheck(d: usize, h: usize, n: usize, reg: &Regularizer, seed: u64) -> Result<f64> {
    if d == 0 || h == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "gradcheck sizes must be positive".into(),
        ));
    }
    if d * h > 200 {
        return Err(Error::InvalidArgument(format!(
            "gradcheck is limited to d*h <= 200, got {}",
            d * h
        )));
    }
    const STEP: f64 = 1e-5;
    const MIN_WEIGHT: f64 = 1e-3;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weight = || {
        let w: f64 = rng.random_range(-0.5..0.5);
        if w.abs() < MIN_WEIGHT {
            MIN_WEIGHT.copysign(w)
        } else {
            w
        }
    };
    let w1 = DMatrix::from_fn(d, h, |_, _| weight());
    let w2 = DMatrix::from_fn(h, d, |_, _| weight());
    let b1 = DVector::from_fn(h, |_, _| rng.random_range(-0.5..0.5));
    let b2 = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
    let data = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
    let patches = PatchMatrix::new(data, true)?;
    let model = AutoencoderModel::new(
        w1,
        b1,
        w2,
        b2,
        Geometry::flat(d),
        *reg,
        ZcaTransform::identity(d),
    )?;

    let analytic: Vec<f64> = gradient(&model, &patches, reg)?.iter().collect();
    let total = analytic.len();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let probe = |delta: f64| -> Result<f64> {
            let mut m = model.clone();
            *param_at(&mut m, k, total) += delta;
            cost(&m, &patches, reg)
        };
        let numeric = (probe(STEP)? - probe(-STEP)?) / (2.0 * STEP);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

/// `|a - b| / max(|a|, |b|)`, or the absolute difference when both are below 1.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

// Flat index over W1, b1, W2, b2 in Gradients::iter order.
fn param_at(model: &mut AutoencoderModel, mut k: usize, total: usize) -> &mut f64 {
    debug_assert!(k < total);
    let (w1, b1, w2, b2) = model.params_mut();
    if k < w1.len() {
        return &mut w1.as_mut_slice()[k];
    }
    k -= w1.len();
    if k < b1.len() {
        return &mut b1.as_mut_slice()[k];
    }
    k -= b1.len();
    if k < w2.len() {
        return &mut w2.as_mut_slice()[k];
    }
    k -= w2.len();
    &mut b2.as_mut_slice()[k]
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(block: &Block, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    block.expect_shape(rows, cols)?;
    Ok(DMatrix::from_row_slice(rows, cols, &block.values))
}

/// Serializes the model as a versioned text document.
pub fn model_document(model: &AutoencoderModel) -> TextDocument {
    let reg = model.regularizer();
    let zca = model.zca();
    let mut doc = TextDocument::new(MODEL_FORMAT);
    doc.header("d", model.dim());
    doc.header("h", model.hidden());
    doc.header("patch_side", model.patch_side());
    doc.header("channels", model.channels());
    doc.header("regularizer", reg.kind());
    doc.header_f64("beta", reg.beta());
    doc.header_f64("lambda", reg.lambda());
    doc.header_f64("zca_epsilon", zca.epsilon());
    doc.block("mean", 1, model.dim(), zca.mean().as_slice().to_vec());
    doc.block(
        "whitener",
        model.dim(),
        model.dim(),
        row_major(zca.whitener()),
    );
    doc.block("W1", model.dim(), model.hidden(), row_major(model.w1()));
    doc.block("b1", 1, model.hidden(), model.b1().as_slice().to_vec());
    doc.block("W2", model.hidden(), model.dim(), row_major(model.w2()));
    doc.block("b2", 1, model.dim(), model.b2().as_slice().to_vec());
    doc
}

pub fn model_from_document(doc: &TextDocument) -> Result<AutoencoderModel> {
    doc.expect_format(MODEL_FORMAT)?;
    let d: usize = doc.get("d")?;
    let h: usize = doc.get("h")?;
    let geometry = Geometry {
        patch_side: doc.get("patch_side")?,
        channels: doc.get("channels")?,
    };
    if geometry.dim() != d {
        return Err(Error::Malformed(format!(
            "patch geometry {}x{}x{} does not match d = {d}",
            geometry.patch_side, geometry.patch_side, geometry.channels
        )));
    }
    let kind: RegKind = doc.get_str("regularizer")?.parse()?;
    let reg = Regularizer::new(kind, doc.get("beta")?, doc.get("lambda")?)?;
    let mean = doc.block_named("mean")?;
    mean.expect_shape(1, d)?;
    let zca = ZcaTransform::from_parts(
        DVector::from_column_slice(&mean.values),
        from_row_major(doc.block_named("whitener")?, d, d)?,
        doc.get("zca_epsilon")?,
    )?;
    let b1 = doc.block_named("b1")?;
    b1.expect_shape(1, h)?;
    let b2 = doc.block_named("b2")?;
    b2.expect_shape(1, d)?;
    AutoencoderModel::new(
        from_row_major(doc.block_named("W1")?, d, h)?,
        DVector::from_column_slice(&b1.values),
        from_row_major(doc.block_named("W2")?, h, d)?,
        DVector::from_column_slice(&b2.values),
        geometry,
        reg,
        zca,
    )
}

/// Writes the model atomically (temporary file, then rename).
pub fn save_model(model: &AutoencoderModel, path: impl AsRef<Path>) -> Result<()> {
    model_document(model).write_atomic(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AutoencoderModel> {
    model_from_document(&TextDocument::read(path)?)
}

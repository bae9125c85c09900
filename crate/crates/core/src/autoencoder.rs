//! Single-hidden-layer autoencoder with a sigmoid encoder and a linear decoder.
//!
//! For a `d x n` patch matrix `P` the model computes
//!
//! ```text
//! S     = sigmoid(W1^T P + b1)        (h x n)
//! P_hat = W2^T S + b2                 (d x n)
//! J     = (1/n) sum_cols |P_hat - P|^2 + penalty(W1, W2)
//! ```
//!
//! The penalty covers both weight matrices and never the biases.

use std::fmt;
use std::str::FromStr;
use std::thread;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::patches::{PatchMatrix, ZcaTransform};

/// Kind of weight penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegKind {
    None,
    L1,
    L2,
    ElasticNet,
}

impl RegKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::L1 => "l1",
            RegKind::L2 => "l2",
            RegKind::ElasticNet => "elastic",
        }
    }
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(RegKind::None),
            "l1" | "lasso" => Ok(RegKind::L1),
            "l2" | "ridge" => Ok(RegKind::L2),
            "elastic" | "elasticnet" | "elastic-net" => Ok(RegKind::ElasticNet),
            other => Err(Error::InvalidArgument(format!(
                "unknown regularizer `{other}` (expected none, l1, l2 or elastic)"
            ))),
        }
    }
}

/// Weight penalty: `beta * |W|_1` and/or `lambda * |W|_2^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    kind: RegKind,
    beta: f64,
    lambda: f64,
}

impl Regularizer {
    /// Default elastic-net weights.
    pub const BETA: f64 = 5.0;
    pub const LAMBDA: f64 = 3e-3;

    pub fn none() -> Self {
        Self {
            kind: RegKind::None,
            beta: 0.0,
            lambda: 0.0,
        }
    }

    pub fn l1(beta: f64) -> Result<Self> {
        Self::new(RegKind::L1, beta, 0.0)
    }

    pub fn l2(lambda: f64) -> Result<Self> {
        Self::new(RegKind::L2, 0.0, lambda)
    }

    pub fn elastic_net(beta: f64, lambda: f64) -> Result<Self> {
        Self::new(RegKind::ElasticNet, beta, lambda)
    }

    /// Builds a regularizer; coefficients a kind does not use are zeroed.
    pub fn new(kind: RegKind, beta: f64, lambda: f64) -> Result<Self> {
        for (name, v) in [("beta", beta), ("lambda", lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        let (beta, lambda) = match kind {
            RegKind::None => (0.0, 0.0),
            RegKind::L1 => (beta, 0.0),
            RegKind::L2 => (0.0, lambda),
            RegKind::ElasticNet => (beta, lambda),
        };
        Ok(Self { kind, beta, lambda })
    }

    pub fn kind(&self) -> RegKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for Regularizer {
    fn default() -> Self {
        Self {
            kind: RegKind::ElasticNet,
            beta: Self::BETA,
            lambda: Self::LAMBDA,
        }
    }
}

/// Patch geometry: `d = patch_side^2 * channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub patch_side: usize,
    pub channels: usize,
}

impl Geometry {
    pub fn rgb(patch_side: usize) -> Self {
        Self {
            patch_side,
            channels: 3,
        }
    }

    /// A 1x1 "patch" with `d` channels, for models not tied to images.
    pub fn flat(d: usize) -> Self {
        Self {
            patch_side: 1,
            channels: d,
        }
    }

    pub fn dim(&self) -> usize {
        self.patch_side * self.patch_side * self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
    geometry: Geometry,
    regularizer: Regularizer,
    zca: ZcaTransform,
}

impl AutoencoderModel {
    /// Assembles a model, checking every shape against `W1` (`d x h`).
    pub fn new(
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
        geometry: Geometry,
        regularizer: Regularizer,
        zca: ZcaTransform,
    ) -> Result<Self> {
        let (d, h) = w1.shape();
        let checks = [
            ("W1 rows", geometry.dim(), d),
            ("b1 length", h, b1.len()),
            ("W2 rows", h, w2.nrows()),
            ("W2 columns", d, w2.ncols()),
            ("b2 length", d, b2.len()),
            ("ZCA dimension", d, zca.dim()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    expected: format!("{what} = {expected}"),
                    found: found.to_string(),
                });
            }
        }
        if h == 0 {
            return Err(Error::InvalidArgument("model has no hidden units".into()));
        }
        let finite = w1.iter().chain(b1.iter()).chain(w2.iter()).chain(b2.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "model parameters must be finite".into(),
            ));
        }
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            geometry,
            regularizer,
            zca,
        })
    }

    /// All-zero model of the given size with an identity whitener.
    pub fn zeros(geometry: Geometry, hidden: usize) -> Self {
        let d = geometry.dim();
        Self {
            w1: DMatrix::zeros(d, hidden),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(hidden, d),
            b2: DVector::zeros(d),
            geometry,
            regularizer: Regularizer::none(),
            zca: ZcaTransform::identity(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn patch_side(&self) -> usize {
        self.geometry.patch_side
    }

    pub fn channels(&self) -> usize {
        self.geometry.channels
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn w1(&self) -> &DMatrix<f64> {
        &self.w1
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn w2(&self) -> &DMatrix<f64> {
        &self.w2
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn zca(&self) -> &ZcaTransform {
        &self.zca
    }

    pub fn with_regularizer(mut self, regularizer: Regularizer) -> Self {
        self.regularizer = regularizer;
        self
    }

    pub fn with_zca(mut self, zca: ZcaTransform) -> Result<Self> {
        if zca.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("ZCA dimension {}", self.dim()),
                found: zca.dim().to_string(),
            });
        }
        self.zca = zca;
        Ok(self)
    }

    /// Mutable access to the four parameter blocks, in the order W1, b1, W2, b2.
    pub(crate) fn params_mut(
        &mut self,
    ) -> (
        &mut DMatrix<f64>,
        &mut DVector<f64>,
        &mut DMatrix<f64>,
        &mut DVector<f64>,
    ) {
        (&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2)
    }

    /// Applies `param -= step * grad` to every block.
    pub fn descend(&mut self, grads: &Gradients, step: f64) {
        self.w1.zip_apply(&grads.dw1, |w, g| *w -= step * g);
        self.b1.zip_apply(&grads.db1, |w, g| *w -= step * g);
        self.w2.zip_apply(&grads.dw2, |w, g| *w -= step * g);
        self.b2.zip_apply(&grads.db2, |w, g| *w -= step * g);
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .all(|v| v.is_finite())
    }
}

/// Partial derivatives of the cost, one block per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dw1: DMatrix<f64>,
    pub db1: DVector<f64>,
    pub dw2: DMatrix<f64>,
    pub db2: DVector<f64>,
}

impl Gradients {
    fn zeros_like(model: &AutoencoderModel) -> Self {
        Self {
            dw1: DMatrix::zeros(model.dim(), model.hidden()),
            db1: DVector::zeros(model.hidden()),
            dw2: DMatrix::zeros(model.hidden(), model.dim()),
            db2: DVector::zeros(model.dim()),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        self.dw1 += &other.dw1;
        self.db1 += &other.db1;
        self.dw2 += &other.dw2;
        self.db2 += &other.db2;
    }

    fn scale(&mut self, k: f64) {
        self.dw1 *= k;
        self.db1 *= k;
        self.dw2 *= k;
        self.db2 *= k;
    }

    /// Flattened view in W1, b1, W2, b2 order.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.dw1
            .iter()
            .chain(self.db1.iter())
            .chain(self.dw2.iter())
            .chain(self.db2.iter())
            .copied()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_dim(model: &AutoencoderModel, p: &PatchMatrix) -> Result<()> {
    if p.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("patch dimension {}", model.dim()),
            found: p.dim().to_string(),
        });
    }
    Ok(())
}

fn encode_matrix(model: &AutoencoderModel, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = model.w1.tr_mul(x);
    for mut col in s.column_iter_mut() {
        col += &model.b1;
    }
    s.apply(|v| *v = sigmoid(*v));
    s
}

fn decode_matrix(model: &AutoencoderModel, s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = model.w2.tr_mul(s);
    for mut col in out.column_iter_mut() {
        col += &model.b2;
    }
    out
}

/// Hidden responses `sigmoid(W1^T P + b1)`, one column per patch.
pub fn encode(model: &AutoencoderModel, p: &PatchMatrix) -> Result<DMatrix<f64>> {
    check_dim(model, p)?;
    Ok(encode_matrix(model, p.matrix()))
}

/// Linear reconstruction `W2^T S + b2`.
pub fn decode(model: &AutoencoderModel, s: &DMatrix<f64>) -> Result<PatchMatrix> {
    if s.nrows() != model.hidden() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} response rows", model.hidden()),
            found: s.nrows().to_string(),
        });
    }
    PatchMatrix::new(decode_matrix(model, s), true)
}

/// Weight penalty; biases are never penalized.
pub fn penalty(reg: &Regularizer, model: &AutoencoderModel) -> f64 {
    let weights = || model.w1.iter().chain(model.w2.iter());
    let mut total = 0.0;
    if reg.beta > 0.0 {
        total += reg.beta * weights().map(|w| w.abs()).sum::<f64>();
    }
    if reg.lambda > 0.0 {
        total += reg.lambda * weights().map(|w| w * w).sum::<f64>();
    }
    total
}

/// Splits `0..n` into at most `parts` contiguous, nearly equal ranges.
fn chunks(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let parts = parts.clamp(1, n.max(1));
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for k in 0..parts {
        let len = base + usize::from(k < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Runs `f` over column chunks, possibly on scoped threads, and returns the
/// per-chunk results in chunk order.
fn map_chunks<T: Send>(
    x: &DMatrix<f64>,
    threads: usize,
    f: impl Fn(DMatrix<f64>) -> T + Sync,
) -> Vec<T> {
    let ranges = chunks(x.ncols(), threads);
    if ranges.len() == 1 {
        return vec![f(x.clone())];
    }
    thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|&(a, b)| {
                let f = &f;
                let part = x.columns(a, b - a).into_owned();
                scope.spawn(move || f(part))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn chunk_sse(model: &AutoencoderModel, x: &DMatrix<f64>) -> f64 {
    let s = encode_matrix(model, x);
    let r = decode_matrix(model, &s);
    (r - x).norm_squared()
}

/// Mean over patches of the squared reconstruction error.
pub fn reconstruction_error(model: &AutoencoderModel, p: &PatchMatrix) -> Result<f64> {
    reconstruction_error_threaded(model, p, 1)
}

pub fn reconstruction_error_threaded(
    model: &AutoencoderModel,
    p: &PatchMatrix,
    threads: usize,
) -> Result<f64> {
    check_dim(model, p)?;
    if p.count() == 0 {
        return Err(Error::InvalidArgument("no patches".into()));
    }
    let total: f64 = map_chunks(p.matrix(), threads, |x| chunk_sse(model, &x))
        .into_iter()
        .sum();
    Ok(total / p.count() as f64)
}

/// Reconstruction error plus weight penalty.
pub fn cost(model: &AutoencoderModel, p: &PatchMatrix, reg: &Regularizer) -> Result<f64> {
    cost_threaded(model, p, reg, 1)
}

/// [`cost`] evaluated over `threads` column chunks, summed in chunk order.
pub fn cost_threaded(
    model: &AutoencoderModel,
    p: &PatchMatrix,
    reg: &Regularizer,
    threads: usize,
) -> Result<f64> {
    Ok(reconstruction_error_threaded(model, p, threads)? + penalty(reg, model))
}

/// Unnormalized data-term gradient for one chunk of columns, plus its SSE.
fn chunk_gradient(model: &AutoencoderModel, x: &DMatrix<f64>) -> (Gradients, f64) {
    let s = encode_matrix(model, x);
    let mut err = decode_matrix(model, &s);
    err -= x;
    let sse = err.norm_squared();
    err *= 2.0;

    // decoder: dJ/dW2 = S dR^T, dJ/db2 = rowsum(dR)
    let dw2 = &s * err.transpose();
    let db2 = err.column_sum();

    // back through the sigmoid
    let mut dz = &model.w2 * &err;
    dz.zip_apply(&s, |g, a| *g *= a * (1.0 - a));
    let dw1 = x * dz.transpose();
    let db1 = dz.column_sum();

    (Gradients { dw1, db1, dw2, db2 }, sse)
}

/// Analytic gradient of [`cost`]. The l1 term uses `sign(w)` with `sign(0) = 0`.
pub fn gradient(model: &AutoencoderModel, p: &PatchMatrix, reg: &Regularizer) -> Result<Gradients> {
    Ok(cost_and_gradient(model, p, reg, 1)?.1)
}

/// Cost and gradient from one forward pass, over `threads` column chunks.
pub fn cost_and_gradient(
    model: &AutoencoderModel,
    p: &PatchMatrix,
    reg: &Regularizer,
    threads: usize,
) -> Result<(f64, Gradients)> {
    check_dim(model, p)?;
    let n = p.count();
    if n == 0 {
        return Err(Error::InvalidArgument("no patches".into()));
    }
    let mut grads = Gradients::zeros_like(model);
    let mut sse = 0.0;
    for (g, e) in map_chunks(p.matrix(), threads, |x| chunk_gradient(model, &x)) {
        grads.add_assign(&g);
        sse += e;
    }
    grads.scale(1.0 / n as f64);
    add_penalty_gradient(reg, model, &mut grads);
    Ok((sse / n as f64 + penalty(reg, model), grads))
}

fn add_penalty_gradient(reg: &Regularizer, model: &AutoencoderModel, grads: &mut Gradients) {
    let (beta, lambda) = (reg.beta, reg.lambda);
    if beta == 0.0 && lambda == 0.0 {
        return;
    }
    let term = |w: f64| {
        let sign = if w > 0.0 {
            1.0
        } else if w < 0.0 {
            -1.0
        } else {
            0.0
        };
        beta * sign + 2.0 * lambda * w
    };
    grads.dw1.zip_apply(&model.w1, |g, w| *g += term(w));
    grads.dw2.zip_apply(&model.w2, |g, w| *g += term(w));
}

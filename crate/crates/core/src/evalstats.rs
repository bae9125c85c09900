//! Correlation and accuracy statistics for validating objective scores.

use crate::error::{Error, Result};

/// Objective scores paired with reference (subjective) scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    objective: Vec<f64>,
    subjective: Vec<f64>,
}

impl ScorePair {
    pub fn new(objective: Vec<f64>, subjective: Vec<f64>) -> Result<Self> {
        check_pair(&objective, &subjective)?;
        Ok(Self {
            objective,
            subjective,
        })
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn subjective(&self) -> &[f64] {
        &self.subjective
    }

    pub fn pearson(&self) -> Result<f64> {
        pearson(&self.objective, &self.subjective)
    }

    pub fn spearman(&self) -> Result<f64> {
        spearman(&self.objective, &self.subjective)
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} values", x.len()),
            found: y.len().to_string(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean(i+1 ..= j)
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// `1 - 6 sum(d^2) / (n (n^2 - 1))`; only valid when neither input has ties.
pub fn spearman_tie_free(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    if has_ties(x) || has_ties(y) {
        return Err(Error::InvalidArgument(
            "rank-difference formula requires tie-free inputs".into(),
        ));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

fn has_ties(v: &[f64]) -> bool {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// Fraction of positions where the labels agree.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", truth.len()),
            found: predictions.len().to_string(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no labels".into()));
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

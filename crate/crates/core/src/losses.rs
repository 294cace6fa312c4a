//! Loss terms and their gradients with respect to feature vectors.
//!
//! * triplet hinge on squared Euclidean distances,
//! * quantization loss pulling each feature toward its bit,
//! * bit-balance (entropy) loss pushing each bit's mean activation to 0.5,
//! * rotation-invariance loss, used for the ablation baseline.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, shape_err, Error, Result};
use crate::matrix::FeatureMatrix;
use crate::DEFAULT_THRESHOLD;

/// Weights of the triplet, quantization and entropy terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(config_err!("loss weights must be finite and non-negative: {self:?}"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(config_err!("at least one loss weight must be non-zero"));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripletConfig {
    pub margin: f64,
}

impl TripletConfig {
    pub fn new(margin: f64) -> Result<Self> {
        let c = Self { margin };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(config_err!("triplet margin must be positive, got {}", self.margin));
        }
        Ok(())
    }
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { margin: 1.0 }
    }
}

/// Per-component loss values for one batch or one epoch.
///
/// `l_entropy_binary` evaluates the bit-balance term on hard bits; it is
/// reported but never differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub l_total: f64,
    pub l_triplet: f64,
    pub l_quant: f64,
    pub l_entropy: f64,
    pub l_entropy_binary: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.l_total, self.l_triplet, self.l_quant, self.l_entropy, self.l_entropy_binary]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Field-wise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        if reports.is_empty() {
            return LossReport::default();
        }
        let n = reports.len() as f64;
        let mut acc = LossReport::default();
        for r in reports {
            acc.l_total += r.l_total;
            acc.l_triplet += r.l_triplet;
            acc.l_quant += r.l_quant;
            acc.l_entropy += r.l_entropy;
            acc.l_entropy_binary += r.l_entropy_binary;
        }
        LossReport {
            l_total: acc.l_total / n,
            l_triplet: acc.l_triplet / n,
            l_quant: acc.l_quant / n,
            l_entropy: acc.l_entropy / n,
            l_entropy_binary: acc.l_entropy_binary / n,
        }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape_err!("vector lengths differ: {} vs {}", a.len(), b.len()));
    }
    Ok(())
}

/// Squared Euclidean distance.
pub fn euclidean_sq(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Gradients of a per-triplet loss with respect to the three feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrads {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// `max(0, m + |a - p|^2 - |a - n|^2)` and its gradient.
pub fn triplet_loss(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    config: &TripletConfig,
) -> Result<(f64, TripletGrads)> {
    check_len(anchor, positive)?;
    check_len(anchor, negative)?;
    let m = anchor.len();
    let d_pos = euclidean_sq(anchor, positive)?;
    let d_neg = euclidean_sq(anchor, negative)?;
    let hinge = config.margin + d_pos - d_neg;
    let mut grads = TripletGrads { anchor: vec![0.0; m], positive: vec![0.0; m], negative: vec![0.0; m] };
    if hinge <= 0.0 {
        return Ok((0.0, grads));
    }
    for i in 0..m {
        grads.anchor[i] = 2.0 * (negative[i] - positive[i]);
        grads.positive[i] = -2.0 * (anchor[i] - positive[i]);
        grads.negative[i] = 2.0 * (anchor[i] - negative[i]);
    }
    Ok((hinge, grads))
}

/// `|a - p|^2` and its gradient; `negative` of the returned grads is empty.
pub fn rotation_invariance_loss(anchor: &[f64], positive: &[f64]) -> Result<(f64, TripletGrads)> {
    let loss = euclidean_sq(anchor, positive)?;
    let anchor_grad: Vec<f64> = anchor.iter().zip(positive).map(|(a, p)| 2.0 * (a - p)).collect();
    let positive_grad = anchor_grad.iter().map(|g| -g).collect();
    Ok((loss, TripletGrads { anchor: anchor_grad, positive: positive_grad, negative: Vec::new() }))
}

#[inline]
fn bit(v: f64) -> f64 {
    if v > DEFAULT_THRESHOLD {
        1.0
    } else {
        0.0
    }
}

/// Mean over rows of `sum_m (F_nm - b_nm)^2`, with `b` treated as a constant
/// in the gradient.
pub fn quantization_loss(features: &FeatureMatrix) -> Result<(f64, FeatureMatrix)> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::Usage("quantization loss needs a non-empty batch".into()));
    }
    if features.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("quantization loss input is not finite".into()));
    }
    let mut grads = FeatureMatrix::zeros(n, features.cols());
    let mut loss = 0.0;
    for (g, &f) in grads.as_mut_slice().iter_mut().zip(features.as_slice()) {
        let diff = f - bit(f);
        loss += diff * diff;
        *g = 2.0 * diff / n as f64;
    }
    Ok((loss / n as f64, grads))
}

/// Per-bit mean of `clamp(F, 0, 1)` over the batch.
pub fn relaxed_bit_means(features: &FeatureMatrix) -> Vec<f64> {
    column_means(features, |v| v.clamp(0.0, 1.0))
}

/// Fraction of rows with each bit set.
pub fn binary_bit_means(features: &FeatureMatrix) -> Vec<f64> {
    column_means(features, bit)
}

fn column_means(features: &FeatureMatrix, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut means = vec![0.0; features.cols()];
    for row in features.iter_rows() {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += f(v);
        }
    }
    let n = features.rows().max(1) as f64;
    means.iter_mut().for_each(|m| *m /= n);
    means
}

/// Bit-balance loss `sum_m (mu_m - 0.5)^2` on relaxed bit means.
///
/// Returns `(loss, gradient, loss_on_hard_bits)`. The gradient flows only
/// through entries strictly inside `(0, 1)`.
pub fn entropy_loss(features: &FeatureMatrix) -> Result<(f64, FeatureMatrix, f64)> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::Usage("entropy loss needs a non-empty batch".into()));
    }
    let relaxed = relaxed_bit_means(features);
    let loss = relaxed.iter().map(|m| (m - 0.5) * (m - 0.5)).sum();
    let loss_binary = binary_bit_means(features).iter().map(|m| (m - 0.5) * (m - 0.5)).sum();
    let mut grads = FeatureMatrix::zeros(n, features.cols());
    for r in 0..n {
        let (src, dst) = (features.row(r), grads.row_mut(r));
        for ((g, &f), mu) in dst.iter_mut().zip(src).zip(&relaxed) {
            if f > 0.0 && f < 1.0 {
                *g = 2.0 * (mu - 0.5) / n as f64;
            }
        }
    }
    Ok((loss, grads, loss_binary))
}

/// Mean absolute gap `|F - b|` over every entry.
pub fn quantization_gap(features: &FeatureMatrix) -> f64 {
    let s = features.as_slice();
    if s.is_empty() {
        return 0.0;
    }
    s.iter().map(|&f| libm::fabs(f - bit(f))).sum::<f64>() / s.len() as f64
}

/// Which pairwise term drives the second training phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PairTerm {
    #[default]
    Triplet,
    /// Pull each anchor toward its rotation; negatives are ignored by the term.
    RotationInvariance,
}

/// Gradients for each block of rows passed to [`combined_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedGrads {
    pub anchors: FeatureMatrix,
    pub positives: FeatureMatrix,
    pub negatives: FeatureMatrix,
}

/// Quantization and entropy terms only: `beta * L_Q + gamma * L_E`.
pub fn regularizer_loss(features: &FeatureMatrix, weights: &LossWeights) -> Result<(LossReport, FeatureMatrix)> {
    weights.validate()?;
    let (l_quant, mut grads) = quantization_loss(features)?;
    let (l_entropy, g_entropy, l_entropy_binary) = entropy_loss(features)?;
    grads.scale(weights.beta);
    grads.add_scaled(&g_entropy, weights.gamma)?;
    let report = LossReport {
        l_total: weights.beta * l_quant + weights.gamma * l_entropy,
        l_triplet: 0.0,
        l_quant,
        l_entropy,
        l_entropy_binary,
    };
    Ok((report, grads))
}

/// `alpha * L_T + beta * L_Q + gamma * L_E` over a batch of triplets.
///
/// Row `i` of the three matrices forms one triplet. The pair term is averaged
/// over triplets; quantization and entropy run over all `3 * T` rows.
pub fn combined_loss(
    anchors: &FeatureMatrix,
    positives: &FeatureMatrix,
    negatives: &FeatureMatrix,
    weights: &LossWeights,
    config: &TripletConfig,
) -> Result<(LossReport, CombinedGrads)> {
    combined_loss_with(PairTerm::Triplet, anchors, positives, negatives, weights, config)
}

/// [`combined_loss`] with a selectable pair term.
pub fn combined_loss_with(
    term: PairTerm,
    anchors: &FeatureMatrix,
    positives: &FeatureMatrix,
    negatives: &FeatureMatrix,
    weights: &LossWeights,
    config: &TripletConfig,
) -> Result<(LossReport, CombinedGrads)> {
    weights.validate()?;
    config.validate()?;
    let t = anchors.rows();
    if t == 0 {
        return Err(Error::Usage("combined loss needs at least one triplet".into()));
    }
    if positives.rows() != t || negatives.rows() != t {
        return Err(shape_err!("triplet blocks have {}, {} and {} rows", t, positives.rows(), negatives.rows()));
    }

    let stacked = FeatureMatrix::vstack(&[anchors, positives, negatives])?;
    let (mut report, reg_grads) = regularizer_loss(&stacked, weights)?;

    let mut pair_loss = 0.0;
    let mut pair = FeatureMatrix::zeros(3 * t, anchors.cols());
    for i in 0..t {
        let (loss, g) = match term {
            PairTerm::Triplet => triplet_loss(anchors.row(i), positives.row(i), negatives.row(i), config)?,
            PairTerm::RotationInvariance => rotation_invariance_loss(anchors.row(i), positives.row(i))?,
        };
        pair_loss += loss;
        pair.row_mut(i).copy_from_slice(&g.anchor);
        pair.row_mut(t + i).copy_from_slice(&g.positive);
        if !g.negative.is_empty() {
            pair.row_mut(2 * t + i).copy_from_slice(&g.negative);
        }
    }
    let inv_t = 1.0 / t as f64;
    report.l_triplet = pair_loss * inv_t;
    report.l_total += weights.alpha * report.l_triplet;

    let mut grads = reg_grads;
    grads.add_scaled(&pair, weights.alpha * inv_t)?;
    Ok((
        report,
        CombinedGrads {
            anchors: grads.slice_rows(0, t),
            positives: grads.slice_rows(t, t),
            negatives: grads.slice_rows(2 * t, t),
        },
    ))
}

//! Label-smoothing targets and the smoothed objective.
//!
//! A smoothed target keeps `1 − α` on the gold label and spreads `α`
//! evenly over the other `|Y| − 1` labels. The loss is
//! `KL(target ‖ softmax(z))`. It differs from the cross-entropy
//! `H(target, softmax(z))` only by the target's entropy, a constant, so
//! both share gradients and minimizers. `α = 0` is plain maximum likelihood.

use crate::error::{Error, Result};
use crate::numerics::{kl_divergence, softmax, ProbabilityVector};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    alpha: f64,
    num_classes: usize,
}

impl SmoothingConfig {
    /// `alpha` must lie in `[0, 1)`; zero gives one-hot targets.
    pub fn new(alpha: f64, num_classes: usize) -> Result<Self> {
        if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
            return Err(Error::InvalidArgument(format!(
                "smoothing alpha must be in [0, 1), got {alpha}"
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "label smoothing needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self { alpha, num_classes })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// A per-example training target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    gold_label: usize,
    target: ProbabilityVector,
}

impl TargetDistribution {
    pub fn gold_label(&self) -> usize {
        self.gold_label
    }

    pub fn probs(&self) -> &[f64] {
        self.target.probs()
    }

    pub fn as_distribution(&self) -> &ProbabilityVector {
        &self.target
    }
}

pub fn smooth_targets(gold_label: usize, config: &SmoothingConfig) -> Result<TargetDistribution> {
    let k = config.num_classes;
    if gold_label >= k {
        return Err(Error::InvalidArgument(format!(
            "gold label {gold_label} out of range for {k} classes"
        )));
    }
    let off = config.alpha / (k - 1) as f64;
    let mut probs = vec![off; k];
    probs[gold_label] = 1.0 - config.alpha;
    Ok(TargetDistribution {
        gold_label,
        target: ProbabilityVector::new(probs)?,
    })
}

/// `KL(target ‖ softmax(logits))`, in the log domain.
pub fn smoothed_loss(logits: &[f64], target: &TargetDistribution) -> Result<f64> {
    check_arity(logits, target)?;
    kl_divergence(&target.target, &softmax(logits)?)
}

/// Gradient of [`smoothed_loss`] with respect to the logits:
/// `softmax(logits) − target`.
pub fn loss_gradient(logits: &[f64], target: &TargetDistribution) -> Result<Vec<f64>> {
    check_arity(logits, target)?;
    let p = softmax(logits)?;
    Ok(p.probs().iter().zip(target.probs()).map(|(p, q)| p - q).collect())
}

/// Loss and gradient from a single softmax evaluation.
pub(crate) fn loss_and_gradient(logits: &[f64], target: &TargetDistribution) -> Result<(f64, Vec<f64>)> {
    check_arity(logits, target)?;
    let p = softmax(logits)?;
    let loss = kl_divergence(&target.target, &p)?;
    let grad = p.probs().iter().zip(target.probs()).map(|(p, q)| p - q).collect();
    Ok((loss, grad))
}

fn check_arity(logits: &[f64], target: &TargetDistribution) -> Result<()> {
    if logits.len() != target.target.len() {
        return Err(Error::LengthMismatch {
            expected: target.target.len(),
            found: logits.len(),
        });
    }
    Ok(())
}

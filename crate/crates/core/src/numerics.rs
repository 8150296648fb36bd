//! Probability kernels over raw logits.
//!
//! Everything log-shaped (NLL, KL, entropy) is evaluated from log-softmax
//! values, never by taking the log of an exponentiated probability. Cached
//! logits from large models routinely sit in a range where `exp` overflows
//! or a posterior entry underflows to zero.
//!
//! The temperature kernels at the bottom operate on *max-shifted* logits
//! (`z_i - max z`). Both the one-shot path ([`confidence_outcome`],
//! [`logit_nll`]) and the cached line search reuse them, which keeps the two
//! paths bitwise identical.

use crate::error::{Error, Result};
use crate::store::PredictionRecord;

/// Tolerance on `Σ p_i = 1` accepted by [`ProbabilityVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A categorical distribution together with its log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates an explicit probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidArgument("probability entries must lie in [0, 1]".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { probs, log_probs })
    }

    /// Point mass on `label`.
    pub fn one_hot(label: usize, num_classes: usize) -> Result<Self> {
        if label >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        let mut probs = vec![0.0; num_classes];
        probs[label] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the maximum entry, ties broken by lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 logits, got {}",
            logits.len()
        )));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok(())
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature.is_finite() && temperature > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(temperature))
    }
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Result<ProbabilityVector> {
    check_logits(logits)?;
    let max = logits[argmax(logits)];
    let shifted: Vec<f64> = logits.iter().map(|z| z - max).collect();
    let exps: Vec<f64> = shifted.iter().map(|d| d.exp()).collect();
    let total: f64 = exps.iter().sum();
    let log_total = total.ln();
    Ok(ProbabilityVector {
        probs: exps.iter().map(|e| e / total).collect(),
        log_probs: shifted.iter().map(|d| d - log_total).collect(),
    })
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(logits)?.log_probs)
}

/// Elementwise `z / T`.
pub fn apply_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    Ok(logits.iter().map(|z| z / temperature).collect())
}

/// `-log p[gold]`, read from the stored log-probabilities.
pub fn nll(probs: &ProbabilityVector, gold_label: usize) -> Result<f64> {
    let log_p = probs
        .log_probs
        .get(gold_label)
        .ok_or_else(|| Error::InvalidArgument(format!("gold label {gold_label} out of range")))?;
    Ok((-log_p).max(0.0))
}

/// `Σ target_i · log(target_i / probs_i)` with `0 · log 0 = 0`.
pub fn kl_divergence(target: &ProbabilityVector, probs: &ProbabilityVector) -> Result<f64> {
    if target.len() != probs.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            found: probs.len(),
        });
    }
    let divergence: f64 = target
        .probs
        .iter()
        .zip(&target.log_probs)
        .zip(&probs.log_probs)
        .filter(|((t, _), _)| **t > 0.0)
        .map(|((t, log_t), log_p)| t * (log_t - log_p))
        .sum();
    Ok(divergence.max(0.0))
}

/// Shannon entropy in nats.
pub fn entropy(probs: &ProbabilityVector) -> f64 {
    let h: f64 = probs
        .probs
        .iter()
        .zip(&probs.log_probs)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, log_p)| p * log_p)
        .sum();
    (-h).max(0.0)
}

/// The scalar confidence of one prediction and whether it was right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceOutcome {
    pub predicted_label: usize,
    pub confidence: f64,
    pub correct: bool,
}

/// Predicted label, max-probability confidence at temperature `T`, and
/// correctness against the gold label.
pub fn confidence_outcome(record: &PredictionRecord, temperature: f64) -> Result<ConfidenceOutcome> {
    check_logits(&record.logits)?;
    check_temperature(temperature)?;
    let shifted = shift_by_max(&record.logits);
    let predicted_label = argmax(&record.logits);
    Ok(ConfidenceOutcome {
        predicted_label,
        confidence: max_prob_from_shifted(&shifted, temperature),
        correct: predicted_label == record.gold_label,
    })
}

/// NLL of the gold label under `softmax(z / T)`.
pub fn logit_nll(record: &PredictionRecord, temperature: f64) -> Result<f64> {
    check_logits(&record.logits)?;
    check_temperature(temperature)?;
    if record.gold_label >= record.logits.len() {
        return Err(Error::InvalidArgument(format!(
            "gold label {} out of range",
            record.gold_label
        )));
    }
    Ok(nll_from_shifted(
        &shift_by_max(&record.logits),
        record.gold_label,
        temperature,
    ))
}

pub(crate) fn shift_by_max(logits: &[f64]) -> Vec<f64> {
    let max = logits[argmax(logits)];
    logits.iter().map(|z| z - max).collect()
}

/// `Σ exp(d_i / T)` for max-shifted `d`; always ≥ 1.
#[inline]
fn scaled_partition(shifted: &[f64], temperature: f64) -> f64 {
    shifted.iter().map(|d| (d / temperature).exp()).sum()
}

#[inline]
pub(crate) fn max_prob_from_shifted(shifted: &[f64], temperature: f64) -> f64 {
    1.0 / scaled_partition(shifted, temperature)
}

#[inline]
pub(crate) fn nll_from_shifted(shifted: &[f64], gold_label: usize, temperature: f64) -> f64 {
    let value = scaled_partition(shifted, temperature).ln() - shifted[gold_label] / temperature;
    value.max(0.0)
}

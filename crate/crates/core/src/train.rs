//! A linear softmax classifier trained by seeded minibatch gradient descent
//! on the (optionally label-smoothed) KL objective.
//!
//! Training is single-threaded and draws all randomness from the config
//! seed, so identical inputs give bitwise-identical parameters.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::smoothing::{loss_and_gradient, smooth_targets, SmoothingConfig, TargetDistribution};
use crate::store::{LabelSpace, PredictionRecord, PredictionSet, SplitTag};

/// Labeled feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    feature_dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl FeatureSet {
    pub fn new(feature_dim: usize, num_classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        LabelSpace::new(num_classes)?;
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be ≥ 1".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::LengthMismatch {
                expected: labels.len() * feature_dim,
                found: features.len(),
            });
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            feature_dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .chunks_exact(self.feature_dim)
            .zip(self.labels.iter().copied())
    }

    /// CSV with header `f_0,...,f_{d-1},label`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.feature_dim)
            .map(|j| format!("f_{j}"))
            .chain(std::iter::once("label".into()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (row, label) in self.rows() {
            for x in row {
                write!(out, "{x:?},")?;
            }
            writeln!(out, "{label}")?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`FeatureSet::write_csv`].
    pub fn read_csv<R: Read>(reader: R, num_classes: usize) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or(Error::Empty("feature file has no header"))?
            .map_err(|source| Error::Io {
                path: Default::default(),
                source,
            })?;
        let columns: Vec<&str> = header.trim().split(',').collect();
        let feature_dim = columns.len().saturating_sub(1);
        let header_ok = columns.last() == Some(&"label")
            && columns[..feature_dim]
                .iter()
                .enumerate()
                .all(|(j, c)| *c == format!("f_{j}"));
        if !header_ok || feature_dim == 0 {
            return Err(Error::MalformedRow {
                line: 1,
                message: "expected header f_0,...,f_{d-1},label".into(),
            });
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let text = line.map_err(|source| Error::Io {
                path: Default::default(),
                source,
            })?;
            if text.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = text.trim().split(',').collect();
            if fields.len() != feature_dim + 1 {
                return Err(Error::InconsistentArity {
                    line: line_no,
                    expected: feature_dim,
                    found: fields.len().saturating_sub(1),
                });
            }
            let malformed = |message: String| Error::MalformedRow { line: line_no, message };
            for field in &fields[..feature_dim] {
                features.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| malformed(format!("bad feature {field:?}")))?,
                );
            }
            labels.push(
                fields[feature_dim]
                    .parse::<usize>()
                    .map_err(|_| malformed(format!("bad label {:?}", fields[feature_dim])))?,
            );
        }
        Self::new(feature_dim, num_classes, features, labels)
    }
}

/// `logits = W x + b`, with `W` stored row-major as `num_classes × feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    num_classes: usize,
    feature_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearSoftmaxModel {
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            num_classes,
            feature_dim,
            weights: vec![0.0; num_classes * feature_dim],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn from_parts(num_classes: usize, feature_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != num_classes * feature_dim {
            return Err(Error::LengthMismatch {
                expected: num_classes * feature_dim,
                found: weights.len(),
            });
        }
        if bias.len() != num_classes {
            return Err(Error::LengthMismatch {
                expected: num_classes,
                found: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            num_classes,
            feature_dim,
            weights,
            bias,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.feature_dim)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    /// Runs the model over a feature set, producing a cacheable
    /// prediction log.
    pub fn predict(&self, data: &FeatureSet, split_tag: SplitTag) -> Result<PredictionSet> {
        self.check_dims(data)?;
        let records = data
            .rows()
            .map(|(x, y)| PredictionRecord::new(self.logits(x), y))
            .collect();
        PredictionSet::new(records, split_tag)
    }

    fn check_dims(&self, data: &FeatureSet) -> Result<()> {
        if data.feature_dim != self.feature_dim {
            return Err(Error::LengthMismatch {
                expected: self.feature_dim,
                found: data.feature_dim,
            });
        }
        if data.num_classes != self.num_classes {
            return Err(Error::LengthMismatch {
                expected: self.num_classes,
                found: data.num_classes,
            });
        }
        Ok(())
    }

    /// Flat parameter CSV: a header line
    /// `num_classes=K,feature_dim=D,seed=S`, then one line holding the
    /// weights (row-major) followed by the bias.
    pub fn write_params<W: Write>(&self, mut out: W, seed: u64) -> std::io::Result<()> {
        writeln!(
            out,
            "num_classes={},feature_dim={},seed={seed}",
            self.num_classes, self.feature_dim
        )?;
        let values: Vec<String> = self
            .weights
            .iter()
            .chain(&self.bias)
            .map(|v| format!("{v:?}"))
            .collect();
        writeln!(out, "{}", values.join(","))
    }

    /// Parses [`LinearSoftmaxModel::write_params`] output; returns the
    /// model and the recorded seed.
    pub fn read_params<R: Read>(reader: R) -> Result<(Self, u64)> {
        let mut text = String::new();
        BufReader::new(reader)
            .read_to_string(&mut text)
            .map_err(|source| Error::Io {
                path: Default::default(),
                source,
            })?;
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Empty("parameter file"))?;
        let field = |name: &str| -> Result<u64> {
            header
                .split(',')
                .find_map(|kv| kv.strip_prefix(name)?.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::MalformedRow {
                    line: 1,
                    message: format!("missing {name} in header"),
                })
        };
        let num_classes = field("num_classes")? as usize;
        let feature_dim = field("feature_dim")? as usize;
        let seed = field("seed")?;
        let values = lines
            .next()
            .ok_or(Error::Empty("parameter values"))?
            .split(',')
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::MalformedRow {
                    line: 2,
                    message: format!("bad parameter {v:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let split = num_classes * feature_dim;
        if values.len() != split + num_classes {
            return Err(Error::LengthMismatch {
                expected: split + num_classes,
                found: values.len(),
            });
        }
        let model = Self::from_parts(
            num_classes,
            feature_dim,
            values[..split].to_vec(),
            values[split..].to_vec(),
        )?;
        Ok((model, seed))
    }
}

/// Maximum likelihood or label smoothing with the given `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainObjective {
    Mle,
    LabelSmoothing(f64),
}

impl TrainObjective {
    pub fn alpha(&self) -> f64 {
        match self {
            TrainObjective::Mle => 0.0,
            TrainObjective::LabelSmoothing(alpha) => *alpha,
        }
    }
}

impl fmt::Display for TrainObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainObjective::Mle => f.write_str("mle"),
            TrainObjective::LabelSmoothing(_) => f.write_str("ls"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Batches larger than the dataset mean full-batch descent.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: LinearSoftmaxModel,
    /// Mean training loss of each epoch, accumulated over its minibatches
    /// at the parameters each batch saw.
    pub epoch_losses: Vec<f64>,
}

/// Mean smoothed loss of `model` over `data`.
pub fn mean_loss(model: &LinearSoftmaxModel, data: &FeatureSet, objective: TrainObjective) -> Result<f64> {
    model.check_dims(data)?;
    let targets = build_targets(data, objective)?;
    let total = data
        .rows()
        .zip(&targets)
        .map(|((x, _), t)| loss_and_gradient(&model.logits(x), t).map(|(loss, _)| loss))
        .sum::<Result<f64>>()?;
    Ok(total / data.len() as f64)
}

fn build_targets(data: &FeatureSet, objective: TrainObjective) -> Result<Vec<TargetDistribution>> {
    let config = SmoothingConfig::new(objective.alpha(), data.num_classes)?;
    data.labels.iter().map(|&y| smooth_targets(y, &config)).collect()
}

pub fn train(
    model: LinearSoftmaxModel,
    data: &FeatureSet,
    objective: TrainObjective,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    model.check_dims(data)?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be > 0, got {}",
            config.learning_rate
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
    }
    let targets = build_targets(data, objective)?;
    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (k, d) = (model.num_classes, model.feature_dim);
    let mut grad_w = vec![0.0; k * d];
    let mut grad_b = vec![0.0; k];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.batch_size < data.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad_w.fill(0.0);
            grad_b.fill(0.0);
            for &i in batch {
                let x = data.row(i);
                let (loss, grad) = loss_and_gradient(&model.logits(x), &targets[i]).map_err(|err| match err {
                    Error::NonFinite(_) => Error::Diverged { epoch, loss: f64::NAN },
                    other => other,
                })?;
                epoch_loss += loss;
                for (c, g) in grad.iter().enumerate() {
                    grad_b[c] += g;
                    for (gw, xj) in grad_w[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *gw += g * xj;
                    }
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= scale * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= scale * g;
            }
            if !epoch_loss.is_finite() || !model.weights.iter().chain(&model.bias).all(|w| w.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    loss: epoch_loss / data.len() as f64,
                });
            }
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainedModel { model, epoch_losses })
}

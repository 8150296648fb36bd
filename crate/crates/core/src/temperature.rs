//! Post-hoc temperature scaling fitted by exhaustive line search.
//!
//! The dev set's logits are max-shifted once and cached; every grid point
//! only rescales the cache. The curve over the whole grid is kept so flat
//! or multi-modal objectives can be inspected afterwards (ECE is piecewise
//! constant in `T` and ties are common).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ece, evaluate, reliability_table, BinSpec};
use crate::numerics::{
    argmax, check_temperature, logit_nll, max_prob_from_shifted, nll_from_shifted, shift_by_max, ConfidenceOutcome,
};
use crate::store::PredictionSet;

pub const DEFAULT_GRID_LO: f64 = 0.01;
pub const DEFAULT_GRID_HI: f64 = 5.0;
pub const DEFAULT_GRID_STEP: f64 = 0.01;

const MAX_GRID_POINTS: usize = 10_000_000;

/// Candidate temperatures `lo, lo + step, ...`, always ending exactly at `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    lo: f64,
    hi: f64,
    step: f64,
}

impl SearchGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
            return Err(Error::InvalidGrid("bounds and step must be finite".into()));
        }
        if lo <= 0.0 {
            return Err(Error::InvalidGrid(format!("lo must be > 0, got {lo}")));
        }
        if lo > hi {
            return Err(Error::InvalidGrid(format!("lo {lo} exceeds hi {hi}")));
        }
        if step <= 0.0 {
            return Err(Error::InvalidGrid(format!("step must be > 0, got {step}")));
        }
        if (hi - lo) / step >= MAX_GRID_POINTS as f64 {
            return Err(Error::InvalidGrid("too many grid points".into()));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// The grid points in ascending order.
    ///
    /// `lo + i·step` accumulates binary rounding noise (0.01 + 2·0.01 is not
    /// the double nearest 0.03), so points within 1e-12 of a multiple of
    /// 1e-9 are snapped onto it. A fitted `T` printed with two decimals and
    /// parsed back is then the same double the curve was evaluated at.
    pub fn points(&self) -> Vec<f64> {
        let steps = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        let mut points: Vec<f64> = (0..=steps)
            .map(|i| snap(self.lo + i as f64 * self.step).min(self.hi))
            .collect();
        let last = *points.last().expect("grid has at least one point");
        if self.hi - last > 1e-9 * self.step {
            points.push(self.hi);
        }
        points.dedup();
        points
    }
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            lo: DEFAULT_GRID_LO,
            hi: DEFAULT_GRID_HI,
            step: DEFAULT_GRID_STEP,
        }
    }
}

fn snap(x: f64) -> f64 {
    let snapped = (x * 1e9).round() / 1e9;
    if (snapped - x).abs() <= 1e-12 * x.abs().max(1.0) {
        snapped
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    #[default]
    Ece,
    Nll,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Ece => "ece",
            ObjectiveKind::Nll => "nll",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ece" => Ok(ObjectiveKind::Ece),
            "nll" => Ok(ObjectiveKind::Nll),
            other => Err(Error::InvalidArgument(format!("unknown objective {other:?}"))),
        }
    }
}

/// What the line search minimizes. `bin_spec` only matters for ECE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub bin_spec: BinSpec,
}

impl Objective {
    pub fn ece(bin_spec: BinSpec) -> Self {
        Self {
            kind: ObjectiveKind::Ece,
            bin_spec,
        }
    }

    pub fn nll() -> Self {
        Self {
            kind: ObjectiveKind::Nll,
            bin_spec: BinSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub temperature: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub objective_value: f64,
    pub curve: Vec<CurvePoint>,
}

impl TemperatureFit {
    /// Curve CSV: `temperature,objective`, temperatures with two decimals.
    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "temperature,objective")?;
        for point in &self.curve {
            writeln!(out, "{:.2},{:?}", point.temperature, point.value)?;
        }
        Ok(())
    }
}

/// Max-shifted logits of a whole set, computed once.
#[derive(Debug, Clone)]
pub struct CachedLogits {
    num_classes: usize,
    shifted: Vec<f64>,
    gold: Vec<usize>,
    predicted: Vec<usize>,
}

impl CachedLogits {
    pub fn new(set: &PredictionSet) -> Self {
        let num_classes = set.num_classes();
        let mut shifted = Vec::with_capacity(set.len() * num_classes);
        let mut gold = Vec::with_capacity(set.len());
        let mut predicted = Vec::with_capacity(set.len());
        for record in set.records() {
            shifted.extend(shift_by_max(&record.logits));
            gold.push(record.gold_label);
            predicted.push(argmax(&record.logits));
        }
        Self {
            num_classes,
            shifted,
            gold,
            predicted,
        }
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.shifted.chunks_exact(self.num_classes)
    }

    pub fn outcomes(&self, temperature: f64) -> Vec<ConfidenceOutcome> {
        self.rows()
            .zip(self.predicted.iter().zip(&self.gold))
            .map(|(row, (&predicted_label, &gold))| ConfidenceOutcome {
                predicted_label,
                confidence: max_prob_from_shifted(row, temperature),
                correct: predicted_label == gold,
            })
            .collect()
    }

    pub fn mean_nll(&self, temperature: f64) -> f64 {
        let total: f64 = self
            .rows()
            .zip(&self.gold)
            .map(|(row, &gold)| nll_from_shifted(row, gold, temperature))
            .sum();
        total / self.len() as f64
    }

    pub fn objective(&self, temperature: f64, objective: &Objective) -> Result<f64> {
        check_temperature(temperature)?;
        match objective.kind {
            ObjectiveKind::Nll => Ok(self.mean_nll(temperature)),
            ObjectiveKind::Ece => {
                let table = reliability_table(&self.outcomes(temperature), objective.bin_spec)?;
                Ok(ece(&table))
            }
        }
    }
}

/// Evaluates the objective at every grid point and keeps the minimizer.
/// Ties go to the smallest temperature.
pub fn fit_temperature(dev: &PredictionSet, grid: &SearchGrid, objective: &Objective) -> Result<TemperatureFit> {
    if dev.is_empty() {
        return Err(Error::Empty("dev set"));
    }
    let cache = CachedLogits::new(dev);
    let curve = grid
        .points()
        .into_iter()
        .map(|temperature| {
            Ok(CurvePoint {
                temperature,
                value: cache.objective(temperature, objective)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = curve[0];
    for point in &curve[1..] {
        if point.value < best.value {
            best = *point;
        }
    }
    Ok(TemperatureFit {
        temperature: best.temperature,
        objective_value: best.value,
        curve,
    })
}

/// One-shot objective at a single temperature, without the cache.
pub fn rescale_evaluate(set: &PredictionSet, temperature: f64, objective: &Objective) -> Result<f64> {
    match objective.kind {
        ObjectiveKind::Ece => Ok(evaluate(set, temperature, objective.bin_spec)?.ece),
        ObjectiveKind::Nll => {
            let total = set
                .records()
                .iter()
                .map(|r| logit_nll(r, temperature))
                .sum::<Result<f64>>()?;
            Ok(total / set.len() as f64)
        }
    }
}

//! Binned calibration statistics: reliability tables and expected
//! calibration error.
//!
//! ECE is `Σ_k (b_k / n) · |acc(k) − conf(k)|` over the non-empty bins,
//! where `conf(k)` is the mean confidence of the bin's members (not the bin
//! midpoint) and `acc(k)` the fraction of them predicted correctly.
//!
//! Equal-width bins are `[(i−1)/k, i/k)` with the top bin closed at 1.0. A
//! confidence lying exactly on an interior edge belongs to the higher bin.
//! Equal-mass bins split the confidence-sorted predictions into `k` runs
//! whose sizes differ by at most one.
//!
//! Outcomes are sorted by `(confidence, correct)` before accumulation, so
//! every statistic is bitwise independent of input order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{confidence_outcome, ConfidenceOutcome};
use crate::store::PredictionSet;

pub const DEFAULT_NUM_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinScheme {
    #[default]
    EqualWidth,
    EqualMass,
}

impl BinScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinScheme::EqualWidth => "equal-width",
            BinScheme::EqualMass => "equal-mass",
        }
    }
}

impl fmt::Display for BinScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BinScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-width" => Ok(BinScheme::EqualWidth),
            "equal-mass" => Ok(BinScheme::EqualMass),
            other => Err(Error::InvalidArgument(format!("unknown bin scheme {other:?}"))),
        }
    }
}

/// Number of bins and how their edges are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinSpec {
    num_bins: usize,
    scheme: BinScheme,
}

impl BinSpec {
    pub fn new(num_bins: usize, scheme: BinScheme) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::InvalidArgument("number of bins must be ≥ 1".into()));
        }
        Ok(Self { num_bins, scheme })
    }

    pub fn equal_width(num_bins: usize) -> Result<Self> {
        Self::new(num_bins, BinScheme::EqualWidth)
    }

    pub fn equal_mass(num_bins: usize) -> Result<Self> {
        Self::new(num_bins, BinScheme::EqualMass)
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn scheme(&self) -> BinScheme {
        self.scheme
    }

    /// Equal-width bin index for a confidence in `(0, 1]`, consistent with
    /// the edges `i as f64 / k as f64` reported in [`BinStats`].
    pub(crate) fn equal_width_index(&self, confidence: f64) -> usize {
        let k = self.num_bins;
        let mut idx = ((confidence * k as f64).floor() as usize).min(k - 1);
        while idx + 1 < k && confidence >= edge(idx + 1, k) {
            idx += 1;
        }
        while idx > 0 && confidence < edge(idx, k) {
            idx -= 1;
        }
        idx
    }
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            num_bins: DEFAULT_NUM_BINS,
            scheme: BinScheme::EqualWidth,
        }
    }
}

#[inline]
fn edge(i: usize, k: usize) -> f64 {
    i as f64 / k as f64
}

/// Per-bin statistics. The `Option` fields are `None` for empty bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStats {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub gap: Option<f64>,
}

impl BinStats {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn from_members(lo: f64, hi: f64, members: &[(f64, bool)]) -> Self {
        let count = members.len();
        if count == 0 {
            return Self {
                lo,
                hi,
                count,
                mean_confidence: None,
                accuracy: None,
                gap: None,
            };
        }
        let confidence_sum: f64 = members.iter().map(|(c, _)| c).sum();
        let hits = members.iter().filter(|(_, ok)| *ok).count();
        let mean_confidence = confidence_sum / count as f64;
        let accuracy = hits as f64 / count as f64;
        Self {
            lo,
            hi,
            count,
            mean_confidence: Some(mean_confidence),
            accuracy: Some(accuracy),
            gap: Some((accuracy - mean_confidence).abs()),
        }
    }
}

/// The data behind a reliability diagram: one row per bin, always exactly
/// `spec.num_bins()` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityTable {
    pub spec: BinSpec,
    pub bins: Vec<BinStats>,
    pub total: usize,
}

impl ReliabilityTable {
    pub fn ece(&self) -> f64 {
        ece(self)
    }

    /// Writes the diagram CSV:
    /// `bin_lo,bin_hi,count,avg_confidence,accuracy,gap`.
    ///
    /// Empty bins keep their row with count 0 and blank statistics. Floats
    /// use a shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,count,avg_confidence,accuracy,gap")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for bin in &self.bins {
            writeln!(
                out,
                "{:?},{:?},{},{},{},{}",
                bin.lo,
                bin.hi,
                bin.count,
                opt(bin.mean_confidence),
                opt(bin.accuracy),
                opt(bin.gap)
            )?;
        }
        Ok(())
    }
}

/// Bins `outcomes` by confidence under `spec`.
pub fn reliability_table(outcomes: &[ConfidenceOutcome], spec: BinSpec) -> Result<ReliabilityTable> {
    if outcomes.is_empty() {
        return Err(Error::Empty("no outcomes to bin"));
    }
    if let Some(bad) = outcomes.iter().find(|o| !(o.confidence > 0.0 && o.confidence <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "confidence {} outside (0, 1]",
            bad.confidence
        )));
    }

    let mut sorted: Vec<(f64, bool)> = outcomes.iter().map(|o| (o.confidence, o.correct)).collect();
    sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let k = spec.num_bins;
    let n = sorted.len();
    let bins = match spec.scheme {
        BinScheme::EqualWidth => {
            let mut bins = Vec::with_capacity(k);
            let mut start = 0;
            for i in 0..k {
                let mut end = start;
                while end < n && spec.equal_width_index(sorted[end].0) == i {
                    end += 1;
                }
                bins.push(BinStats::from_members(edge(i, k), edge(i + 1, k), &sorted[start..end]));
                start = end;
            }
            debug_assert_eq!(start, n);
            bins
        }
        BinScheme::EqualMass => {
            let starts: Vec<usize> = (0..=k).map(|j| mass_split(j, n, k)).collect();
            // Interior edge sits halfway between neighbouring members.
            let edges: Vec<f64> = (0..=k)
                .map(|j| match starts[j] {
                    _ if j == k => 1.0,
                    0 => 0.0,
                    s => 0.5 * (sorted[s - 1].0 + sorted[s].0),
                })
                .collect();
            (0..k)
                .map(|j| BinStats::from_members(edges[j], edges[j + 1], &sorted[starts[j]..starts[j + 1]]))
                .collect()
        }
    };

    Ok(ReliabilityTable { spec, bins, total: n })
}

/// Start position of equal-mass bin `j` among `n` sorted members.
pub(crate) fn mass_split(j: usize, n: usize, k: usize) -> usize {
    ((j as u128 * n as u128) / k as u128) as usize
}

/// Expected calibration error of a table; empty bins carry no weight.
pub fn ece(table: &ReliabilityTable) -> f64 {
    let n = table.total as f64;
    table
        .bins
        .iter()
        .filter_map(|bin| bin.gap.map(|gap| bin.count as f64 / n * gap))
        .sum()
}

/// Fraction of outcomes predicted correctly.
pub fn accuracy(outcomes: &[ConfidenceOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Empty("no outcomes for accuracy"));
    }
    let hits = outcomes.iter().filter(|o| o.correct).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub ece: f64,
    pub table: ReliabilityTable,
}

/// Scores a prediction set at temperature `T`. `T = 1` is the
/// out-of-the-box evaluation.
pub fn evaluate(set: &PredictionSet, temperature: f64, spec: BinSpec) -> Result<Evaluation> {
    let outcomes = outcomes_at(set, temperature)?;
    let table = reliability_table(&outcomes, spec)?;
    Ok(Evaluation {
        accuracy: accuracy(&outcomes)?,
        ece: ece(&table),
        table,
    })
}

pub fn outcomes_at(set: &PredictionSet, temperature: f64) -> Result<Vec<ConfidenceOutcome>> {
    set.records()
        .iter()
        .map(|r| confidence_outcome(r, temperature))
        .collect()
}

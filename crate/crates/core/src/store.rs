//! Prediction logs: one raw logit vector plus a gold label per example.
//!
//! Logits are the stored quantity. Probabilities are always derived, since
//! temperature scaling has to rescale the raw scores.
//!
//! Two on-disk formats are supported:
//!
//! * JSONL, one object per line with exactly the keys `logits` and `label`:
//!   `{"logits":[2.0,1.0,0.0],"label":0}`
//! * CSV with a `logit_0,...,logit_{K-1},label` header.
//!
//! The class count is inferred from the first row (or forced through
//! [`IngestOptions::num_classes`]) and enforced for every row after it.
//! Errors name the 1-based physical line of the offending row.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CLASSES: usize = 10_000;
pub const MAX_RECORDS: usize = u32::MAX as usize;

/// The label set `{0, .., num_classes - 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelSpace {
    num_classes: usize,
}

impl LabelSpace {
    pub fn new(num_classes: usize) -> Result<Self> {
        if !(2..=MAX_CLASSES).contains(&num_classes) {
            return Err(Error::LabelSpace(format!(
                "num_classes must be in [2, {MAX_CLASSES}], got {num_classes}"
            )));
        }
        Ok(Self { num_classes })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// One example: non-normalized scores and the index of the gold label.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub logits: Vec<f64>,
    pub gold_label: usize,
}

impl PredictionRecord {
    pub fn new(logits: Vec<f64>, gold_label: usize) -> Self {
        Self { logits, gold_label }
    }
}

/// Which role a prediction set plays in an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    InDomainDev,
    InDomainTest,
    OutOfDomainTest,
    UnlabeledSplit,
}

impl SplitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::InDomainDev => "in-domain-dev",
            SplitTag::InDomainTest => "in-domain-test",
            SplitTag::OutOfDomainTest => "out-of-domain-test",
            SplitTag::UnlabeledSplit => "unlabeled-split",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-domain-dev" => Ok(SplitTag::InDomainDev),
            "in-domain-test" => Ok(SplitTag::InDomainTest),
            "out-of-domain-test" => Ok(SplitTag::OutOfDomainTest),
            "unlabeled-split" => Ok(SplitTag::UnlabeledSplit),
            other => Err(Error::InvalidArgument(format!("unknown split tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a `.jsonl` / `.csv` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        })
    }
}

/// A validated, non-empty, immutable collection of prediction records over
/// one label space.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    label_space: LabelSpace,
    records: Vec<PredictionRecord>,
    split_tag: SplitTag,
}

impl PredictionSet {
    /// Builds a set, inferring the label space from the first record.
    ///
    /// Errors use the 1-based record position as the line number.
    pub fn new(records: Vec<PredictionRecord>, split_tag: SplitTag) -> Result<Self> {
        let first = records.first().ok_or(Error::Empty("prediction set"))?;
        let label_space = LabelSpace::new(first.logits.len())?;
        Self::with_label_space(label_space, records, split_tag)
    }

    pub fn with_label_space(
        label_space: LabelSpace,
        records: Vec<PredictionRecord>,
        split_tag: SplitTag,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("prediction set"));
        }
        if records.len() > MAX_RECORDS {
            return Err(Error::InvalidArgument(format!(
                "too many records ({}), limit is {MAX_RECORDS}",
                records.len()
            )));
        }
        for (i, record) in records.iter().enumerate() {
            let label = i64::try_from(record.gold_label).unwrap_or(i64::MAX);
            validate_row(i + 1, &record.logits, label, label_space.num_classes)?;
        }
        Ok(Self {
            label_space,
            records,
            split_tag,
        })
    }

    pub fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    pub fn num_classes(&self) -> usize {
        self.label_space.num_classes
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_split_tag(mut self, split_tag: SplitTag) -> Self {
        self.split_tag = split_tag;
        self
    }

    pub fn into_records(self) -> Vec<PredictionRecord> {
        self.records
    }
}

fn validate_row(line: usize, logits: &[f64], label: i64, num_classes: usize) -> Result<usize> {
    if logits.len() != num_classes {
        return Err(Error::InconsistentArity {
            line,
            expected: num_classes,
            found: logits.len(),
        });
    }
    if let Some(index) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::NonFiniteLogit { line, index });
    }
    match usize::try_from(label) {
        Ok(gold) if gold < num_classes => Ok(gold),
        _ => Err(Error::LabelOutOfRange {
            line,
            label,
            num_classes,
        }),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Forces the class count instead of inferring it from the first row.
    pub num_classes: Option<usize>,
}

/// Reads and validates a prediction file.
pub fn ingest(path: impl AsRef<Path>, format: Format, split_tag: SplitTag) -> Result<PredictionSet> {
    ingest_with(path, format, split_tag, IngestOptions::default())
}

pub fn ingest_with(
    path: impl AsRef<Path>,
    format: Format,
    split_tag: SplitTag,
    options: IngestOptions,
) -> Result<PredictionSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_predictions(BufReader::new(file), format, split_tag, options).map_err(|err| match err {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parses predictions from any reader.
pub fn read_predictions<R: Read>(
    reader: R,
    format: Format,
    split_tag: SplitTag,
    options: IngestOptions,
) -> Result<PredictionSet> {
    let mut builder = RowBuilder::new(options.num_classes)?;
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(reader), &mut builder)?,
        Format::Csv => read_csv(reader, &mut builder)?,
    }
    builder.finish(split_tag)
}

struct RowBuilder {
    num_classes: Option<usize>,
    records: Vec<PredictionRecord>,
}

impl RowBuilder {
    fn new(num_classes: Option<usize>) -> Result<Self> {
        if let Some(k) = num_classes {
            LabelSpace::new(k)?;
        }
        Ok(Self {
            num_classes,
            records: Vec::new(),
        })
    }

    fn push(&mut self, line: usize, logits: Vec<f64>, label: i64) -> Result<()> {
        let num_classes = match self.num_classes {
            Some(k) => k,
            None => {
                let k = logits.len();
                LabelSpace::new(k).map_err(|err| Error::MalformedRow {
                    line,
                    message: err.to_string(),
                })?;
                self.num_classes = Some(k);
                k
            }
        };
        let gold_label = validate_row(line, &logits, label, num_classes)?;
        if self.records.len() == MAX_RECORDS {
            return Err(Error::InvalidArgument(format!(
                "line {line}: record limit {MAX_RECORDS} exceeded"
            )));
        }
        self.records.push(PredictionRecord { logits, gold_label });
        Ok(())
    }

    fn finish(self, split_tag: SplitTag) -> Result<PredictionSet> {
        let num_classes = self.num_classes.filter(|_| !self.records.is_empty());
        let Some(num_classes) = num_classes else {
            return Err(Error::Empty("prediction file has no rows"));
        };
        Ok(PredictionSet {
            label_space: LabelSpace::new(num_classes)?,
            records: self.records,
            split_tag,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    logits: Vec<f64>,
    label: i64,
}

#[derive(Serialize)]
struct JsonRowRef<'a> {
    logits: &'a [f64],
    label: usize,
}

fn read_jsonl<R: BufRead>(reader: R, builder: &mut RowBuilder) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|source| Error::Io {
            path: Default::default(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&text).map_err(|err| Error::MalformedRow {
            line: line_no,
            message: err.to_string(),
        })?;
        builder.push(line_no, row.logits, row.label)?;
    }
    Ok(())
}

fn read_csv<R: Read>(reader: R, builder: &mut RowBuilder) -> Result<()> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = csv_reader.records();

    let header = match rows.next() {
        None => return Err(Error::Empty("prediction file has no header")),
        Some(header) => header?,
    };
    let arity = parse_header(&header)?;
    if let Some(k) = builder.num_classes {
        if k != arity {
            return Err(Error::InconsistentArity {
                line: 1,
                expected: k,
                found: arity,
            });
        }
    } else {
        let space = LabelSpace::new(arity).map_err(|err| Error::MalformedRow {
            line: 1,
            message: err.to_string(),
        })?;
        builder.num_classes = Some(space.num_classes());
    }

    for row in rows {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() < 2 {
            return Err(Error::MalformedRow {
                line,
                message: "expected logit columns followed by a label".into(),
            });
        }
        let fields: Vec<&str> = row.iter().collect();
        let (label_field, logit_fields) = fields.split_last().expect("at least two fields");
        let logits = logit_fields
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| Error::MalformedRow {
                    line,
                    message: format!("logit_{j} is not a number: {field:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = label_field.parse::<i64>().map_err(|_| Error::MalformedRow {
            line,
            message: format!("label is not an integer: {label_field:?}"),
        })?;
        builder.push(line, logits, label)?;
    }
    Ok(())
}

fn parse_header(header: &csv::StringRecord) -> Result<usize> {
    let bad = |message: String| Error::MalformedRow { line: 1, message };
    let fields: Vec<&str> = header.iter().collect();
    let Some((last, logits)) = fields.split_last() else {
        return Err(bad("empty header".into()));
    };
    if *last != "label" {
        return Err(bad(format!("last header column must be `label`, found {last:?}")));
    }
    for (j, name) in logits.iter().enumerate() {
        if *name != format!("logit_{j}") {
            return Err(bad(format!("expected header column logit_{j}, found {name:?}")));
        }
    }
    Ok(logits.len())
}

/// Writes a set in either format. Floats use a shortest round-trip
/// representation, so `read_predictions(write_predictions(s)) == s`.
pub fn write_predictions<W: Write>(set: &PredictionSet, format: Format, writer: W) -> Result<()> {
    let mut out = BufWriter::new(writer);
    let io = |source| Error::Write {
        path: Default::default(),
        source,
    };
    match format {
        Format::Jsonl => {
            for record in &set.records {
                let row = JsonRowRef {
                    logits: &record.logits,
                    label: record.gold_label,
                };
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n").map_err(io)?;
            }
        }
        Format::Csv => {
            let header: Vec<String> = (0..set.num_classes())
                .map(|j| format!("logit_{j}"))
                .chain(std::iter::once("label".to_string()))
                .collect();
            writeln!(out, "{}", header.join(",")).map_err(io)?;
            for record in &set.records {
                for z in &record.logits {
                    write!(out, "{z:?},").map_err(io)?;
                }
                writeln!(out, "{}", record.gold_label).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

pub fn write_predictions_to_path(set: &PredictionSet, format: Format, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })?;
    write_predictions(set, format, file).map_err(|err| match err {
        Error::Write { source, .. } => Error::Write {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Seeded uniform shuffle, then a split into halves whose sizes differ by at
/// most one (the first half takes the extra record). Both halves keep the
/// input's split tag.
pub fn split_half(set: &PredictionSet, seed: u64) -> Result<(PredictionSet, PredictionSet)> {
    if set.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "split_half needs at least 2 records, got {}",
            set.len()
        )));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let first_len = set.len().div_ceil(2);
    let pick = |indices: &[usize]| PredictionSet {
        label_space: set.label_space,
        records: indices.iter().map(|&i| set.records[i].clone()).collect(),
        split_tag: set.split_tag,
    };
    Ok((pick(&order[..first_len]), pick(&order[first_len..])))
}

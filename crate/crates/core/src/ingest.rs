//! Flow-record ingestion: CSV parsing, train-fitted preprocessing and
//! chronological splitting.
//!
//! Raw rows carry numeric cells and categorical strings separately. A
//! [`PreprocessSpec`] fitted on the training split turns them into dense
//! [`FlowRecord`]s: numeric columns are min-max scaled to `[0, 1]` (clipped
//! outside the train range) and categorical columns are one-hot encoded
//! against the train vocabulary.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("row {row}: non-numeric value '{value}' in column '{column}'")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}: label '{value}' is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount { row: usize, expected: usize, found: usize },
    #[error("record dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty training split")]
    EmptyTrain,
    #[error("stream is not sorted by timestamp at index {0}")]
    Unsorted(usize),
    #[error("split needs at least 3 records with every part non-empty, got {0} records")]
    TooFewRecords(usize),
    #[error("invalid split ratios {0:?}")]
    BadRatios((f64, f64, f64)),
}

/// One timestamped feature vector; the unit of streaming input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    /// Event time in fractional minutes.
    pub timestamp: f64,
    pub features: Vec<f64>,
    /// `Some(true)` for attack, `Some(false)` for benign.
    pub label: Option<bool>,
}

/// A parsed row before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFlow {
    pub timestamp: f64,
    pub numeric: Vec<f64>,
    pub categorical: Vec<String>,
    pub label: Option<bool>,
}

/// Column roles for a CSV flow file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub timestamp: String,
    pub label: Option<String>,
    /// Numeric feature columns. Empty means "every column not named elsewhere".
    pub features: Vec<String>,
    pub categorical: Vec<String>,
    pub dropped: Vec<String>,
}

impl ColumnSchema {
    pub fn new(timestamp: impl Into<String>) -> Self {
        Self {
            timestamp: timestamp.into(),
            ..Self::default()
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// A loaded stream: resolved column names plus rows in file order.
#[derive(Debug, Clone)]
pub struct RawStream {
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub records: Vec<RawFlow>,
}

impl RawStream {
    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }
}

pub fn load_stream(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<RawStream, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_stream(file, schema)
}

/// Parse a CSV flow stream from any reader. Row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn read_stream<R: Read>(reader: R, schema: &ColumnSchema) -> Result<RawStream, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();

    let index_of = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))
    };

    let ts_idx = index_of(&schema.timestamp)?;
    let label_idx = schema.label.as_deref().map(index_of).transpose()?;
    let cat_idx = schema
        .categorical
        .iter()
        .map(|c| index_of(c))
        .collect::<Result<Vec<_>, _>>()?;
    for d in &schema.dropped {
        index_of(d)?;
    }

    let numeric_columns: Vec<String> = if schema.features.is_empty() {
        header
            .iter()
            .filter(|h| {
                **h != schema.timestamp
                    && schema.label.as_deref() != Some(h.as_str())
                    && !schema.categorical.contains(h)
                    && !schema.dropped.contains(h)
            })
            .cloned()
            .collect()
    } else {
        schema.features.clone()
    };
    let num_idx = numeric_columns
        .iter()
        .map(|c| index_of(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| IngestError::Csv {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(IngestError::ColumnCount {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let number = |idx: usize| -> Result<f64, IngestError> {
            let cell = &rec[idx];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IngestError::NonNumeric {
                    row,
                    column: header[idx].clone(),
                    value: cell.to_owned(),
                }),
            }
        };
        let timestamp = number(ts_idx)?;
        let numeric = num_idx.iter().map(|&j| number(j)).collect::<Result<Vec<_>, _>>()?;
        let categorical = cat_idx.iter().map(|&j| rec[j].to_owned()).collect();
        let label = match label_idx {
            None => None,
            Some(j) => Some(parse_label(&rec[j]).ok_or_else(|| IngestError::BadLabel {
                row,
                value: rec[j].to_owned(),
            })?),
        };
        records.push(RawFlow {
            timestamp,
            numeric,
            categorical,
            label,
        });
    }

    Ok(RawStream {
        numeric_columns,
        categorical_columns: schema.categorical.clone(),
        records,
    })
}

fn parse_label(cell: &str) -> Option<bool> {
    match cell.parse::<f64>() {
        Ok(0.0) => Some(false),
        Ok(1.0) => Some(true),
        _ => None,
    }
}

/// Train-fitted scaling and encoding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    /// Indices of numeric columns that were constant on train; these map to 0.0.
    pub constant: Vec<usize>,
    /// Sorted vocabulary per categorical column.
    pub vocabularies: Vec<Vec<String>>,
}

impl PreprocessSpec {
    /// Output feature dimension after scaling and one-hot encoding.
    pub fn output_dim(&self) -> usize {
        self.mins.len() + self.vocabularies.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_constant(&self, column: usize) -> bool {
        self.constant.binary_search(&column).is_ok()
    }
}

pub fn fit_preprocess(train: &[RawFlow]) -> Result<PreprocessSpec, IngestError> {
    let first = train.first().ok_or(IngestError::EmptyTrain)?;
    let n_num = first.numeric.len();
    let n_cat = first.categorical.len();
    let mut mins = vec![f64::INFINITY; n_num];
    let mut maxs = vec![f64::NEG_INFINITY; n_num];
    let mut vocab: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); n_cat];

    for rec in train {
        if rec.numeric.len() != n_num {
            return Err(IngestError::DimensionMismatch {
                expected: n_num,
                got: rec.numeric.len(),
            });
        }
        if rec.categorical.len() != n_cat {
            return Err(IngestError::DimensionMismatch {
                expected: n_cat,
                got: rec.categorical.len(),
            });
        }
        for (j, &v) in rec.numeric.iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
        for (j, c) in rec.categorical.iter().enumerate() {
            vocab[j].insert(c);
        }
    }

    let constant = (0..n_num).filter(|&j| mins[j] == maxs[j]).collect();
    let vocabularies = vocab
        .into_iter()
        .map(|set| set.into_iter().map(str::to_owned).collect())
        .collect();
    Ok(PreprocessSpec {
        mins,
        maxs,
        constant,
        vocabularies,
    })
}

pub fn apply_preprocess(spec: &PreprocessSpec, rec: &RawFlow) -> Result<FlowRecord, IngestError> {
    if rec.numeric.len() != spec.mins.len() {
        return Err(IngestError::DimensionMismatch {
            expected: spec.mins.len(),
            got: rec.numeric.len(),
        });
    }
    if rec.categorical.len() != spec.vocabularies.len() {
        return Err(IngestError::DimensionMismatch {
            expected: spec.vocabularies.len(),
            got: rec.categorical.len(),
        });
    }
    let mut features = Vec::with_capacity(spec.output_dim());
    for (j, &v) in rec.numeric.iter().enumerate() {
        let (lo, hi) = (spec.mins[j], spec.maxs[j]);
        let scaled = if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        features.push(scaled);
    }
    for (value, vocab) in rec.categorical.iter().zip(&spec.vocabularies) {
        let hit = vocab.binary_search_by(|w| w.as_str().cmp(value)).ok();
        features.extend((0..vocab.len()).map(|k| if Some(k) == hit { 1.0 } else { 0.0 }));
    }
    Ok(FlowRecord {
        timestamp: rec.timestamp,
        features,
        label: rec.label,
    })
}

/// Boundaries of a chronological train/validation/test split:
/// train is `0..train_end`, validation `train_end..val_end`, test `val_end..len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train_end: usize,
    pub val_end: usize,
    pub len: usize,
}

impl SplitIndices {
    pub fn train(&self) -> std::ops::Range<usize> {
        0..self.train_end
    }
    pub fn validation(&self) -> std::ops::Range<usize> {
        self.train_end..self.val_end
    }
    pub fn test(&self) -> std::ops::Range<usize> {
        self.val_end..self.len
    }
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Split a timestamp-sorted stream. Train and validation sizes are floored;
/// the remainder goes to test. Every part must be non-empty.
pub fn chronological_split(timestamps: &[f64], ratios: (f64, f64, f64)) -> Result<SplitIndices, IngestError> {
    let (a, b, c) = ratios;
    let valid = [a, b, c].iter().all(|r| r.is_finite() && *r > 0.0) && ((a + b + c) - 1.0).abs() < 1e-9;
    if !valid {
        return Err(IngestError::BadRatios(ratios));
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
        return Err(IngestError::Unsorted(i + 1));
    }
    let n = timestamps.len();
    // The small slack keeps e.g. 0.7 * 100 from flooring to 69.
    let n_train = (a * n as f64 + 1e-9).floor() as usize;
    let n_val = (b * n as f64 + 1e-9).floor() as usize;
    if n < 3 || n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(IngestError::TooFewRecords(n));
    }
    Ok(SplitIndices {
        train_end: n_train,
        val_end: n_train + n_val,
        len: n,
    })
}

/// Stable sort by timestamp (file order breaks ties).
pub fn sort_chronological<T>(records: &mut [T], timestamp: impl Fn(&T) -> f64) {
    records.sort_by(|x, y| timestamp(x).total_cmp(&timestamp(y)));
}

/// Merge sources by cycling one record per source until all are drained.
pub fn interleave_round_robin<T>(sources: Vec<Vec<T>>) -> Vec<T> {
    let total = sources.iter().map(Vec::len).sum();
    let mut iters: Vec<_> = sources.into_iter().map(Vec::into_iter).collect();
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        for it in iters.iter_mut() {
            if let Some(x) = it.next() {
                out.push(x);
            }
        }
    }
    out
}

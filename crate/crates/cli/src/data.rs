//! Loading a flow CSV into preprocessed train/validation/test splits.

use flowalert::ingest::{
    apply_preprocess, chronological_split, fit_preprocess, load_stream, ColumnSchema, FlowRecord, IngestError,
    PreprocessSpec, RawStream, SplitIndices,
};
use serde::Serialize;

use crate::{CliError, DataArgs};

#[derive(Debug, Clone, Serialize)]
pub struct Prepared {
    #[serde(skip)]
    pub train: Vec<FlowRecord>,
    #[serde(skip)]
    pub validation: Vec<FlowRecord>,
    #[serde(skip)]
    pub test: Vec<FlowRecord>,
    pub split: SplitIndices,
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub labeled: bool,
    pub preprocess: PreprocessSpec,
}

impl Prepared {
    pub fn dim(&self) -> usize {
        self.preprocess.output_dim()
    }
}

fn schema(args: &DataArgs, with_label: bool) -> ColumnSchema {
    ColumnSchema {
        timestamp: args.timestamp_col.clone(),
        label: with_label.then(|| args.label_col.clone()),
        features: args.features.clone(),
        categorical: args.categorical.clone(),
        dropped: args.drop.clone(),
    }
}

fn load(args: &DataArgs) -> Result<RawStream, CliError> {
    match load_stream(&args.input, &schema(args, true)) {
        // No label column in the file: an unlabelled stream.
        Err(IngestError::MissingColumn(c)) if c == args.label_col => {
            Ok(load_stream(&args.input, &schema(args, false))?)
        }
        other => Ok(other?),
    }
}

pub fn split_ratios(split: &[f64]) -> Result<(f64, f64, f64), CliError> {
    match *split {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(CliError::Usage(format!(
            "--split needs three comma-separated fractions, got {}",
            split.len()
        ))),
    }
}

pub fn prepare(args: &DataArgs) -> Result<Prepared, CliError> {
    let ratios = split_ratios(&args.split)?;
    let raw = load(args)?;
    let timestamps: Vec<f64> = raw.records.iter().map(|r| r.timestamp).collect();
    let split = chronological_split(&timestamps, ratios)?;
    let preprocess = fit_preprocess(&raw.records[split.train()])?;
    if preprocess.output_dim() == 0 {
        return Err(CliError::Data("no feature columns selected".into()));
    }
    let records = raw
        .records
        .iter()
        .map(|r| apply_preprocess(&preprocess, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared {
        train: records[split.train()].to_vec(),
        validation: records[split.validation()].to_vec(),
        test: records[split.test()].to_vec(),
        split,
        labeled: raw.is_labeled(),
        numeric_columns: raw.numeric_columns,
        categorical_columns: raw.categorical_columns,
        preprocess,
    })
}

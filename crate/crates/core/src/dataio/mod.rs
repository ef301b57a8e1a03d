//! Dataset ingestion: CSV parsing, mean imputation, one-hot encoding,
//! standardization and train/test splitting.

mod dataset;
mod manifest;
mod scale;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use dataset::{encode, split_indices, test_size, train_test_split, Dataset};
pub use manifest::{prepare, DatasetManifest, PreparedData};
pub use scale::{standardize, ScalerParams};
pub use table::{
    impute_mean, load_csv, parse_csv, Column, ColumnKind, CsvOptions, RawTable, Value,
    DEFAULT_MISSING_TOKENS,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV has no header or no data rows")]
    Empty,
    #[error("label column `{0}` not found in header")]
    LabelAbsent(String),
    #[error("label column `{0}` is not numeric")]
    CategoricalLabel(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` has no observed values to impute from")]
    AllMissing(String),
    #[error("column `{0}` still has missing values; impute before encoding")]
    UnimputedMissing(String),
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("test fraction {0} outside (0, 1)")]
    SplitFraction(f64),
    #[error("splitting {n} rows with test fraction {test_fraction} leaves an empty part")]
    EmptySplit { n: usize, test_fraction: f64 },
    #[error("dataset contains non-finite values")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
}

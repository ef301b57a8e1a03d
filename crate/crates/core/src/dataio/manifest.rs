use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::table::{impute_mean, load_csv, CsvOptions, RawTable, DEFAULT_MISSING_TOKENS};
use super::{encode, standardize, train_test_split, DataError, Dataset, ScalerParams};

/// JSON description of a dataset on disk.
///
/// Relative `path`s resolve against the directory of the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub name: Option<String>,
    pub path: PathBuf,
    pub label_column: String,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    #[serde(default)]
    pub categorical_columns: Option<Vec<String>>,
    #[serde(default)]
    pub drop_columns: Vec<String>,
}

fn default_missing_tokens() -> Vec<String> {
    DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect()
}

impl DatasetManifest {
    pub fn new(path: impl Into<PathBuf>, label_column: impl Into<String>) -> Self {
        Self {
            name: None,
            path: path.into(),
            label_column: label_column.into(),
            missing_tokens: default_missing_tokens(),
            categorical_columns: None,
            drop_columns: Vec::new(),
        }
    }

    /// Reads a manifest and resolves its data path.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(DataError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| DataError::Manifest {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        if manifest.path.is_relative() {
            if let Some(dir) = path.parent() {
                manifest.path = dir.join(&manifest.path);
            }
        }
        if manifest.name.is_none() {
            manifest.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned());
        }
        Ok(manifest)
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions::new(self.label_column.clone())
            .missing_tokens(self.missing_tokens.iter().cloned())
            .categorical(self.categorical_columns.iter().flatten().cloned())
            .drop(self.drop_columns.iter().cloned())
    }

    pub fn load_table(&self) -> Result<RawTable, DataError> {
        load_csv(&self.path, &self.csv_options())
    }

    /// load, impute, encode. No scaling.
    pub fn load(&self) -> Result<Dataset, DataError> {
        let table = impute_mean(&self.load_table()?)?;
        encode(&table)
    }
}

/// Train/test data after the full ingestion pipeline.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    /// Present when features were standardized; fitted on `train` only.
    pub scaler: Option<ScalerParams>,
}

/// Splits, then (optionally) standardizes with a scaler fitted on the training part.
pub fn prepare(
    data: &Dataset,
    test_fraction: f64,
    split_seed: u64,
    normalize: bool,
) -> Result<PreparedData, DataError> {
    let (train, test) = train_test_split(data, test_fraction, split_seed)?;
    if !normalize {
        return Ok(PreparedData {
            train,
            test,
            scaler: None,
        });
    }
    let (train, scaler) = standardize(&train)?;
    let test = scaler.transform(&test)?;
    Ok(PreparedData {
        train,
        test,
        scaler: Some(scaler),
    })
}

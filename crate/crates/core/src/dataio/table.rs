use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Missing-value tokens used when a manifest does not override them.
pub const DEFAULT_MISSING_TOKENS: [&str; 3] = ["?", "", "NA"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// A single parsed cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

/// Options controlling how a CSV file is read into a [`RawTable`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    pub missing_tokens: HashSet<String>,
    /// Columns forced to be categorical even if every cell parses as a number.
    pub categorical_columns: BTreeSet<String>,
    /// Columns discarded right after parsing.
    pub drop_columns: BTreeSet<String>,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            missing_tokens: DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect(),
            categorical_columns: BTreeSet::new(),
            drop_columns: BTreeSet::new(),
        }
    }

    pub fn missing_tokens<I, S>(mut self, tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.missing_tokens = tokens.into_iter().map(Into::into).collect();
        self
    }

    pub fn categorical<I, S>(mut self, columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.categorical_columns = columns.into_iter().map(Into::into).collect();
        self
    }

    pub fn drop<I, S>(mut self, columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.drop_columns = columns.into_iter().map(Into::into).collect();
        self
    }
}

/// Parsed tabular data before encoding.
///
/// Every row has exactly `columns.len()` cells. A cell is [`Value::Missing`]
/// exactly where it matched a missing token or where a numeric column failed
/// to parse, so the missing mask is derived rather than stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
    pub label_index: usize,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn label_name(&self) -> &str {
        &self.columns[self.label_index].name
    }

    pub fn missing_mask(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|row| row.iter().map(Value::is_missing).collect())
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|v| v.is_missing()).count()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Reads a comma-separated file with a header row.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, options)
}

/// Parses CSV text (first row is the header).
pub fn parse_csv(text: &str, options: &CsvOptions) -> Result<RawTable, DataError> {
    if text.trim().is_empty() {
        return Err(DataError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(DataError::Empty);
    }

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() == 1 && record.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                line: i + 2,
                expected: header.len(),
                found: record.len(),
            });
        }
        raw_rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    if raw_rows.is_empty() {
        return Err(DataError::Empty);
    }

    let keep: Vec<usize> = (0..header.len())
        .filter(|&j| !options.drop_columns.contains(&header[j]))
        .collect();

    let mut columns = Vec::with_capacity(keep.len());
    for &j in &keep {
        let name = header[j].clone();
        let forced = options.categorical_columns.contains(&name);
        let non_numeric = raw_rows.iter().any(|row| {
            let cell = &row[j];
            !options.missing_tokens.contains(cell) && cell.parse::<f64>().is_err()
        });
        let kind = if forced || non_numeric {
            ColumnKind::Categorical
        } else {
            ColumnKind::Numeric
        };
        columns.push(Column { name, kind });
    }

    let label_index = columns
        .iter()
        .position(|c| c.name == options.label_column)
        .ok_or_else(|| DataError::LabelAbsent(options.label_column.clone()))?;
    if columns[label_index].kind == ColumnKind::Categorical {
        return Err(DataError::CategoricalLabel(options.label_column.clone()));
    }

    let rows = raw_rows
        .iter()
        .map(|row| {
            keep.iter()
                .zip(&columns)
                .map(|(&j, col)| {
                    let cell = &row[j];
                    if options.missing_tokens.contains(cell) {
                        return Value::Missing;
                    }
                    match col.kind {
                        ColumnKind::Numeric => cell
                            .parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .map_or(Value::Missing, Value::Number),
                        ColumnKind::Categorical => Value::Text(cell.clone()),
                    }
                })
                .collect()
        })
        .collect();

    Ok(RawTable {
        columns,
        rows,
        label_index,
    })
}

/// Replaces every missing numeric cell with the mean of the observed cells in
/// its column. Missing categorical cells are left for the encoder, which maps
/// them to an all-zero indicator block.
pub fn impute_mean(table: &RawTable) -> Result<RawTable, DataError> {
    let mut out = table.clone();
    for (j, col) in table.columns.iter().enumerate() {
        if col.kind != ColumnKind::Numeric {
            continue;
        }
        let observed: Vec<f64> = table
            .rows
            .iter()
            .filter_map(|row| match row[j] {
                Value::Number(v) => Some(v),
                _ => None,
            })
            .collect();
        if observed.len() == table.rows.len() {
            continue;
        }
        if observed.is_empty() {
            return Err(DataError::AllMissing(col.name.clone()));
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for row in &mut out.rows {
            if row[j].is_missing() {
                row[j] = Value::Number(mean);
            }
        }
    }
    Ok(out)
}

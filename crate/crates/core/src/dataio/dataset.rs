use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::table::{ColumnKind, RawTable, Value};
use super::DataError;

/// Canonical design matrix plus labels, with one-hot encoded categoricals.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: DVector<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let (n, d) = features.shape();
        if n == 0 || d == 0 {
            return Err(DataError::Shape(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if labels.len() != n {
            return Err(DataError::Shape(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if feature_names.len() != d {
            return Err(DataError::Shape(format!(
                "{} feature names for {d} columns",
                feature_names.len()
            )));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Builds a dataset with generated feature names `x0, x1, ...`.
    pub fn from_parts(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self, DataError> {
        let names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(features, labels, names)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in the given order. Callers guarantee indices are in range.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: self.labels.select_rows(indices),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// One-hot encodes categorical columns and separates the label.
///
/// Each categorical column expands to one indicator per distinct level (sorted),
/// named `column=level`; no level is dropped. A missing categorical cell gets
/// all-zero indicators. Numeric cells must already be imputed.
pub fn encode(table: &RawTable) -> Result<Dataset, DataError> {
    let n = table.n_rows();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let mut labels = Vec::with_capacity(n);

    for row in &table.rows {
        match &row[table.label_index] {
            Value::Number(v) => labels.push(*v),
            _ => return Err(DataError::UnimputedMissing(table.label_name().to_string())),
        }
    }

    for (j, col) in table.columns.iter().enumerate() {
        if j == table.label_index {
            continue;
        }
        match col.kind {
            ColumnKind::Numeric => {
                let mut values = Vec::with_capacity(n);
                for row in &table.rows {
                    match row[j] {
                        Value::Number(v) => values.push(v),
                        _ => return Err(DataError::UnimputedMissing(col.name.clone())),
                    }
                }
                cols.push(values);
                names.push(col.name.clone());
            }
            ColumnKind::Categorical => {
                let levels: BTreeSet<&str> = table
                    .rows
                    .iter()
                    .filter_map(|row| match &row[j] {
                        Value::Text(s) => Some(s.as_str()),
                        Value::Number(_) | Value::Missing => None,
                    })
                    .collect();
                for level in levels {
                    cols.push(
                        table
                            .rows
                            .iter()
                            .map(|row| match &row[j] {
                                Value::Text(s) if s == level => 1.0,
                                _ => 0.0,
                            })
                            .collect(),
                    );
                    names.push(format!("{}={level}", col.name));
                }
            }
        }
    }

    let d = cols.len();
    let features = DMatrix::from_fn(n, d, |i, j| cols[j][i]);
    Dataset::new(features, DVector::from_vec(labels), names)
}

/// Number of test rows for a split: `floor(n * fraction)`, at least one.
pub fn test_size(n: usize, test_fraction: f64) -> usize {
    ((n as f64 * test_fraction).floor() as usize).max(1)
}

/// Seeded random partition into `(train, test)`.
pub fn train_test_split(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::SplitFraction(test_fraction));
    }
    let n = data.n();
    let n_test = test_size(n, test_fraction);
    if n_test >= n {
        return Err(DataError::EmptySplit { n, test_fraction });
    }
    let (train_idx, test_idx) = split_indices(n, n_test, seed);
    Ok((data.select_rows(&train_idx), data.select_rows(&test_idx)))
}

/// Shuffled index partition; both halves are returned in ascending order.
pub fn split_indices(n: usize, n_test: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::table::{impute_mean, parse_csv, CsvOptions};

    fn toy(n: usize) -> Dataset {
        Dataset::from_parts(
            DMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64),
            DVector::from_fn(n, |i, _| i as f64),
        )
        .unwrap()
    }

    #[test]
    fn one_hot_without_drop_first() {
        let t = parse_csv("c,x,y\nb,1,1\na,2,2\nb,3,3", &CsvOptions::new("y")).unwrap();
        let d = encode(&t).unwrap();
        assert_eq!(d.feature_names, vec!["c=a", "c=b", "x"]);
        assert_eq!(d.features.column(0).as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(d.features.column(1).as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(d.labels.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_category_is_zero_block() {
        let t = parse_csv("c,y\na,1\n?,2\nb,3", &CsvOptions::new("y")).unwrap();
        let t = impute_mean(&t).unwrap();
        let d = encode(&t).unwrap();
        assert_eq!(d.features.row(1).iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn encode_rejects_unimputed() {
        let t = parse_csv("x,y\n1,1\n?,2", &CsvOptions::new("y")).unwrap();
        assert!(matches!(encode(&t), Err(DataError::UnimputedMissing(_))));
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = train_test_split(&toy(10), 0.2, 7).unwrap();
        assert_eq!((tr.n(), te.n()), (8, 2));
        let (tr, te) = train_test_split(&toy(24), 0.25, 7).unwrap();
        assert_eq!((tr.n(), te.n()), (18, 6));
        // floor rule with the minimum of one test row
        let (tr, te) = train_test_split(&toy(3), 0.1, 7).unwrap();
        assert_eq!((tr.n(), te.n()), (2, 1));
    }

    #[test]
    fn split_is_deterministic_partition() {
        let data = toy(37);
        let a = train_test_split(&data, 0.3, 11).unwrap();
        let b = train_test_split(&data, 0.3, 11).unwrap();
        assert_eq!(a, b);
        let (tr, te) = split_indices(37, 11, 11);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            train_test_split(&toy(10), 0.0, 1),
            Err(DataError::SplitFraction(_))
        ));
        assert!(matches!(
            train_test_split(&toy(10), 1.0, 1),
            Err(DataError::SplitFraction(_))
        ));
        assert!(matches!(
            train_test_split(&toy(1), 0.5, 1),
            Err(DataError::EmptySplit { .. })
        ));
    }

    #[test]
    fn dataset_rejects_non_finite() {
        let r = Dataset::from_parts(DMatrix::from_element(2, 1, f64::NAN), DVector::zeros(2));
        assert!(matches!(r, Err(DataError::NonFinite)));
    }
}

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Scalar};

/// Kind of a table column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Str,
    Num,
    Time,
}

impl ColumnKind {
    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::Str => "string",
            ColumnKind::Num => "numeric",
            ColumnKind::Time => "timestamp",
        }
    }
}

/// A typed column; `None` cells are missing values.
#[derive(Debug, Clone, PartialEq)]
pub enum Column<F> {
    Str(Vec<Option<String>>),
    Num(Vec<Option<F>>),
    Time(Vec<Option<DateTime<Utc>>>),
}

impl<F: Scalar> Column<F> {
    pub fn len(&self) -> usize {
        match self {
            Column::Str(v) => v.len(),
            Column::Num(v) => v.len(),
            Column::Time(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Str(_) => ColumnKind::Str,
            Column::Num(_) => ColumnKind::Num,
            Column::Time(_) => ColumnKind::Time,
        }
    }

    fn subset(&self, rows: &[usize]) -> Column<F> {
        match self {
            Column::Str(v) => Column::Str(rows.iter().map(|&i| v[i].clone()).collect()),
            Column::Num(v) => Column::Num(rows.iter().map(|&i| v[i]).collect()),
            Column::Time(v) => Column::Time(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Borrowed view of a single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a, F> {
    Missing,
    Str(&'a str),
    Num(F),
    Time(DateTime<Utc>),
}

/// In-memory columnar table with uniquely named, equal-length columns and an
/// optional designated target column.
#[derive(Debug, Clone, Default)]
pub struct DataTable<F> {
    names: Vec<String>,
    cols: Vec<Column<F>>,
    index: BTreeMap<String, usize>,
    target: Option<String>,
    rows: usize,
}

impl<F: Scalar> DataTable<F> {
    pub fn new() -> Self {
        DataTable {
            names: Vec::new(),
            cols: Vec::new(),
            index: BTreeMap::new(),
            target: None,
            rows: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Column names in insertion order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn kind(&self, name: &str) -> Result<ColumnKind, Error> {
        Ok(self.column(name)?.kind())
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    /// Designates `name` as the target column.
    pub fn set_target(&mut self, name: &str) -> Result<(), Error> {
        if !self.contains(name) {
            return Err(Error::UnknownColumn(name.to_string()));
        }
        self.target = Some(name.to_string());
        Ok(())
    }

    pub fn add_column(&mut self, name: &str, col: Column<F>) -> Result<(), Error> {
        if self.contains(name) {
            return Err(Error::DuplicateColumn {
                column: name.to_string(),
            });
        }
        if !self.cols.is_empty() && col.len() != self.rows {
            return Err(Error::RaggedColumn {
                column: name.to_string(),
                len: col.len(),
                expected: self.rows,
            });
        }
        if self.cols.is_empty() {
            self.rows = col.len();
        }
        self.index.insert(name.to_string(), self.cols.len());
        self.names.push(name.to_string());
        self.cols.push(col);
        Ok(())
    }

    pub fn add_str(&mut self, name: &str, vals: Vec<Option<String>>) -> Result<(), Error> {
        self.add_column(name, Column::Str(vals))
    }

    pub fn add_num(&mut self, name: &str, vals: Vec<Option<F>>) -> Result<(), Error> {
        self.add_column(name, Column::Num(vals))
    }

    pub fn add_time(&mut self, name: &str, vals: Vec<Option<DateTime<Utc>>>) -> Result<(), Error> {
        self.add_column(name, Column::Time(vals))
    }

    /// Replaces an existing column, keeping its position.
    pub fn replace_column(&mut self, name: &str, col: Column<F>) -> Result<(), Error> {
        let idx = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        if col.len() != self.rows {
            return Err(Error::RaggedColumn {
                column: name.to_string(),
                len: col.len(),
                expected: self.rows,
            });
        }
        self.cols[idx] = col;
        Ok(())
    }

    pub fn drop_column(&mut self, name: &str) -> Result<(), Error> {
        let idx = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        self.names.remove(idx);
        self.cols.remove(idx);
        self.index.remove(name);
        for v in self.index.values_mut() {
            if *v > idx {
                *v -= 1;
            }
        }
        if self.target.as_deref() == Some(name) {
            self.target = None;
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&Column<F>, Error> {
        self.index
            .get(name)
            .map(|&i| &self.cols[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn num(&self, name: &str) -> Result<&[Option<F>], Error> {
        match self.column(name)? {
            Column::Num(v) => Ok(v),
            other => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "numeric",
                actual: other.kind().name(),
            }),
        }
    }

    pub fn str_col(&self, name: &str) -> Result<&[Option<String>], Error> {
        match self.column(name)? {
            Column::Str(v) => Ok(v),
            other => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "string",
                actual: other.kind().name(),
            }),
        }
    }

    pub fn time_col(&self, name: &str) -> Result<&[Option<DateTime<Utc>>], Error> {
        match self.column(name)? {
            Column::Time(v) => Ok(v),
            other => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "timestamp",
                actual: other.kind().name(),
            }),
        }
    }

    /// Cell view at (`name`, `row`).
    pub fn value(&self, name: &str, row: usize) -> Result<Value<'_, F>, Error> {
        Ok(match self.column(name)? {
            Column::Str(v) => match &v[row] {
                Some(s) => Value::Str(s),
                None => Value::Missing,
            },
            Column::Num(v) => match v[row] {
                Some(x) => Value::Num(x),
                None => Value::Missing,
            },
            Column::Time(v) => match v[row] {
                Some(t) => Value::Time(t),
                None => Value::Missing,
            },
        })
    }

    /// Target values as a dense vector; errors on missing cells.
    pub fn target_values(&self) -> Result<Vec<F>, Error> {
        let name = self.target.as_deref().ok_or(Error::NoTarget)?;
        let col = self.num(name)?;
        col.iter()
            .enumerate()
            .map(|(row, v)| {
                v.ok_or_else(|| Error::MissingTarget {
                    column: name.to_string(),
                    row,
                })
            })
            .collect()
    }

    /// New table holding the given rows, preserving the target designation.
    pub fn subset(&self, rows: &[usize]) -> DataTable<F> {
        let mut out = DataTable::new();
        out.rows = rows.len();
        for (name, col) in self.names.iter().zip(&self.cols) {
            out.index.insert(name.clone(), out.cols.len());
            out.names.push(name.clone());
            out.cols.push(col.subset(rows));
        }
        out.target = self.target.clone();
        out
    }
}

/// Splits `table` into disjoint train and tune partitions.
///
/// The split shuffles row indices with a generator seeded by `seed`, so it is
/// deterministic for a given `(table, tune_fraction, seed)`. The tune side
/// receives `floor(rows * tune_fraction)` rows (at least one).
pub fn split_train_tune<F: Scalar>(
    table: &DataTable<F>,
    tune_fraction: f64,
    seed: u64,
) -> Result<(DataTable<F>, DataTable<F>), Error> {
    if !(tune_fraction > 0.0 && tune_fraction < 1.0) {
        return Err(Error::BadTuneFraction(tune_fraction));
    }
    let n = table.rows();
    if n < 10 {
        return Err(Error::TooFewRows { min: 10, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let tune_n = ((n as f64 * tune_fraction).floor() as usize).max(1);
    let (tune_rows, train_rows) = idx.split_at(tune_n);
    let mut train_rows = train_rows.to_vec();
    let mut tune_rows = tune_rows.to_vec();
    train_rows.sort_unstable();
    tune_rows.sort_unstable();
    Ok((table.subset(&train_rows), table.subset(&tune_rows)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table(n: usize) -> DataTable<f64> {
        let mut t = DataTable::new();
        t.add_num("x", (0..n).map(|i| Some(i as f64)).collect())
            .unwrap();
        t.add_str("s", (0..n).map(|i| Some(format!("v{}", i % 3))).collect())
            .unwrap();
        t.set_target("x").unwrap();
        t
    }

    #[test]
    fn split_is_a_partition_with_expected_sizes() {
        let t = sample_table(100);
        let (train, tune) = split_train_tune(&t, 0.2, 7).unwrap();
        assert_eq!(train.rows(), 80);
        assert_eq!(tune.rows(), 20);
        let mut seen: Vec<f64> = train
            .num("x")
            .unwrap()
            .iter()
            .chain(tune.num("x").unwrap())
            .map(|v| v.unwrap())
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let t = sample_table(50);
        let (a, _) = split_train_tune(&t, 0.3, 42).unwrap();
        let (b, _) = split_train_tune(&t, 0.3, 42).unwrap();
        assert_eq!(a.num("x").unwrap(), b.num("x").unwrap());
        let (c, _) = split_train_tune(&t, 0.3, 43).unwrap();
        assert_ne!(a.num("x").unwrap(), c.num("x").unwrap());
    }

    #[test]
    fn split_rejects_bad_arguments() {
        let t = sample_table(9);
        assert!(matches!(
            split_train_tune(&t, 0.2, 1),
            Err(Error::TooFewRows { min: 10, got: 9 })
        ));
        let t = sample_table(20);
        assert!(matches!(
            split_train_tune(&t, 0.0, 1),
            Err(Error::BadTuneFraction(_))
        ));
        assert!(matches!(
            split_train_tune(&t, 1.0, 1),
            Err(Error::BadTuneFraction(_))
        ));
    }

    #[test]
    fn duplicate_and_ragged_columns_are_rejected() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_num("x", vec![Some(1.0), Some(2.0)]).unwrap();
        assert!(matches!(
            t.add_num("x", vec![Some(1.0), Some(2.0)]),
            Err(Error::DuplicateColumn { .. })
        ));
        assert!(matches!(
            t.add_num("y", vec![Some(1.0)]),
            Err(Error::RaggedColumn { .. })
        ));
    }

    #[test]
    fn target_values_require_completeness() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_num("y", vec![Some(1.0), None]).unwrap();
        t.set_target("y").unwrap();
        assert!(matches!(
            t.target_values(),
            Err(Error::MissingTarget { row: 1, .. })
        ));
    }
}

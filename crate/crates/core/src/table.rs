//! Dense row-stochastic tables and categorical sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("table shape {rows}x{cols} does not match {len} values")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    BadEntry { row: usize, col: usize, value: f64 },
}

/// A `rows x cols` table of conditional distributions, one per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct CondTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawTable> for CondTable {
    type Error = TableError;
    fn try_from(raw: RawTable) -> Result<Self, TableError> {
        CondTable::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<CondTable> for RawTable {
    fn from(t: CondTable) -> Self {
        RawTable { rows: t.rows, cols: t.cols, data: t.data }
    }
}

impl CondTable {
    /// Builds a table and checks that every row is a probability vector.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TableError> {
        let t = CondTable { rows, cols, data };
        t.validate()?;
        Ok(t)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TableError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(TableError::Shape { rows: rows.len(), cols, len: r.len() });
            }
            data.extend_from_slice(r);
        }
        CondTable::new(rows.len(), cols, data)
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        CondTable { rows, cols, data: vec![1.0 / cols as f64; rows * cols] }
    }

    /// Every row is the point mass on `col_of(row)`.
    pub fn deterministic(rows: usize, cols: usize, col_of: impl Fn(usize) -> usize) -> Self {
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            data[r * cols + col_of(r)] = 1.0;
        }
        CondTable { rows, cols, data }
    }

    /// Renormalizes each row of nonnegative weights; all-zero rows become uniform.
    pub fn from_weights(rows: usize, cols: usize, mut data: Vec<f64>) -> Result<Self, TableError> {
        if data.len() != rows * cols {
            return Err(TableError::Shape { rows, cols, len: data.len() });
        }
        for row in data.chunks_mut(cols) {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / cols as f64);
            }
        }
        CondTable::new(rows, cols, data)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        if self.cols == 0 || self.data.len() != self.rows * self.cols {
            return Err(TableError::Shape { rows: self.rows, cols: self.cols, len: self.data.len() });
        }
        for (r, row) in self.data.chunks(self.cols).enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(TableError::BadEntry { row: r, col: c, value: v });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL * self.cols.max(1) as f64 {
                return Err(TableError::RowSum { row: r, sum });
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Replaces one row; the caller is responsible for keeping it stochastic.
    pub(crate) fn set_row(&mut self, r: usize, values: &[f64]) {
        self.data[r * self.cols..(r + 1) * self.cols].copy_from_slice(values);
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest absolute difference between two equally shaped tables.
    pub fn max_abs_diff(&self, other: &CondTable) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Draws an index from a probability vector by inversion.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

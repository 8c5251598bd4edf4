//! Two-way tables of counts and of cell probabilities.
//!
//! Cells are stored row-major, `(1,1), (1,2), ..., (1,c), (2,1), ..., (r,c)`.
//! Every gradient and Hessian in [`crate::calculus`] is indexed the same way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the sum of a probability grid read from user input.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    rows: usize,
    cols: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::TooSmall { rows, cols });
        }
        Ok(Dims { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of cells, `rc`.
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// Observed counts `n_ij` with total `n >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountTable {
    dims: Dims,
    counts: Vec<u64>,
    total: u64,
}

impl CountTable {
    pub fn new(dims: Dims, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != dims.cells() {
            return Err(Error::LengthMismatch {
                expected: dims.cells(),
                found: counts.len(),
            });
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::AllZeroTable);
        }
        Ok(CountTable {
            dims,
            counts,
            total,
        })
    }

    /// Build from a nested grid, one inner vector per row.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let dims = grid_dims(rows)?;
        Self::new(dims, rows.concat())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of observations `n`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[self.dims.index(row, col)]
    }

    /// CSV form accepted by [`parse_count_table`], with a trailing newline.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.counts.chunks(self.dims.cols) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct CountTableRepr {
    r: usize,
    c: usize,
    counts: Vec<u64>,
}

impl Serialize for CountTable {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        CountTableRepr {
            r: self.dims.rows,
            c: self.dims.cols,
            counts: self.counts.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CountTable {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = CountTableRepr::deserialize(deserializer)?;
        let dims = Dims::new(repr.r, repr.c).map_err(serde::de::Error::custom)?;
        CountTable::new(dims, repr.counts).map_err(serde::de::Error::custom)
    }
}

/// Cell probabilities on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    dims: Dims,
    probs: Vec<f64>,
}

impl ProbTable {
    /// Validates nonnegativity and a sum within [`PROB_SUM_TOLERANCE`] of 1,
    /// then renormalises by the sum.
    pub fn new(dims: Dims, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != dims.cells() {
            return Err(Error::LengthMismatch {
                expected: dims.cells(),
                found: probs.len(),
            });
        }
        for (idx, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidEntry {
                    row: idx / dims.cols,
                    col: idx % dims.cols,
                    value: p.to_string(),
                    reason: "probabilities must be finite and nonnegative",
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::SumOutOfTolerance { sum });
        }
        let probs = if sum == 1.0 {
            probs
        } else {
            probs.into_iter().map(|p| p / sum).collect()
        };
        Ok(ProbTable { dims, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dims = grid_dims(rows)?;
        Self::new(dims, rows.concat())
    }

    /// Normalises an arbitrary nonnegative weight vector with positive sum.
    pub fn from_weights(dims: Dims, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::SumOutOfTolerance { sum });
        }
        Self::new(dims, weights.into_iter().map(|w| w / sum).collect())
    }

    /// Trusted constructor for vectors that sum to one by construction.
    pub(crate) fn from_simplex(dims: Dims, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), dims.cells());
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        ProbTable { dims, probs }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.probs[self.dims.index(row, col)]
    }

    /// Row marginals `p_i.`.
    pub fn row_marginals(&self) -> Vec<f64> {
        row_sums(self.dims, &self.probs)
    }

    /// Column marginals `p_.j`.
    pub fn col_marginals(&self) -> Vec<f64> {
        col_sums(self.dims, &self.probs)
    }

    /// Product of the marginals, `p_i. * p_.j`.
    pub fn independence(&self) -> ProbTable {
        let rows = self.row_marginals();
        let cols = self.col_marginals();
        let probs = rows
            .iter()
            .flat_map(|a| cols.iter().map(move |b| a * b))
            .collect();
        ProbTable {
            dims: self.dims,
            probs,
        }
    }

    pub fn transpose(&self) -> ProbTable {
        let (r, c) = (self.dims.rows, self.dims.cols);
        let dims = Dims { rows: c, cols: r };
        let mut probs = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                probs[dims.index(j, i)] = self.probs[self.dims.index(i, j)];
            }
        }
        ProbTable { dims, probs }
    }
}

#[derive(Serialize)]
struct ProbTableRepr<'a> {
    r: usize,
    c: usize,
    probs: &'a [f64],
}

impl Serialize for ProbTable {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        ProbTableRepr {
            r: self.dims.rows,
            c: self.dims.cols,
            probs: &self.probs,
        }
        .serialize(serializer)
    }
}

pub(crate) fn row_sums(dims: Dims, values: &[f64]) -> Vec<f64> {
    values
        .chunks(dims.cols)
        .map(|row| row.iter().sum())
        .collect()
}

pub(crate) fn col_sums(dims: Dims, values: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; dims.cols];
    for row in values.chunks(dims.cols) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    sums
}

fn grid_dims<T>(rows: &[Vec<T>]) -> Result<Dims> {
    let cols = rows.first().map_or(0, Vec::len);
    for (row, values) in rows.iter().enumerate() {
        if values.len() != cols {
            return Err(Error::RaggedRows {
                row,
                expected: cols,
                found: values.len(),
            });
        }
    }
    Dims::new(rows.len(), cols)
}

fn read_grid(text: &str) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

/// Parse a header-less CSV grid of nonnegative integer counts.
pub fn parse_count_table(text: &str) -> Result<CountTable> {
    let grid = read_grid(text)?;
    let mut rows = Vec::with_capacity(grid.len());
    for (i, fields) in grid.iter().enumerate() {
        let mut row = Vec::with_capacity(fields.len());
        for (j, field) in fields.iter().enumerate() {
            let value = field.parse::<u64>().map_err(|_| Error::InvalidEntry {
                row: i,
                col: j,
                value: field.clone(),
                reason: match field.parse::<f64>() {
                    Ok(v) if v < 0.0 => "counts must be nonnegative",
                    Ok(_) => "counts must be integers",
                    Err(_) => "not a number",
                },
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    CountTable::from_rows(&rows)
}

/// Parse a header-less CSV grid of cell probabilities summing to one.
pub fn parse_prob_table(text: &str) -> Result<ProbTable> {
    let grid = read_grid(text)?;
    let mut rows = Vec::with_capacity(grid.len());
    for (i, fields) in grid.iter().enumerate() {
        let mut row = Vec::with_capacity(fields.len());
        for (j, field) in fields.iter().enumerate() {
            let value = field.parse::<f64>().map_err(|_| Error::InvalidEntry {
                row: i,
                col: j,
                value: field.clone(),
                reason: "not a number",
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidEntry {
                    row: i,
                    col: j,
                    value: field.clone(),
                    reason: "probabilities must be finite and nonnegative",
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    ProbTable::from_rows(&rows)
}

/// `n_ij / n`.
pub fn sample_proportions(table: &CountTable) -> ProbTable {
    let n = table.total as f64;
    let probs = table.counts.iter().map(|&c| c as f64 / n).collect();
    ProbTable::from_simplex(table.dims, probs)
}

/// Posterior mean under a symmetric Dirichlet(alpha) prior,
/// `(n_ij + alpha) / (n + rc * alpha)`.
pub fn posterior_mean(table: &CountTable, alpha: f64) -> Result<ProbTable> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::NegativeAlpha(alpha));
    }
    let denom = table.total as f64 + table.dims.cells() as f64 * alpha;
    let probs = table
        .counts
        .iter()
        .map(|&c| (c as f64 + alpha) / denom)
        .collect();
    Ok(ProbTable::from_simplex(table.dims, probs))
}
